#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusdom/downstream.hpp"

namespace fusdom {

struct ReportRow {
  std::string arm;
  std::uint64_t seed = 0;
  std::string cp_order;  // "-" for no CP, else "domain" or "a->b"
  std::string finetune_domain;
  std::string eval_domain;
  std::string mode;    // "e2e" or "probe"
  std::string status;  // "ok" or "failed:<reason>"
  EvalResult eval;
  bool has_pretext = false;
  double pretext_final_loss = 0.0;
  double wall_clock_sec = 0.0;  // structured document only, never in the table
  std::string checkpoint;
};

struct ExperimentReport {
  int schema_version = 1;
  std::string recipe;
  std::string config_echo_json;
  std::vector<ReportRow> rows;
};

/// Deterministic delimiter-separated table (no wall-clock fields).
void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path);

/// Structured document: config echo, optimizer constants, rows including
/// wall clock, and the summary block (per-arm stats, forgetting deltas,
/// pairwise arm deltas).
void write_report_json(const ExperimentReport& report, const std::filesystem::path& path);

ExperimentReport load_report_json(const std::filesystem::path& path);

/// Aggregate table over one or more reports: per-arm mean/min/max WER, mean
/// forgetting delta, pairwise arm deltas (absolute and relative percent).
std::string summarize_reports(const std::vector<ExperimentReport>& reports);

/// (baseline - candidate, 100 * (baseline - candidate) / baseline)
std::pair<double, double> improvement(double baseline_wer, double candidate_wer);

std::string format_double_shortest(double v);

}  // namespace fusdom
