#pragma once

#include <filesystem>
#include <map>

#include "fusdom/config.hpp"
#include "fusdom/dataset_io.hpp"
#include "fusdom/report.hpp"
#include "fusdom/trainer.hpp"

namespace fusdom {

/// One domain's generated corpus, in memory and on disk.
struct DomainBundle {
  DomainSpec spec;
  CorpusPaths paths;
  Dataset pretrain;
  Dataset train;
  Dataset dev;
  Dataset test;
};

/// Generates (and writes) the corpora for every preset the config touches,
/// then loads them back so training consumes exactly the bytes on disk.
/// Asserts that distinct presets are genuinely distinct transforms.
std::map<std::string, DomainBundle> generate_corpora(const ExperimentConfig& cfg);

struct RunResult {
  ExperimentReport report;
  bool all_ok = true;
  std::filesystem::path csv_path;
  std::filesystem::path json_path;
};

/// Executes the configured recipe (r1: CP on target, evaluate on target;
/// r2: CP on target, evaluate on source; r3: two-stage sequential CP in both
/// orders, evaluate everywhere) over every (arm, seed), writing datasets,
/// checkpoints and both report files under cfg.out_dir.
RunResult run_experiment(const ExperimentConfig& cfg);

}  // namespace fusdom
