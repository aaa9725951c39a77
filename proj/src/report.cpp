#include "fusdom/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fusdom {

using nlohmann::json;

std::string format_double_shortest(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw IoError("failed to format a double");
  return std::string(buf.data(), ptr);
}

std::pair<double, double> improvement(double baseline_wer, double candidate_wer) {
  const double absolute = baseline_wer - candidate_wer;
  const double relative = baseline_wer != 0.0 ? 100.0 * absolute / baseline_wer : 0.0;
  return {absolute, relative};
}

namespace {

constexpr const char* kCsvHeader =
    "arm,seed,cp_order,finetune_domain,eval_domain,mode,status,wer,substitutions,"
    "insertions,deletions,n_ref_tokens,pretext_final_loss,checkpoint";

struct ArmStats {
  std::vector<double> wers;
  double mean() const {
    double s = 0.0;
    for (double w : wers) s += w;
    return wers.empty() ? 0.0 : s / static_cast<double>(wers.size());
  }
  double min() const { return *std::min_element(wers.begin(), wers.end()); }
  double max() const { return *std::max_element(wers.begin(), wers.end()); }
};

// (arm, mode) -> stats over ok rows
std::map<std::pair<std::string, std::string>, ArmStats> collect_stats(
    const std::vector<ReportRow>& rows) {
  std::map<std::pair<std::string, std::string>, ArmStats> stats;
  for (const ReportRow& r : rows) {
    if (r.status != "ok") continue;
    stats[{r.arm, r.mode}].wers.push_back(r.eval.wer);
  }
  return stats;
}

// Forgetting delta per (arm, mode, seed): WER minus the matching NoCP row's
// WER on the same (seed, mode, eval_domain). Defined when NoCP rows exist.
std::map<std::pair<std::string, std::string>, std::vector<double>> forgetting_deltas(
    const std::vector<ReportRow>& rows) {
  std::map<std::tuple<std::uint64_t, std::string, std::string>, double> baseline;
  for (const ReportRow& r : rows) {
    if (r.status == "ok" && r.arm == "NoCP") {
      baseline[{r.seed, r.mode, r.eval_domain}] = r.eval.wer;
    }
  }
  std::map<std::pair<std::string, std::string>, std::vector<double>> deltas;
  if (baseline.empty()) return deltas;
  for (const ReportRow& r : rows) {
    if (r.status != "ok") continue;
    const auto it = baseline.find({r.seed, r.mode, r.eval_domain});
    if (it == baseline.end()) continue;
    deltas[{r.arm, r.mode}].push_back(r.eval.wer - it->second);
  }
  return deltas;
}

json summary_block(const std::vector<ReportRow>& rows) {
  json summary;
  auto stats = collect_stats(rows);
  json per_arm = json::object();
  for (const auto& [key, st] : stats) {
    per_arm[key.first][key.second] = {{"mean_wer", st.mean()},
                                      {"min_wer", st.min()},
                                      {"max_wer", st.max()},
                                      {"n", st.wers.size()}};
  }
  summary["per_arm"] = per_arm;

  json deltas = json::object();
  for (const auto& [key, ds] : forgetting_deltas(rows)) {
    double mean = 0.0;
    for (double d : ds) mean += d;
    mean /= static_cast<double>(ds.size());
    deltas[key.first][key.second] = {{"mean_delta", mean}, {"per_row", ds}};
  }
  summary["forgetting_delta"] = deltas;

  json pairwise = json::array();
  std::set<std::string> modes;
  std::set<std::string> arms;
  for (const auto& [key, st] : stats) {
    arms.insert(key.first);
    modes.insert(key.second);
  }
  for (const std::string& mode : modes) {
    for (const std::string& baseline : arms) {
      for (const std::string& candidate : arms) {
        if (baseline == candidate) continue;
        const auto bit = stats.find({baseline, mode});
        const auto cit = stats.find({candidate, mode});
        if (bit == stats.end() || cit == stats.end()) continue;
        const auto [abs_gain, rel_gain] = improvement(bit->second.mean(), cit->second.mean());
        pairwise.push_back({{"mode", mode},
                            {"baseline", baseline},
                            {"candidate", candidate},
                            {"absolute", abs_gain},
                            {"relative_pct", rel_gain}});
      }
    }
  }
  summary["pairwise"] = pairwise;
  return summary;
}

json row_to_json(const ReportRow& r) {
  json j = {{"arm", r.arm},
            {"seed", r.seed},
            {"cp_order", r.cp_order},
            {"finetune_domain", r.finetune_domain},
            {"eval_domain", r.eval_domain},
            {"mode", r.mode},
            {"status", r.status},
            {"wall_clock_sec", r.wall_clock_sec},
            {"checkpoint", r.checkpoint}};
  if (r.status == "ok") {
    j["wer"] = r.eval.wer;
    j["substitutions"] = r.eval.substitutions;
    j["insertions"] = r.eval.insertions;
    j["deletions"] = r.eval.deletions;
    j["n_ref_tokens"] = r.eval.n_ref_tokens;
  }
  if (r.has_pretext) j["pretext_final_loss"] = r.pretext_final_loss;
  return j;
}

ReportRow row_from_json(const json& j) {
  ReportRow r;
  r.arm = j.at("arm").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.cp_order = j.at("cp_order").get<std::string>();
  r.finetune_domain = j.at("finetune_domain").get<std::string>();
  r.eval_domain = j.at("eval_domain").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.wall_clock_sec = j.value("wall_clock_sec", 0.0);
  r.checkpoint = j.value("checkpoint", std::string());
  if (r.status == "ok") {
    r.eval.wer = j.at("wer").get<double>();
    r.eval.substitutions = j.at("substitutions").get<std::int64_t>();
    r.eval.insertions = j.at("insertions").get<std::int64_t>();
    r.eval.deletions = j.at("deletions").get<std::int64_t>();
    r.eval.n_ref_tokens = j.at("n_ref_tokens").get<std::int64_t>();
  }
  if (j.contains("pretext_final_loss")) {
    r.has_pretext = true;
    r.pretext_final_loss = j.at("pretext_final_loss").get<double>();
  }
  return r;
}

}  // namespace

void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "# fusdom-report v" << report.schema_version << " recipe=" << report.recipe
      << "\n";
  out << kCsvHeader << "\n";
  for (const ReportRow& r : report.rows) {
    out << r.arm << ',' << r.seed << ',' << r.cp_order << ',' << r.finetune_domain << ','
        << r.eval_domain << ',' << r.mode << ',' << r.status << ',';
    if (r.status == "ok") {
      out << format_double_shortest(r.eval.wer) << ',' << r.eval.substitutions << ','
          << r.eval.insertions << ',' << r.eval.deletions << ',' << r.eval.n_ref_tokens;
    } else {
      out << ",,,,";
    }
    out << ',';
    if (r.has_pretext) out << format_double_shortest(r.pretext_final_loss);
    out << ',' << r.checkpoint << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_report_json(const ExperimentReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  json root;
  root["schema_version"] = report.schema_version;
  root["recipe"] = report.recipe;
  root["config"] = json::parse(report.config_echo_json);
  root["adam"] = {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
  json rows = json::array();
  for (const ReportRow& r : report.rows) rows.push_back(row_to_json(r));
  root["rows"] = rows;
  root["summary"] = summary_block(report.rows);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << root.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

ExperimentReport load_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("report: malformed JSON in " + path.string() + ": " + e.what());
  }
  ExperimentReport report;
  report.schema_version = root.at("schema_version").get<int>();
  if (report.schema_version != 1) {
    throw VersionError("report schema version " + std::to_string(report.schema_version) +
                       " is not supported");
  }
  report.recipe = root.at("recipe").get<std::string>();
  report.config_echo_json = root.at("config").dump(2);
  for (const json& j : root.at("rows")) report.rows.push_back(row_from_json(j));
  return report;
}

std::string summarize_reports(const std::vector<ExperimentReport>& reports) {
  if (reports.empty()) throw ContractError("summarize: at least one report required");
  std::vector<ReportRow> rows;
  for (const ExperimentReport& r : reports) {
    if (r.schema_version != reports.front().schema_version) {
      throw VersionError("summarize: mixed report schema versions");
    }
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  }
  std::ostringstream out;
  out << "arm,mode,n,mean_wer,min_wer,max_wer,mean_forgetting_delta\n";
  auto stats = collect_stats(rows);
  auto deltas = forgetting_deltas(rows);
  for (const auto& [key, st] : stats) {
    out << key.first << ',' << key.second << ',' << st.wers.size() << ','
        << format_double_shortest(st.mean()) << ',' << format_double_shortest(st.min())
        << ',' << format_double_shortest(st.max()) << ',';
    const auto dit = deltas.find(key);
    if (dit != deltas.end()) {
      double mean = 0.0;
      for (double d : dit->second) mean += d;
      out << format_double_shortest(mean / static_cast<double>(dit->second.size()));
    }
    out << "\n";
  }
  out << "\nbaseline,candidate,mode,absolute,relative_pct\n";
  std::set<std::string> arms, modes;
  for (const auto& [key, st] : stats) {
    arms.insert(key.first);
    modes.insert(key.second);
  }
  for (const std::string& mode : modes) {
    for (const std::string& baseline : arms) {
      for (const std::string& candidate : arms) {
        if (baseline == candidate) continue;
        const auto bit = stats.find({baseline, mode});
        const auto cit = stats.find({candidate, mode});
        if (bit == stats.end() || cit == stats.end()) continue;
        const auto [abs_gain, rel_gain] =
            improvement(bit->second.mean(), cit->second.mean());
        out << baseline << ',' << candidate << ',' << mode << ','
            << format_double_shortest(abs_gain) << ','
            << format_double_shortest(rel_gain) << "\n";
      }
    }
  }
  return out.str();
}

}  // namespace fusdom
