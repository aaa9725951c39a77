#include "fusdom/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fusdom {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) {
      throw ConfigError("config: unknown key '" +
                        (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: key '" + std::string(key) + "' has the wrong type");
  }
}

void read_phase(const json& obj, const char* key, PhaseConfig& phase) {
  if (!obj.contains(key)) return;
  const json& p = obj.at(key);
  if (!p.is_object()) throw ConfigError("config: '" + std::string(key) + "' must be an object");
  reject_unknown_keys(p, {"epochs", "batch_size", "lr"}, key);
  read_field(p, "epochs", phase.epochs);
  read_field(p, "batch_size", phase.batch_size);
  read_field(p, "lr", phase.lr);
}

std::pair<int, int> line_col_of_offset(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

void ExperimentConfig::validate() const {
  backbone.validate();
  if (arms.empty()) throw ConfigError("config: at least one strategy arm is required");
  std::set<std::string> seen;
  for (const std::string& arm : arms) {
    if (arm != "NoCP" && arm != "VanillaCP" && arm != "FusDom") {
      throw ConfigError("config: unknown arm '" + arm + "'");
    }
    if (!seen.insert(arm).second) throw ConfigError("config: duplicate arm '" + arm + "'");
  }
  if (seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  if (recipe != "r1" && recipe != "r2" && recipe != "r3") {
    throw ConfigError("config: recipe must be one of r1, r2, r3");
  }
  if (mask_rate < 0.0 || mask_rate > 1.0) {
    throw ConfigError("config: mask_rate must be in [0, 1]");
  }
  if (backbone.frame_dim != data.knobs.frame_dim) {
    throw ConfigError("config: backbone.frame_dim (" + std::to_string(backbone.frame_dim) +
                      ") must equal data.frame_dim (" +
                      std::to_string(data.knobs.frame_dim) + ")");
  }
  if (data.knobs.max_tokens * data.knobs.frames_per_token > backbone.max_len) {
    throw ConfigError("config: max_tokens * frames_per_token exceeds backbone.max_len");
  }
  const auto known = known_presets();
  auto check_preset = [&](const std::string& p) {
    if (std::find(known.begin(), known.end(), p) == known.end()) {
      throw ConfigError("config: unknown domain preset '" + p + "'");
    }
  };
  check_preset(data.source_preset);
  if (data.target_presets.empty()) {
    throw ConfigError("config: at least one target preset is required");
  }
  for (const auto& p : data.target_presets) check_preset(p);
  if (recipe == "r3" && data.target_presets.size() < 2) {
    throw ConfigError("config: recipe r3 needs two target presets");
  }
  if (pretrain.epochs < 0 || cp.epochs < 0 || finetune.epochs < 0) {
    throw ConfigError("config: epochs must be >= 0");
  }
  if (pretrain.lr <= 0 || cp.lr <= 0 || finetune.lr <= 0) {
    throw ConfigError("config: learning rates must be positive");
  }
  if (pretrain.batch_size < 1 || cp.batch_size < 1 || finetune.batch_size < 1) {
    throw ConfigError("config: batch sizes must be >= 1");
  }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError("config: syntax error in " + origin + " at line " +
                      std::to_string(line) + ", column " + std::to_string(col));
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown_keys(root,
                      {"out_dir", "backbone", "data", "mask_rate", "mask_teacher",
                       "pretrain", "cp", "finetune", "arms", "seeds", "recipe"},
                      "");

  ExperimentConfig cfg;
  read_field(root, "out_dir", cfg.out_dir);
  read_field(root, "mask_rate", cfg.mask_rate);
  read_field(root, "mask_teacher", cfg.mask_teacher);
  read_field(root, "arms", cfg.arms);
  read_field(root, "seeds", cfg.seeds);
  read_field(root, "recipe", cfg.recipe);

  if (root.contains("backbone")) {
    const json& b = root.at("backbone");
    if (!b.is_object()) throw ConfigError("config: 'backbone' must be an object");
    reject_unknown_keys(b, {"d_model", "n_heads", "n_layers", "d_ffn", "max_len",
                            "frame_dim"},
                        "backbone");
    read_field(b, "d_model", cfg.backbone.d_model);
    read_field(b, "n_heads", cfg.backbone.n_heads);
    read_field(b, "n_layers", cfg.backbone.n_layers);
    read_field(b, "d_ffn", cfg.backbone.d_ffn);
    read_field(b, "max_len", cfg.backbone.max_len);
    read_field(b, "frame_dim", cfg.backbone.frame_dim);
  }
  if (root.contains("data")) {
    const json& d = root.at("data");
    if (!d.is_object()) throw ConfigError("config: 'data' must be an object");
    reject_unknown_keys(d,
                        {"master_seed", "source_preset", "target_presets", "vocab_size",
                         "frame_dim", "frames_per_token", "min_tokens", "max_tokens",
                         "pretrain_n_source", "pretrain_n_target", "train_n", "dev_n",
                         "test_n"},
                        "data");
    read_field(d, "master_seed", cfg.data.master_seed);
    read_field(d, "source_preset", cfg.data.source_preset);
    read_field(d, "target_presets", cfg.data.target_presets);
    read_field(d, "vocab_size", cfg.data.knobs.vocab_size);
    read_field(d, "frame_dim", cfg.data.knobs.frame_dim);
    read_field(d, "frames_per_token", cfg.data.knobs.frames_per_token);
    read_field(d, "min_tokens", cfg.data.knobs.min_tokens);
    read_field(d, "max_tokens", cfg.data.knobs.max_tokens);
    read_field(d, "pretrain_n_source", cfg.data.pretrain_n_source);
    read_field(d, "pretrain_n_target", cfg.data.pretrain_n_target);
    read_field(d, "train_n", cfg.data.train_n);
    read_field(d, "dev_n", cfg.data.dev_n);
    read_field(d, "test_n", cfg.data.test_n);
  }
  read_phase(root, "pretrain", cfg.pretrain);
  read_phase(root, "cp", cfg.cp);
  read_phase(root, "finetune", cfg.finetune);

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.string());
}

std::string echo_config(const ExperimentConfig& cfg) {
  json root;
  root["out_dir"] = cfg.out_dir;
  root["backbone"] = {{"d_model", cfg.backbone.d_model}, {"n_heads", cfg.backbone.n_heads},
                      {"n_layers", cfg.backbone.n_layers}, {"d_ffn", cfg.backbone.d_ffn},
                      {"max_len", cfg.backbone.max_len},
                      {"frame_dim", cfg.backbone.frame_dim}};
  root["data"] = {{"master_seed", cfg.data.master_seed},
                  {"source_preset", cfg.data.source_preset},
                  {"target_presets", cfg.data.target_presets},
                  {"vocab_size", cfg.data.knobs.vocab_size},
                  {"frame_dim", cfg.data.knobs.frame_dim},
                  {"frames_per_token", cfg.data.knobs.frames_per_token},
                  {"min_tokens", cfg.data.knobs.min_tokens},
                  {"max_tokens", cfg.data.knobs.max_tokens},
                  {"pretrain_n_source", cfg.data.pretrain_n_source},
                  {"pretrain_n_target", cfg.data.pretrain_n_target},
                  {"train_n", cfg.data.train_n},
                  {"dev_n", cfg.data.dev_n},
                  {"test_n", cfg.data.test_n}};
  root["mask_rate"] = cfg.mask_rate;
  root["mask_teacher"] = cfg.mask_teacher;
  root["pretrain"] = {{"epochs", cfg.pretrain.epochs}, {"batch_size", cfg.pretrain.batch_size},
                      {"lr", cfg.pretrain.lr}};
  root["cp"] = {{"epochs", cfg.cp.epochs}, {"batch_size", cfg.cp.batch_size},
                {"lr", cfg.cp.lr}};
  root["finetune"] = {{"epochs", cfg.finetune.epochs},
                      {"batch_size", cfg.finetune.batch_size}, {"lr", cfg.finetune.lr}};
  root["arms"] = cfg.arms;
  root["seeds"] = cfg.seeds;
  root["recipe"] = cfg.recipe;
  return root.dump(2);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return echo_config(a) == echo_config(b);
}

}  // namespace fusdom
