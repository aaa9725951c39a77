#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusdom/backbone.hpp"
#include "fusdom/datagen.hpp"

namespace fusdom {

struct DataConfig {
  std::uint64_t master_seed = 20240701;
  std::string source_preset = "source";
  std::vector<std::string> target_presets = {"shifted", "bursty"};
  DomainKnobs knobs;
  int pretrain_n_source = 400;
  int pretrain_n_target = 200;  // consumed by the CP stages
  int train_n = 120;
  int dev_n = 30;
  int test_n = 30;
};

struct PhaseConfig {
  int epochs = 0;
  int batch_size = 8;
  double lr = 0.0;
};

struct ExperimentConfig {
  std::string out_dir = "fusdom-out";
  BackboneConfig backbone;  // {32, 4, 2, 64, 64, 16}
  DataConfig data;
  double mask_rate = 0.3;
  bool mask_teacher = true;
  PhaseConfig pretrain{60, 8, 5e-4};
  PhaseConfig cp{30, 8, 5e-4};
  PhaseConfig finetune{40, 8, 1e-3};
  std::vector<std::string> arms = {"NoCP", "VanillaCP", "FusDom"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::string recipe = "r1";

  void validate() const;
};

/// Strict parse: unknown keys are errors (named in the message), syntax
/// errors report line and column, defaults are materialised into the result.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

/// Full JSON echo of a materialised config; re-parses to an equal config.
std::string echo_config(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace fusdom
