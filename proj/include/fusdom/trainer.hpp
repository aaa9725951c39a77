#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusdom/backbone.hpp"
#include "fusdom/head.hpp"

namespace fusdom {

enum class Strategy { NoCP, VanillaCP, FusDom };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct StagePlan {
  std::string domain_id;
  Strategy strategy = Strategy::VanillaCP;
  int epochs = 30;
  int batch_size = 8;
  double lr = 5e-4;
  double mask_rate = 0.3;
  bool mask_teacher = true;  // FusDom only: teacher input masked like the student's
  std::uint64_t seed = 0;

  void validate() const;
};

struct StageResult {
  ModelSnapshot snapshot;
  std::vector<double> epoch_loss;  // empty for NoCP
  double wall_clock_sec = 0.0;
};

struct StreamResult {
  std::vector<ModelSnapshot> snapshots;          // f0, f1, ..., fn
  std::vector<std::vector<double>> loss_curves;  // one per stage
  std::vector<double> wall_clock_sec;            // one per stage
};

/// One continued-pre-training stage. NoCP returns the previous parameters
/// untouched; VanillaCP trains a copy on its own masked reconstruction;
/// FusDom trains a student against a frozen teacher through a fresh
/// cross-attention head (discarded afterwards). The teacher is asserted
/// bit-identical to the previous snapshot at every epoch.
StageResult run_cp_stage(const ModelSnapshot& prev, const std::vector<Matrix>& data,
                         const StagePlan& plan);

/// Folds run_cp_stage over the plans, preserving every intermediate
/// snapshot. plans[i] consumes datasets[i].
StreamResult run_stream(const ModelSnapshot& init, const std::vector<StagePlan>& plans,
                        const std::vector<std::vector<Matrix>>& datasets);

/// Fresh snapshot trained with the vanilla pre-text task on the source
/// domain; the stand-in for large-scale initial pre-training.
StageResult pretrain_from_scratch(const BackboneConfig& config,
                                  const std::vector<Matrix>& data, const StagePlan& plan);

}  // namespace fusdom
