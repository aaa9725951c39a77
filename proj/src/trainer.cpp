#include "fusdom/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fusdom/adam.hpp"
#include "fusdom/rng.hpp"

namespace fusdom {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::NoCP: return "NoCP";
    case Strategy::VanillaCP: return "VanillaCP";
    case Strategy::FusDom: return "FusDom";
  }
  throw ContractError("to_string: bad strategy value");
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "NoCP") return Strategy::NoCP;
  if (name == "VanillaCP") return Strategy::VanillaCP;
  if (name == "FusDom") return Strategy::FusDom;
  throw ConfigError("unknown strategy '" + name + "'");
}

void StagePlan::validate() const {
  if (lr <= 0.0) throw ConfigError("StagePlan: lr must be positive");
  if (epochs < 0) throw ConfigError("StagePlan: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("StagePlan: batch_size must be >= 1");
  if (mask_rate < 0.0 || mask_rate > 1.0) {
    throw ConfigError("StagePlan: mask_rate must be in [0, 1]");
  }
}

namespace {

std::vector<std::vector<std::size_t>> length_bucketed_batches(
    const std::vector<Matrix>& data, int batch_size) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].rows() < data[b].rows();
  });
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < order.size(); i += bs) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() +
                             static_cast<std::ptrdiff_t>(std::min(i + bs, order.size())));
  }
  return batches;
}

// Shared pre-text optimisation loop; `step_loss` builds the tape-recorded
// loss for one utterance.
template <typename StepFn, typename EpochCheckFn>
std::vector<double> pretext_train(const std::vector<Matrix>& data, const StagePlan& plan,
                                  std::vector<Tensor> trainable, StepFn step_loss,
                                  EpochCheckFn epoch_check) {
  AdamState opt(trainable, AdamConfig{plan.lr});
  auto batches = length_bucketed_batches(data, plan.batch_size);
  std::vector<double> epoch_loss;
  long step_index = 0;
  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    std::vector<std::size_t> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    Rng shuffle_rng(derive_seed({hash_name("cp_batches"), plan.seed,
                                 static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(batch_order);

    double epoch_total = 0.0;
    for (std::size_t b : batch_order) {
      ++step_index;
      try {
        zero_grads(trainable);
        Tape tape;
        Tensor total;
        for (std::size_t ui : batches[b]) {
          const std::uint64_t mask_seed = derive_seed(
              {hash_name("mask"), plan.seed, static_cast<std::uint64_t>(epoch),
               static_cast<std::uint64_t>(ui)});
          Tensor loss_u = step_loss(data[ui], mask_seed);
          total = total.defined() ? add(total, loss_u) : loss_u;
        }
        Tensor loss = scale(total, 1.0 / static_cast<double>(batches[b].size()));
        if (!std::isfinite(loss.item())) throw NumericError("non-finite batch loss");
        epoch_total += loss.item() * static_cast<double>(batches[b].size());
        if (loss.requires_grad()) {
          tape.backward(loss);
          adam_step(trainable, opt);
        }
      } catch (const NumericError& e) {
        throw TrainingError("pre-text training aborted at step " +
                            std::to_string(step_index) + ": " + e.what());
      }
    }
    epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
    epoch_check(epoch);
  }
  return epoch_loss;
}

}  // namespace

StageResult run_cp_stage(const ModelSnapshot& prev, const std::vector<Matrix>& data,
                         const StagePlan& plan) {
  plan.validate();
  const auto t0 = std::chrono::steady_clock::now();
  StageResult result;

  if (plan.strategy == Strategy::NoCP) {
    result.snapshot = prev;
  } else {
    if (data.empty()) {
      throw DataError("run_cp_stage: no utterances for domain '" + plan.domain_id + "'");
    }
    if (plan.strategy == Strategy::VanillaCP) {
      ModelSnapshot student = prev;
      student.set_trainable(true);
      ReconHead recon = ReconHead::init(prev.config(),
                                        derive_seed({hash_name("cp_recon"), plan.seed}));
      std::vector<Tensor> trainable = student.params();
      trainable.push_back(recon.w);
      trainable.push_back(recon.b);
      result.epoch_loss = pretext_train(
          data, plan, std::move(trainable),
          [&](const Matrix& frames, std::uint64_t mask_seed) {
            return vanilla_pretext_step(student, recon, frames, plan.mask_rate, mask_seed);
          },
          [](int) {});
      student.set_trainable(false);
      result.snapshot = std::move(student);
    } else {
      ModelSnapshot student = prev;
      student.set_trainable(true);
      ModelSnapshot teacher = prev;
      teacher.set_trainable(false);
      CdaParams head = CdaParams::init(prev.config(),
                                       derive_seed({hash_name("cp_head"), plan.seed}));
      ReconHead recon = ReconHead::init(prev.config(),
                                        derive_seed({hash_name("cp_recon"), plan.seed}));
      std::vector<Tensor> trainable = student.params();
      for (const Tensor& p : head.params()) trainable.push_back(p);
      trainable.push_back(recon.w);
      trainable.push_back(recon.b);
      result.epoch_loss = pretext_train(
          data, plan, std::move(trainable),
          [&](const Matrix& frames, std::uint64_t mask_seed) {
            return fusdom_pretext_step(student, teacher, head, recon, frames,
                                       plan.mask_rate, mask_seed, plan.mask_teacher);
          },
          [&](int epoch) {
            if (!params_bit_identical(teacher, prev)) {
              throw ContractError("run_cp_stage: teacher drifted from f^(i-1) at epoch " +
                                  std::to_string(epoch));
            }
          });
      student.set_trainable(false);
      result.snapshot = std::move(student);
    }
  }

  result.snapshot.provenance.push_back({to_string(plan.strategy), plan.domain_id});
  result.snapshot.stage_tag =
      "cp" + std::to_string(result.snapshot.provenance.size()) + ":" + plan.domain_id;
  result.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

StreamResult run_stream(const ModelSnapshot& init, const std::vector<StagePlan>& plans,
                        const std::vector<std::vector<Matrix>>& datasets) {
  if (plans.size() != datasets.size()) {
    throw ContractError("run_stream: one dataset per plan required");
  }
  StreamResult result;
  result.snapshots.push_back(init);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    StageResult stage = run_cp_stage(result.snapshots.back(), datasets[i], plans[i]);
    result.snapshots.push_back(std::move(stage.snapshot));
    result.loss_curves.push_back(std::move(stage.epoch_loss));
    result.wall_clock_sec.push_back(stage.wall_clock_sec);
  }
  return result;
}

StageResult pretrain_from_scratch(const BackboneConfig& config,
                                  const std::vector<Matrix>& data, const StagePlan& plan) {
  plan.validate();
  if (data.empty()) throw DataError("pretrain_from_scratch: no utterances");
  const auto t0 = std::chrono::steady_clock::now();

  ModelSnapshot model = init_snapshot(config, derive_seed({hash_name("init"), plan.seed}));
  model.set_trainable(true);
  ReconHead recon =
      ReconHead::init(config, derive_seed({hash_name("pretrain_recon"), plan.seed}));
  std::vector<Tensor> trainable = model.params();
  trainable.push_back(recon.w);
  trainable.push_back(recon.b);

  StageResult result;
  result.epoch_loss = pretext_train(
      data, plan, std::move(trainable),
      [&](const Matrix& frames, std::uint64_t mask_seed) {
        return vanilla_pretext_step(model, recon, frames, plan.mask_rate, mask_seed);
      },
      [](int) {});
  model.set_trainable(false);
  model.stage_tag = "source";
  result.snapshot = std::move(model);
  result.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace fusdom
