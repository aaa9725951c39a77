#pragma once

#include <cstdint>
#include <vector>

#include "fusdom/tensor.hpp"

namespace fusdom {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers for a fixed parameter list, plus the shared
/// step count. Moments start at zero; the step count increases by one per
/// adam_step call.
class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamConfig cfg = {});

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }
  const Matrix& first_moment(std::size_t i) const { return m_.at(i); }
  const Matrix& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  friend void adam_step(std::vector<Tensor>& params, AdamState& state);
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// One bias-corrected Adam update over `params`, consuming their current
/// grad buffers (grads are left untouched; call zero_grads before the next
/// backward). Throws TrainingError naming the parameter on non-finite grads.
void adam_step(std::vector<Tensor>& params, AdamState& state);

void zero_grads(std::vector<Tensor>& params);

}  // namespace fusdom
