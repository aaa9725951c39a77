#include "fusdom/adam.hpp"

#include <cmath>

namespace fusdom {

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig cfg) : cfg_(cfg) {
  if (cfg.lr <= 0.0) throw ConfigError("AdamState: lr must be positive");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.m_.size()) {
    throw ContractError("adam_step: parameter list does not match state");
  }
  state.t_ += 1;
  const AdamConfig& cfg = state.cfg_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Matrix& g = p.grad();
    if (g.rows() != state.m_[i].rows() || g.cols() != state.m_[i].cols()) {
      throw ContractError("adam_step: shape drift on parameter '" + p.name() + "'");
    }
    if (!g.allFinite()) {
      throw TrainingError("adam_step: non-finite gradient for parameter '" +
                          p.name() + "'");
    }
    Matrix& m = state.m_[i];
    Matrix& v = state.v_[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.mutable_value().array() -=
        cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace fusdom
