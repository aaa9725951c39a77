// Test-only reference implementations, independent of the library's
// forward/backward code paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fusdom/rng.hpp"
#include "fusdom/tensor.hpp"

namespace oracles {

using fusdom::Index;
using fusdom::Matrix;

inline Matrix random_matrix(fusdom::Rng& rng, Index rows, Index cols, double lo = -1.5,
                            double hi = 1.5) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Keeps entries away from kinks (relu at 0, |.| at 0) so central differences
// stay meaningful.
inline Matrix random_matrix_away_from(fusdom::Rng& rng, Index rows, Index cols,
                                      double gap = 1e-2) {
  Matrix m = random_matrix(rng, rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      if (std::abs(m(i, j)) < gap) m(i, j) = m(i, j) < 0 ? -gap : gap;
    }
  return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index p = 0; p < a.cols(); ++p) c(i, j) += a(i, p) * b(p, j);
  return c;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central-difference gradient check. `f` must build a scalar tensor from the
// given leaves using library ops only; the numeric side re-evaluates f on
// perturbed constant inputs (forward passes only, no tape), so it cannot
// share a defect with backward().
inline double max_grad_rel_err(
    const std::function<fusdom::Tensor(std::vector<fusdom::Tensor>&)>& f,
    const std::vector<Matrix>& inputs, double h = 1e-5) {
  using fusdom::NoGradGuard;
  using fusdom::Tape;
  using fusdom::Tensor;

  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(Tensor::param(m));
  {
    Tape tape;
    Tensor loss = f(leaves);
    tape.backward(loss);
  }

  const auto eval_at = [&](std::size_t k, Index i, Index j, double delta) {
    std::vector<Tensor> consts;
    consts.reserve(inputs.size());
    for (std::size_t q = 0; q < inputs.size(); ++q) {
      Matrix m = inputs[q];
      if (q == k) m(i, j) += delta;
      consts.push_back(Tensor::constant(std::move(m)));
    }
    NoGradGuard ng;
    return f(consts).item();
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].rows(); ++i) {
      for (Index j = 0; j < inputs[k].cols(); ++j) {
        const double fd = (eval_at(k, i, j, h) - eval_at(k, i, j, -h)) / (2.0 * h);
        const double an = leaves[k].grad()(i, j);
        worst = std::max(worst, rel_err(fd, an));
      }
    }
  }
  return worst;
}

// Central-difference check against in-place parameter leaves: analytic grads
// come from one tape backward, numeric ones from forward-only re-evaluations
// with the parameter entry nudged.
inline double max_param_grad_rel_err(const std::function<fusdom::Tensor()>& build_loss,
                                     std::vector<fusdom::Tensor> leaves,
                                     double h = 1e-5) {
  using fusdom::NoGradGuard;
  using fusdom::Tape;
  using fusdom::Tensor;
  for (Tensor& p : leaves) p.zero_grad();
  {
    Tape tape;
    Tensor loss = build_loss();
    tape.backward(loss);
  }
  double worst = 0.0;
  for (Tensor& p : leaves) {
    Matrix& v = p.mutable_value();
    for (Index i = 0; i < v.rows(); ++i) {
      for (Index j = 0; j < v.cols(); ++j) {
        const double orig = v(i, j);
        double up, down;
        {
          NoGradGuard ng;
          v(i, j) = orig + h;
          up = build_loss().item();
          v(i, j) = orig - h;
          down = build_loss().item();
        }
        v(i, j) = orig;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, rel_err(fd, p.grad()(i, j)));
      }
    }
  }
  return worst;
}

// Hand-rolled Adam on a flat vector of scalars; the reference for adam_step.
struct ReferenceAdam {
  double lr, beta1, beta2, eps;
  std::vector<double> m, v;
  long t = 0;

  ReferenceAdam(std::size_t n, double lr_, double b1 = 0.9, double b2 = 0.999,
                double e = 1e-8)
      : lr(lr_), beta1(b1), beta2(b2), eps(e), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace oracles
