#include "fusdom/ops.hpp"

#include <cmath>
#include <utility>

namespace fusdom {

using detail::check_finite;
using detail::op_result;
using detail::shape_str;
using detail::want_grad;

namespace {

using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kGeluCoeff = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
constexpr double kLayerNormEps = 1e-5;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) +
                     " vs " + shape_str(b.value()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.value()) +
                     " vs " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  check_finite(out, "matmul");
  Tensor c = op_result(std::move(out), want_grad({&a, &b}));
  if (c.requires_grad()) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::current()->record("matmul", {a, b}, c, [an, bn, cn] {
      if (an->requires_grad) an->grad.noalias() += cn->grad * bn->value.transpose();
      if (bn->requires_grad) bn->grad.noalias() += an->value.transpose() * cn->grad;
    });
  }
  return c;
}

Tensor transpose(const Tensor& x) {
  Matrix out = x.value().transpose();
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("transpose", {x}, y,
                            [xn, yn] { xn->grad += yn->grad.transpose(); });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  check_finite(out, "add");
  Tensor c = op_result(std::move(out), want_grad({&a, &b}));
  if (c.requires_grad()) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::current()->record("add", {a, b}, c, [an, bn, cn] {
      if (an->requires_grad) an->grad += cn->grad;
      if (bn->requires_grad) bn->grad += cn->grad;
    });
  }
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  check_finite(out, "sub");
  Tensor c = op_result(std::move(out), want_grad({&a, &b}));
  if (c.requires_grad()) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::current()->record("sub", {a, b}, c, [an, bn, cn] {
      if (an->requires_grad) an->grad += cn->grad;
      if (bn->requires_grad) bn->grad -= cn->grad;
    });
  }
  return c;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_bias: bias " + shape_str(bias.value()) +
                     " does not broadcast over " + shape_str(x.value()));
  }
  Matrix out = x.value().rowwise() + bias.value().row(0);
  check_finite(out, "add_bias");
  Tensor y = op_result(std::move(out), want_grad({&x, &bias}));
  if (y.requires_grad()) {
    auto xn = x.node(), bn = bias.node(), yn = y.node();
    Tape::current()->record("add_bias", {x, bias}, y, [xn, bn, yn] {
      if (xn->requires_grad) xn->grad += yn->grad;
      if (bn->requires_grad) bn->grad += yn->grad.colwise().sum();
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double s) {
  Matrix out = x.value() * s;
  check_finite(out, "scale");
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("scale", {x}, y, [xn, yn, s] { xn->grad += s * yn->grad; });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  check_finite(out, "mul");
  Tensor c = op_result(std::move(out), want_grad({&a, &b}));
  if (c.requires_grad()) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::current()->record("mul", {a, b}, c, [an, bn, cn] {
      if (an->requires_grad) an->grad += cn->grad.cwiseProduct(bn->value);
      if (bn->requires_grad) bn->grad += cn->grad.cwiseProduct(an->value);
    });
  }
  return c;
}

Tensor relu(const Tensor& x) {
  Matrix out = x.value().cwiseMax(0.0);
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("relu", {x}, y, [xn, yn] {
      xn->grad.array() += yn->grad.array() * (xn->value.array() > 0.0).cast<double>();
    });
  }
  return y;
}

Tensor gelu(const Tensor& x) {
  const auto& xa = x.value().array();
  Array inner = kGeluCoeff * (xa + kGeluCubic * xa.cube());
  Array th = inner.tanh();
  Matrix out = (0.5 * xa * (1.0 + th)).matrix();
  check_finite(out, "gelu");
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Matrix tanh_inner = th.matrix();
    Tape::current()->record("gelu", {x}, y, [xn, yn, tanh_inner] {
      const auto& xa2 = xn->value.array();
      const auto& t = tanh_inner.array();
      Array sech2 = 1.0 - t * t;
      Array dinner = kGeluCoeff * (1.0 + 3.0 * kGeluCubic * xa2 * xa2);
      xn->grad.array() +=
          yn->grad.array() * (0.5 * (1.0 + t) + 0.5 * xa2 * sech2 * dinner);
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const Index n = x.cols();
  if (n < 1) throw ShapeError("layer_norm: empty final axis");
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: gain/bias must be [1 x " + std::to_string(n) + "]");
  }
  const Index m = x.rows();
  Matrix xhat(m, n);
  Matrix inv_std(m, 1);
  for (Index i = 0; i < m; ++i) {
    const double mu = x.value().row(i).mean();
    Eigen::RowVectorXd centered = x.value().row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var > 0.0 ? var : kLayerNormEps);
    inv_std(i, 0) = inv;
    xhat.row(i) = centered * inv;
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  check_finite(out, "layer_norm");
  Tensor y = op_result(std::move(out), want_grad({&x, &gain, &bias}));
  if (y.requires_grad()) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node();
    Tape::current()->record("layer_norm", {x, gain, bias}, y, [xn, gn, bn, yn, xhat, inv_std] {
      const Index rows = xhat.rows(), cols = xhat.cols();
      if (gn->requires_grad) {
        gn->grad += (yn->grad.array() * xhat.array()).colwise().sum().matrix();
      }
      if (bn->requires_grad) bn->grad += yn->grad.colwise().sum();
      if (xn->requires_grad) {
        for (Index i = 0; i < rows; ++i) {
          Eigen::RowVectorXd dxhat =
              (yn->grad.row(i).array() * gn->value.row(0).array()).matrix();
          const double m1 = dxhat.mean();
          const double m2 = (dxhat.array() * xhat.row(i).array()).mean();
          xn->grad.row(i).array() +=
              inv_std(i, 0) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
          (void)cols;
        }
      }
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  const Index m = x.rows(), n = x.cols();
  Matrix out(m, n);
  for (Index i = 0; i < m; ++i) {
    const double mx = x.value().row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.value().row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  check_finite(out, "softmax_rows");
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("softmax_rows", {x}, y, [xn, yn] {
      for (Index i = 0; i < yn->value.rows(); ++i) {
        const double dot = yn->grad.row(i).dot(yn->value.row(i));
        xn->grad.row(i).array() +=
            yn->value.row(i).array() * (yn->grad.row(i).array() - dot);
      }
    });
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  const Index m = x.rows(), n = x.cols();
  Matrix out(m, n);
  for (Index i = 0; i < m; ++i) {
    const double mx = x.value().row(i).maxCoeff();
    const double lse = mx + std::log((x.value().row(i).array() - mx).exp().sum());
    out.row(i) = x.value().row(i).array() - lse;
  }
  check_finite(out, "log_softmax_rows");
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("log_softmax_rows", {x}, y, [xn, yn] {
      for (Index i = 0; i < yn->value.rows(); ++i) {
        const double total = yn->grad.row(i).sum();
        xn->grad.row(i).array() +=
            yn->grad.row(i).array() - yn->value.row(i).array().exp() * total;
      }
    });
  }
  return y;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target, const Matrix& weights) {
  require_same_shape(pred, target, "l1_loss");
  if (weights.rows() != pred.rows() || weights.cols() != pred.cols()) {
    throw ShapeError("l1_loss: weight shape " + shape_str(weights) + " vs " +
                     shape_str(pred.value()));
  }
  const double total_weight = weights.sum();
  if (total_weight <= 0.0) return Tensor::scalar(0.0);
  Matrix diff = pred.value() - target.value();
  Matrix m(1, 1);
  m(0, 0) = (weights.array() * diff.array().abs()).sum() / total_weight;
  check_finite(m, "l1_loss");
  Tensor y = op_result(std::move(m), want_grad({&pred, &target}));
  if (y.requires_grad()) {
    auto pn = pred.node(), tn = target.node(), yn = y.node();
    Matrix scaled_sign = (weights.array() * diff.array().sign() / total_weight).matrix();
    Tape::current()->record("l1_loss", {pred, target}, y, [pn, tn, yn, scaled_sign] {
      const double g = yn->grad(0, 0);
      if (pn->requires_grad) pn->grad += g * scaled_sign;
      if (tn->requires_grad) tn->grad -= g * scaled_sign;
    });
  }
  return y;
}

Tensor mean_all(const Tensor& x) {
  Matrix m(1, 1);
  m(0, 0) = x.value().mean();
  check_finite(m, "mean_all");
  Tensor y = op_result(std::move(m), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("mean_all", {x}, y, [xn, yn] {
      xn->grad.array() += yn->grad(0, 0) / static_cast<double>(xn->value.size());
    });
  }
  return y;
}

Tensor sum_all(const Tensor& x) {
  Matrix m(1, 1);
  m(0, 0) = x.value().sum();
  check_finite(m, "sum_all");
  Tensor y = op_result(std::move(m), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("sum_all", {x}, y,
                            [xn, yn] { xn->grad.array() += yn->grad(0, 0); });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index total = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(p.value()));
    }
    total += p.cols();
    track = track || p.requires_grad();
  }
  track = track && Tape::recording();
  Matrix out(rows, total);
  Index off = 0;
  for (const Tensor& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  Tensor y = op_result(std::move(out), track);
  if (y.requires_grad()) {
    std::vector<std::shared_ptr<detail::TensorNode>> ins;
    ins.reserve(parts.size());
    for (const Tensor& p : parts) ins.push_back(p.node());
    auto yn = y.node();
    Tape::current()->record("concat_cols", parts, y, [ins, yn] {
      Index o = 0;
      for (const auto& in : ins) {
        if (in->requires_grad) in->grad += yn->grad.middleCols(o, in->value.cols());
        o += in->value.cols();
      }
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, Index start, Index n) {
  if (start < 0 || n < 0 || start + n > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + n) + ") out of " + shape_str(x.value()));
  }
  Matrix out = x.value().middleCols(start, n);
  Tensor y = op_result(std::move(out), want_grad({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    Tape::current()->record("slice_cols", {x}, y, [xn, yn, start, n] {
      xn->grad.middleCols(start, n) += yn->grad;
    });
  }
  return y;
}

Tensor replace_rows(const Tensor& x, const Tensor& row, const std::vector<Index>& positions) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("replace_rows: row " + shape_str(row.value()) +
                     " does not match " + shape_str(x.value()));
  }
  for (Index p : positions) {
    if (p < 0 || p >= x.rows()) {
      throw ShapeError("replace_rows: position " + std::to_string(p) + " out of " +
                       shape_str(x.value()));
    }
  }
  Matrix out = x.value();
  for (Index p : positions) out.row(p) = row.value().row(0);
  check_finite(out, "replace_rows");
  Tensor y = op_result(std::move(out), want_grad({&x, &row}));
  if (y.requires_grad()) {
    auto xn = x.node(), rn = row.node(), yn = y.node();
    auto pos = positions;
    Tape::current()->record("replace_rows", {x, row}, y, [xn, rn, yn, pos] {
      if (rn->requires_grad) {
        for (Index p : pos) rn->grad += yn->grad.row(p);
      }
      if (xn->requires_grad) {
        Matrix g = yn->grad;
        for (Index p : pos) g.row(p).setZero();
        xn->grad += g;
      }
    });
  }
  return y;
}

}  // namespace fusdom
