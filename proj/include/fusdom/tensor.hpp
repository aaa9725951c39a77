#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fusdom/errors.hpp"

namespace fusdom {

// Row-major so that raw buffers match the on-disk layout directly.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

namespace detail {

struct TensorNode {
  Matrix value;
  Matrix grad;  // allocated (zero) iff requires_grad
  bool requires_grad = false;
  const Tape* producer = nullptr;  // tape whose op produced this node
  std::string name;                // parameters carry names for diagnostics
};

}  // namespace detail

/// Dense 2-D tensor of doubles. Scalars are 1x1, row vectors 1xN. Copies are
/// shallow (autodiff nodes are shared); clone() makes an independent deep
/// copy. A Tensor with requires_grad owns a same-shape zero-initialised
/// gradient buffer that backward() accumulates into.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor scalar(double v);
  static Tensor param(Matrix value, std::string name = {});
  static Tensor zeros(Index rows, Index cols);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  Matrix& mutable_value();  // optimizer writes; never recorded on a tape

  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  double item() const;  // 1x1 only

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return requires_grad(); }
  const Matrix& grad() const;
  void zero_grad();
  const std::string& name() const;

  Tensor clone() const;   // deep copy, keeps requires_grad, detached from tapes
  Tensor detach() const;  // constant snapshot of the current value

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
  friend class Tape;
};

/// Reverse-mode tape. Constructing a Tape makes it the active tape for the
/// current thread (tapes nest as a stack); ops record themselves while a tape
/// is active and grad suppression is off. A tape and the tensors recorded on
/// it are confined to one thread.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and sweeps the recorded ops in reverse,
  /// accumulating into the grad buffer of every requires_grad tensor reached.
  /// loss must be a 1x1 tensor produced by this tape.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  /// Per-node backward visit counters, in recording order.
  const std::vector<std::size_t>& visit_counts() const { return visits_; }

  static Tape* current();
  /// True when an op called now should record itself.
  static bool recording();

  /// Appends one op node. `backward_fn` must read output->grad and accumulate
  /// into the grads of whichever inputs require them.
  void record(std::string op, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward_fn);

 private:
  struct OpNode {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward_fn;
  };
  std::vector<OpNode> nodes_;
  std::vector<std::size_t> visits_;
  Tape* prev_ = nullptr;
};

/// Suppresses recording for its lifetime (frozen forward passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

/// Output tensor for an op: tracked outputs require grad (buffer
/// pre-allocated); untracked outputs are constants.
Tensor op_result(Matrix value, bool tracked);

/// True when the op should be recorded: a tape is active, grads are not
/// suppressed, and at least one input participates.
bool want_grad(std::initializer_list<const Tensor*> inputs);

/// Throws NumericError if m contains NaN/Inf.
void check_finite(const Matrix& m, const char* op);

std::string shape_str(const Matrix& m);

}  // namespace detail

}  // namespace fusdom
