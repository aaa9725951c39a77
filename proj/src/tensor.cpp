#include "fusdom/tensor.hpp"

#include <sstream>
#include <utility>

namespace fusdom {

namespace {

thread_local Tape* g_current_tape = nullptr;
thread_local int g_no_grad_depth = 0;

std::shared_ptr<detail::TensorNode> make_node(Matrix value, bool requires_grad,
                                              std::string name = {}) {
  auto n = std::make_shared<detail::TensorNode>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  if (requires_grad) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  return n;
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  return Tensor(make_node(std::move(value), false));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::param(Matrix value, std::string name) {
  return Tensor(make_node(std::move(value), true, std::move(name)));
}

Tensor Tensor::zeros(Index rows, Index cols) {
  return constant(Matrix::Zero(rows, cols));
}

const Matrix& Tensor::value() const {
  if (!node_) throw ContractError("Tensor: use of an undefined tensor");
  return node_->value;
}

Matrix& Tensor::mutable_value() {
  if (!node_) throw ContractError("Tensor: use of an undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("Tensor::item: tensor is " + detail::shape_str(value()) +
                        ", expected 1x1");
  }
  return value()(0, 0);
}

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("Tensor: use of an undefined tensor");
  if (on == node_->requires_grad) return;
  node_->requires_grad = on;
  if (on) {
    node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
  } else {
    node_->grad.resize(0, 0);
  }
}

const Matrix& Tensor::grad() const {
  if (!requires_grad()) {
    throw ContractError("Tensor::grad: no gradient buffer on tensor '" +
                        (node_ ? node_->name : std::string()) + "'");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (requires_grad()) node_->grad.setZero();
}

const std::string& Tensor::name() const {
  static const std::string empty;
  return node_ ? node_->name : empty;
}

Tensor Tensor::clone() const {
  if (!node_) return {};
  return Tensor(make_node(node_->value, node_->requires_grad, node_->name));
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return constant(node_->value);
}

Tape::Tape() {
  prev_ = g_current_tape;
  g_current_tape = this;
}

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

bool Tape::recording() { return g_current_tape != nullptr && g_no_grad_depth == 0; }

void Tape::record(std::string op, std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void()> backward_fn) {
  output.node()->producer = this;
  nodes_.push_back(OpNode{std::move(op), std::move(inputs), output, std::move(backward_fn)});
  visits_.push_back(0);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar (1x1) tensor");
  }
  if (!loss.requires_grad() || loss.node()->producer != this) {
    throw ContractError("backward: loss is not an output of this tape");
  }
  loss.node()->grad(0, 0) += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    ++visits_[i];
    nodes_[i].backward_fn();
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

namespace detail {

Tensor op_result(Matrix value, bool tracked) {
  return tracked ? Tensor::param(std::move(value)) : Tensor::constant(std::move(value));
}

bool want_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::recording()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << " x " << m.cols() << "]";
  return os.str();
}

}  // namespace detail

}  // namespace fusdom
