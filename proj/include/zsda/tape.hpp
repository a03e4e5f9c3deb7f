#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "zsda/matrix.hpp"

namespace zsda {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node vector is
// already a topological order and backward is a single reverse sweep.
//
// backward() may run once per tape; a second call throws ContractError. Build a
// fresh tape per gradient evaluation.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  // With record_gradients=false no backward closures are stored (inference mode).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Differentiable input whose gradient is read back after backward().
  Var leaf(Matrix value);
  // Binds a parameter matrix by address. Repeated calls return the same node, so a
  // parameter used several times accumulates one gradient.
  Var param(const Matrix& parameter);
  // Gradient of a bound parameter after backward(); nullptr if it was never bound or
  // did not influence the loss.
  const Matrix* grad_of(const Matrix& parameter) const;

  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }
  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Low-level recording used by the op library.
  Var record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<const std::size_t> parents(std::size_t id) const { return nodes_[id].parents; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, std::size_t> bound_;
  bool recording_;
  bool backward_done_ = false;
};

// ---- differentiable ops -------------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var shift(Var a, double offset);
// a (N x C) plus a 1 x C row added to every row.
Var add_row(Var a, Var row);

Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
// Throws NumericDomainError on non-positive entries.
Var log(Var a);
// Gradient passes through inside [lo, hi] and is zero outside.
Var clamp(Var a, double lo, double hi);

// Reductions accumulate left to right in row-major order.
Var sum(Var a);
Var mean(Var a);
// Averages the rows of an N x C matrix into a 1 x C row.
Var row_mean(Var a);

// Row-wise log-softmax with max subtraction.
Var log_softmax(Var a);
// out(i, 0) = a(i, columns[i]).
Var pick(Var a, std::span<const std::size_t> columns);

}  // namespace zsda
