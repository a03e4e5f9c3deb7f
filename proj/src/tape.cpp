#include "zsda/tape.hpp"

#include <algorithm>
#include <cmath>

#include "zsda/errors.hpp"

namespace zsda {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ContractError("scalar() on " + v.shape_string());
  return v[0];
}

Var Tape::push(Node node) {
  if (backward_done_) throw ContractError("tape already consumed by backward()");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(Node{std::move(value), {}, false, {}, {}}); }

Var Tape::leaf(Matrix value) { return push(Node{std::move(value), {}, recording_, {}, {}}); }

Var Tape::param(const Matrix& parameter) {
  if (auto it = bound_.find(&parameter); it != bound_.end()) return Var(this, it->second);
  Var v = leaf(parameter);
  bound_.emplace(&parameter, v.id());
  return v;
}

const Matrix* Tape::grad_of(const Matrix& parameter) const {
  auto it = bound_.find(&parameter);
  if (it == bound_.end() || !backward_done_) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.empty() && !n.value.empty() ? nullptr : &n.grad;
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  if (recording_) {
    for (auto p : parents) needs = needs || nodes_[p].requires_grad;
  }
  if (!needs) return push(Node{std::move(value), {}, false, {}, {}});
  return push(Node{std::move(value), {}, true, std::move(parents), std::move(backward)});
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: variable belongs to another tape");
  if (backward_done_) throw ContractError("backward called twice on the same tape");
  const Matrix& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward requires a scalar loss, got " + lv.shape_string());
  }
  backward_done_ = true;
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

// ---- ops ------------------------------------------------------------------------------

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

template <typename F>
Var unary(Var a, Matrix out, F local_grad) {
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, local_grad](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * local_grad(x[k], y[k]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul shape mismatch: " + av.shape_string() + " * " + bv.shape_string());
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(matmul(av, bv), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      // dA += G * B^T
      const Matrix& bv = t.value(ib);
      Matrix& ga = t.grad_mut(ia);
      const std::size_t n = g.rows(), m = g.cols(), k = bv.rows();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g(i, j) * bv(p, j);
          ga(i, p) += acc;
        }
    }
    if (t.requires_grad(ib)) {
      // dB += A^T * G
      const Matrix& av = t.value(ia);
      Matrix& gb = t.grad_mut(ib);
      const std::size_t n = av.rows(), k = av.cols(), m = g.cols();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double a_ip = av(i, p);
          if (a_ip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gb(p, j) += a_ip * g(i, j);
        }
    }
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().transposed(), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Matrix& av = a.value();
  if (rows * cols != av.size()) {
    throw ShapeError("reshape " + av.shape_string() + " to " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  const std::size_t ia = a.id();
  return a.tape().record(Matrix(rows, cols, av.to_vector()), {ia},
                         [ia](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const Matrix& g = t.grad(self);
                           Matrix& ga = t.grad_mut(ia);
                           for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
                         });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Matrix& gx = t.grad_mut(id);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Matrix& gx = t.grad_mut(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
    }
    if (t.requires_grad(ib)) {
      Matrix& gx = t.grad_mut(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] -= g[k];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      const Matrix& bv = t.value(ib);
      Matrix& gx = t.grad_mut(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * bv[k];
    }
    if (t.requires_grad(ib)) {
      const Matrix& av = t.value(ia);
      Matrix& gx = t.grad_mut(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * av[k];
    }
  });
}

Var scale(Var a, double factor) {
  Matrix out = a.value();
  for (auto& v : out.data()) v *= factor;
  return unary(a, std::move(out), [factor](double, double) { return factor; });
}

Var shift(Var a, double offset) {
  Matrix out = a.value();
  for (auto& v : out.data()) v += offset;
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: cannot broadcast " + rv.shape_string() + " over " +
                     av.shape_string());
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(std::move(out), {ia, ir}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad_mut(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    }
    if (t.requires_grad(ir)) {
      Matrix& gr = t.grad_mut(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    }
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = std::tanh(v);
  return unary(a, std::move(out), [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data()) {
    v = std::exp(v);
    if (!std::isfinite(v)) throw NumericDomainError("exp overflow");
  }
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Var log(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data()) {
    if (!(v > 0.0)) throw NumericDomainError("log of non-positive entry " + std::to_string(v));
    v = std::log(v);
  }
  return unary(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return unary(a, std::move(out),
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  const Matrix& av = a.value();
  if (av.empty()) throw EmptyInputError("sum of empty matrix");
  double acc = 0.0;
  for (double v : av.data()) acc += v;
  const std::size_t ia = a.id();
  return a.tape().record(Matrix(1, 1, acc), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self)[0];
    for (auto& v : t.grad_mut(ia).data()) v += g;
  });
}

Var mean(Var a) {
  const Matrix& av = a.value();
  if (av.empty()) throw EmptyInputError("mean of empty matrix");
  double acc = 0.0;
  for (double v : av.data()) acc += v;
  const double n = static_cast<double>(av.size());
  const std::size_t ia = a.id();
  return a.tape().record(Matrix(1, 1, acc / n), {ia}, [ia, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self)[0] / n;
    for (auto& v : t.grad_mut(ia).data()) v += g;
  });
}

Var row_mean(Var a) {
  const Matrix& av = a.value();
  if (av.rows() == 0 || av.cols() == 0) throw EmptyInputError("row_mean of empty matrix");
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  const double n = static_cast<double>(av.rows());
  for (auto& v : out.data()) v /= n;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c] / n;
  });
}

Var log_softmax(Var a) {
  const Matrix& av = a.value();
  if (av.cols() == 0) throw EmptyInputError("log_softmax over zero columns");
  Matrix out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto row = av.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = row[c] - lse;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) gsum += g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
    }
  });
}

Var pick(Var a, std::span<const std::size_t> columns) {
  const Matrix& av = a.value();
  if (columns.size() != av.rows()) {
    throw ShapeError("pick: " + std::to_string(columns.size()) + " indices for " +
                     av.shape_string());
  }
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    if (columns[r] >= av.cols()) throw ShapeError("pick: column index out of range");
    out[r] = av(r, columns[r]);
  }
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, cols = std::move(cols)](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const Matrix& g = t.grad(self);
                           Matrix& ga = t.grad_mut(ia);
                           for (std::size_t r = 0; r < cols.size(); ++r) ga(r, cols[r]) += g[r];
                         });
}

}  // namespace zsda
