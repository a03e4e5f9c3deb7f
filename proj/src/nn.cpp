#include "zsda/nn.hpp"

#include <cmath>

#include "zsda/errors.hpp"

namespace zsda {

Matrix init_dense(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw ShapeError("init_dense requires positive dimensions");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

Dense Dense::init(std::size_t in, std::size_t out, Rng& rng) {
  return Dense{init_dense(in, out, rng), Matrix(1, out)};
}

Var Dense::forward(Tape& tape, Var x) const {
  return add_row(matmul(x, tape.param(weight)), tape.param(bias));
}

Var relu_stack(Tape& tape, const std::vector<Dense>& layers, Var x) {
  for (const auto& layer : layers) x = relu(layer.forward(tape, x));
  return x;
}

AdamState AdamState::for_shape(const Matrix& like, double lr) {
  AdamState s;
  s.m = Matrix(like.rows(), like.cols());
  s.v = Matrix(like.rows(), like.cols());
  s.lr = lr;
  return s;
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, std::string_view name) {
  if (!param.same_shape(grad) || !param.same_shape(state.m) || !param.same_shape(state.v)) {
    throw ShapeError("adam_step shape mismatch for '" + std::string(name) + "': param " +
                     param.shape_string() + ", grad " + grad.shape_string());
  }
  if (!grad.all_finite()) {
    throw OptimizerError("non-finite gradient for parameter '" + std::string(name) + "'");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < param.size(); ++k) {
    const double g = grad[k];
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    param[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

Adam::Adam(std::vector<ParamRef> params, double lr) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (const auto& p : params_) states_.push_back(AdamState::for_shape(*p.value, lr));
}

void Adam::step(const Tape& tape) {
  // Validate everything first so a bad gradient aborts the whole step.
  std::vector<const Matrix*> grads(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    grads[i] = tape.grad_of(*params_[i].value);
    if (grads[i] && !grads[i]->all_finite()) {
      throw OptimizerError("non-finite gradient for parameter '" + params_[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& p = *params_[i].value;
    if (grads[i]) {
      adam_step(p, *grads[i], states_[i], params_[i].name);
    } else {
      adam_step(p, Matrix(p.rows(), p.cols()), states_[i], params_[i].name);
    }
  }
}

}  // namespace zsda
