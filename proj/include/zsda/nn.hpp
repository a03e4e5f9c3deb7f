#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "zsda/matrix.hpp"
#include "zsda/rng.hpp"
#include "zsda/tape.hpp"

namespace zsda {

// Glorot-uniform weights in +-sqrt(6 / (rows + cols)).
Matrix init_dense(std::size_t rows, std::size_t cols, Rng& rng);

// Affine layer y = x W + b with W: in x out and b: 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;

  static Dense init(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in() const noexcept { return weight.rows(); }
  std::size_t out() const noexcept { return weight.cols(); }
  Var forward(Tape& tape, Var x) const;
};

// Stack of Dense layers with ReLU after each layer.
Var relu_stack(Tape& tape, const std::vector<Dense>& layers, Var x);

// A named, mutable view of one parameter matrix.
struct ParamRef {
  std::string name;
  Matrix* value;
};

struct AdamState {
  Matrix m;
  Matrix v;
  std::size_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_shape(const Matrix& like, double lr);
};

// One bias-corrected Adam descent step on `param`. Throws OptimizerError (naming the
// parameter) and leaves everything untouched if the gradient has a non-finite entry.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, std::string_view name = {});

// Adam over a fixed list of parameters, applied after a tape's backward().
class Adam {
 public:
  Adam(std::vector<ParamRef> params, double lr);

  // Descends along the gradients recorded on `tape`. Parameters that were not bound
  // on the tape receive a zero gradient.
  void step(const Tape& tape);
  std::size_t steps() const noexcept { return states_.empty() ? 0 : states_.front().t; }

 private:
  std::vector<ParamRef> params_;
  std::vector<AdamState> states_;
};

}  // namespace zsda
