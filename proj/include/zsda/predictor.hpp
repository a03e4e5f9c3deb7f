#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zsda/matrix.hpp"
#include "zsda/nn.hpp"
#include "zsda/rng.hpp"
#include "zsda/tape.hpp"
#include "zsda/task.hpp"

namespace zsda {

struct PredictorShape {
  std::size_t input_dim = 0;
  std::size_t width = 100;  // J, output width of the feature network
  std::size_t latent_dim = 2;
  std::size_t h_layers = 1;
  TaskSpec task;
};

// Domain-conditioned head. Output c is the inner product of a feature vector h(x) in R^J
// with a class weight vector g_c(z) = tanh(affine_c(z)). The C affine maps are stored as
// one K x (C*J) layer, row c of the reshaped output belonging to class c.
struct PredictorParams {
  std::vector<Dense> h;
  Dense g;
  TaskSpec task;

  static PredictorParams init(const PredictorShape& shape, Rng& rng);

  std::size_t input_dim() const { return h.front().in(); }
  std::size_t width() const { return h.back().out(); }
  std::size_t latent_dim() const { return g.in(); }
  std::size_t outputs() const { return task.outputs(); }
  std::vector<ParamRef> params();
};

struct PredictiveDistribution {
  std::vector<double> probabilities;  // classification
  double mean = 0.0;                  // regression (unit variance)

  // Index of the largest probability, ties to the lowest index.
  std::size_t argmax() const;
};

// Graph pieces, used by the objective and by batched inference.
Var features(Tape& tape, const PredictorParams& params, Var x);      // N x J
Var class_weights(Tape& tape, const PredictorParams& params, Var z);  // C x J, tanh-bounded
Var head_outputs(Var features, Var class_weights);                    // N x C
// Per-point log-likelihood (N x 1) of `targets` under the head outputs.
Var log_likelihood(const PredictorParams& params, Var outputs, std::span<const double> targets);

// Single-point convenience API.
std::vector<double> logits(const PredictorParams& params, std::span<const double> x,
                           std::span<const double> z);
double log_likelihood(const PredictorParams& params, std::span<const double> x, double y,
                      std::span<const double> z);
PredictiveDistribution predict_given_z(const PredictorParams& params, std::span<const double> x,
                                       std::span<const double> z);

// Numerically stable softmax / log-softmax of a vector.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// Validates a class index and converts it; throws LabelError when out of range.
std::size_t class_index(double label, std::size_t classes);

}  // namespace zsda
