#include "zsda/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "zsda/errors.hpp"

namespace zsda {

PredictorParams PredictorParams::init(const PredictorShape& shape, Rng& rng) {
  if (shape.input_dim == 0 || shape.width == 0 || shape.latent_dim == 0 || shape.h_layers == 0) {
    throw ShapeError("predictor dimensions must be positive");
  }
  if (shape.task.is_classification() && shape.task.classes < 2) {
    throw ShapeError("classification needs at least two classes");
  }
  PredictorParams p;
  p.task = shape.task;
  std::size_t in = shape.input_dim;
  for (std::size_t l = 0; l < shape.h_layers; ++l) {
    p.h.push_back(Dense::init(in, shape.width, rng));
    in = shape.width;
  }
  p.g = Dense::init(shape.latent_dim, shape.task.outputs() * shape.width, rng);
  return p;
}

std::vector<ParamRef> PredictorParams::params() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < h.size(); ++l) {
    const std::string prefix = "predictor.h." + std::to_string(l);
    out.push_back({prefix + ".weight", &h[l].weight});
    out.push_back({prefix + ".bias", &h[l].bias});
  }
  out.push_back({"predictor.g.weight", &g.weight});
  out.push_back({"predictor.g.bias", &g.bias});
  return out;
}

std::size_t PredictiveDistribution::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
}

Var features(Tape& tape, const PredictorParams& params, Var x) {
  if (x.cols() != params.input_dim()) {
    throw ShapeError("predictor expects feature dimension " + std::to_string(params.input_dim()) +
                     ", got " + x.value().shape_string());
  }
  return relu_stack(tape, params.h, x);
}

Var class_weights(Tape& tape, const PredictorParams& params, Var z) {
  if (z.rows() != 1 || z.cols() != params.latent_dim()) {
    throw ShapeError("predictor expects a 1x" + std::to_string(params.latent_dim()) +
                     " latent vector, got " + z.value().shape_string());
  }
  Var flat = params.g.forward(tape, z);
  return tanh(reshape(flat, params.outputs(), params.width()));
}

Var head_outputs(Var feats, Var weights) { return matmul(feats, transpose(weights)); }

std::size_t class_index(double label, std::size_t classes) {
  if (!(label >= 0.0) || label != std::floor(label) || label >= static_cast<double>(classes)) {
    throw LabelError("class label " + std::to_string(label) + " outside 0.." +
                     std::to_string(classes - 1));
  }
  return static_cast<std::size_t>(label);
}

Var log_likelihood(const PredictorParams& params, Var outputs, std::span<const double> targets) {
  if (targets.size() != outputs.rows()) {
    throw ShapeError("log_likelihood: " + std::to_string(targets.size()) + " targets for " +
                     outputs.value().shape_string() + " outputs");
  }
  if (params.task.is_classification()) {
    std::vector<std::size_t> cols(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
      cols[i] = class_index(targets[i], params.task.classes);
    }
    return pick(log_softmax(outputs), cols);
  }
  Tape& tape = outputs.tape();
  Var y = tape.constant(Matrix(targets.size(), 1, std::vector<double>(targets.begin(), targets.end())));
  Var r = sub(y, outputs);
  return scale(mul(r, r), -0.5);
}

namespace {

Var single_outputs(Tape& tape, const PredictorParams& params, std::span<const double> x,
                   std::span<const double> z) {
  Var xv = tape.constant(Matrix::row(x));
  Var zv = tape.constant(Matrix::row(z));
  return head_outputs(features(tape, params, xv), class_weights(tape, params, zv));
}

}  // namespace

std::vector<double> logits(const PredictorParams& params, std::span<const double> x,
                           std::span<const double> z) {
  Tape tape(false);
  return single_outputs(tape, params, x, z).value().to_vector();
}

double log_likelihood(const PredictorParams& params, std::span<const double> x, double y,
                      std::span<const double> z) {
  Tape tape(false);
  const double target[] = {y};
  return log_likelihood(params, single_outputs(tape, params, x, z), target).scalar();
}

PredictiveDistribution predict_given_z(const PredictorParams& params, std::span<const double> x,
                                       std::span<const double> z) {
  const auto out = logits(params, x, z);
  PredictiveDistribution d;
  if (params.task.is_classification()) {
    d.probabilities = softmax(out);
  } else {
    d.mean = out.front();
  }
  return d;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw EmptyInputError("softmax over zero classes");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = logits[c] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

}  // namespace zsda
