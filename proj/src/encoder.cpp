#include "zsda/encoder.hpp"

#include <cmath>

#include "zsda/errors.hpp"

namespace zsda {

EncoderParams EncoderParams::init(const EncoderShape& shape, Rng& rng) {
  if (shape.input_dim == 0 || shape.hidden == 0 || shape.latent_dim == 0) {
    throw ShapeError("encoder dimensions must be positive");
  }
  EncoderParams p;
  std::size_t in = shape.input_dim;
  for (std::size_t l = 0; l < shape.eta_layers; ++l) {
    p.eta.push_back(Dense::init(in, shape.hidden, rng));
    in = shape.hidden;
  }
  p.rho_mu = Dense::init(in, shape.latent_dim, rng);
  p.rho_logvar = Dense::init(in, shape.latent_dim, rng);
  return p;
}

std::vector<ParamRef> EncoderParams::params() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < eta.size(); ++l) {
    const std::string prefix = "encoder.eta." + std::to_string(l);
    out.push_back({prefix + ".weight", &eta[l].weight});
    out.push_back({prefix + ".bias", &eta[l].bias});
  }
  out.push_back({"encoder.rho_mu.weight", &rho_mu.weight});
  out.push_back({"encoder.rho_mu.bias", &rho_mu.bias});
  out.push_back({"encoder.rho_logvar.weight", &rho_logvar.weight});
  out.push_back({"encoder.rho_logvar.bias", &rho_logvar.bias});
  return out;
}

std::vector<double> LatentPosterior::stddev() const {
  std::vector<double> s(logvar.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::exp(0.5 * logvar[k]);
  return s;
}

PosteriorVars encode(Tape& tape, const EncoderParams& params, const Matrix& set) {
  if (set.rows() == 0) throw EmptyInputError("cannot encode an empty domain");
  if (set.cols() != params.input_dim()) {
    throw ShapeError("encoder expects dimension " + std::to_string(params.input_dim()) +
                     ", set has " + set.shape_string());
  }
  Var pooled = row_mean(relu_stack(tape, params.eta, tape.constant(set)));
  Var mu = params.rho_mu.forward(tape, pooled);
  Var logvar = clamp(params.rho_logvar.forward(tape, pooled), kLogvarMin, kLogvarMax);
  return {mu, logvar};
}

LatentPosterior encode(const EncoderParams& params, const Matrix& set, int domain_id) {
  Tape tape(false);
  auto vars = encode(tape, params, set);
  return {domain_id, vars.mu.value().to_vector(), vars.logvar.value().to_vector()};
}

std::vector<Var> sample_z(Tape& tape, const PosteriorVars& post, Rng& rng, std::size_t count) {
  if (count == 0) throw ContractError("sample_z requires at least one sample");
  const std::size_t k = post.mu.cols();
  Var sigma = exp(scale(post.logvar, 0.5));
  std::vector<Var> out;
  out.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    Var eps = tape.constant(Matrix(1, k, gaussian(rng, k)));
    out.push_back(add(post.mu, mul(eps, sigma)));
  }
  return out;
}

std::vector<std::vector<double>> sample_z(const LatentPosterior& post, Rng& rng,
                                          std::size_t count) {
  if (count == 0) throw ContractError("sample_z requires at least one sample");
  const auto sigma = post.stddev();
  std::vector<std::vector<double>> out(count, std::vector<double>(post.dim()));
  for (auto& z : out) {
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = post.mu[k] + rng.normal() * sigma[k];
  }
  return out;
}

PosteriorVars as_vars(Tape& tape, const LatentPosterior& post) {
  return {tape.constant(Matrix::row(post.mu)), tape.constant(Matrix::row(post.logvar))};
}

}  // namespace zsda
