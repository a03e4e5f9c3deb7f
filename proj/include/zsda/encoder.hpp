#pragma once

#include <cstddef>
#include <vector>

#include "zsda/matrix.hpp"
#include "zsda/nn.hpp"
#include "zsda/rng.hpp"
#include "zsda/tape.hpp"

namespace zsda {

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden = 100;
  std::size_t latent_dim = 2;
  std::size_t eta_layers = 1;
};

// Permutation-invariant posterior network: a shared ReLU stack eta applied to every
// set element, mean pooling, then two separate affine heads for the mean and the
// log-variance of a diagonal Gaussian.
struct EncoderParams {
  std::vector<Dense> eta;
  Dense rho_mu;
  Dense rho_logvar;

  static EncoderParams init(const EncoderShape& shape, Rng& rng);

  std::size_t input_dim() const { return eta.empty() ? rho_mu.in() : eta.front().in(); }
  std::size_t latent_dim() const { return rho_mu.out(); }
  std::vector<ParamRef> params();
};

// Encoder log-variance outputs are clamped to this range before use.
inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct LatentPosterior {
  int domain_id = -1;
  std::vector<double> mu;
  std::vector<double> logvar;  // ln sigma^2

  std::size_t dim() const noexcept { return mu.size(); }
  std::vector<double> stddev() const;
};

// Differentiable posterior parameters, both 1 x K.
struct PosteriorVars {
  Var mu;
  Var logvar;
};

// Encodes the set given as rows of `set` (N x M). Throws EmptyInputError for N == 0 and
// ShapeError when M does not match the encoder.
PosteriorVars encode(Tape& tape, const EncoderParams& params, const Matrix& set);
LatentPosterior encode(const EncoderParams& params, const Matrix& set, int domain_id = -1);

// Reparametrized draws z = mu + eps * exp(0.5 logvar), each 1 x K.
std::vector<Var> sample_z(Tape& tape, const PosteriorVars& post, Rng& rng, std::size_t count);
std::vector<std::vector<double>> sample_z(const LatentPosterior& post, Rng& rng,
                                          std::size_t count);

// Posterior as tape constants (for posteriors that did not come from an encoder).
PosteriorVars as_vars(Tape& tape, const LatentPosterior& post);

}  // namespace zsda
