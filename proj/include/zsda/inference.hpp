#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zsda/data.hpp"
#include "zsda/encoder.hpp"
#include "zsda/predictor.hpp"

namespace zsda {

enum class PredictionMode { stochastic, posterior_mean };

struct InferenceConfig {
  std::size_t samples = 10;  // L at test time
  std::uint64_t seed = 0;
  PredictionMode mode = PredictionMode::stochastic;
};

// Zero-shot prediction for an unseen domain: encodes the posterior from `unseen_set`
// and averages p(y | x, z) over posterior draws, in probability space. One set of draws
// is shared by all queries of the call.
std::vector<PredictiveDistribution> predict_domain(const EncoderParams& enc,
                                                   const PredictorParams& pred,
                                                   const Matrix& unseen_set, const Matrix& queries,
                                                   const InferenceConfig& cfg);

// Same average, for an explicit posterior.
std::vector<PredictiveDistribution> predict_with_posterior(const PredictorParams& pred,
                                                           const LatentPosterior& post,
                                                           const Matrix& queries,
                                                           const InferenceConfig& cfg);

std::vector<LatentPosterior> export_posteriors(const EncoderParams& enc,
                                               std::span<const Domain> domains);

// Fraction of argmax predictions equal to the class targets.
double accuracy(std::span<const PredictiveDistribution> preds, std::span<const double> targets);
double rmse(std::span<const PredictiveDistribution> preds, std::span<const double> targets);

}  // namespace zsda
