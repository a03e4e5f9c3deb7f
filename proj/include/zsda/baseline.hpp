#pragma once

#include <vector>

#include "zsda/data.hpp"
#include "zsda/nn.hpp"
#include "zsda/objective.hpp"
#include "zsda/predictor.hpp"

namespace zsda {

// No-adaptation network: ReLU hidden stack of width cfg.hidden and an affine output
// layer (softmax for classification, identity for regression).
struct BaselineParams {
  std::vector<Dense> hidden;
  Dense output;
  TaskSpec task;

  static BaselineParams init(std::size_t input_dim, std::size_t width, std::size_t layers,
                             TaskSpec task, Rng& rng);
  std::vector<ParamRef> params();
};

struct TrainedBaseline {
  BaselineParams params;
  TrainingTrace trace;  // elbo and recon_mean hold the mean log-likelihood, kl_mean is 0
};

// Trains on pooled points only; domain identity is not part of the input type.
// Same Adam settings, minibatch size, epoch cap and validation selection as train().
TrainedBaseline train_baseline(const PooledData& train_set, const PooledData& validation,
                               TaskSpec task, const TrainConfig& cfg);

std::vector<PredictiveDistribution> predict_baseline(const BaselineParams& params,
                                                     const Matrix& x);

}  // namespace zsda
