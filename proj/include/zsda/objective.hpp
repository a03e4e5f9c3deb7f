#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "zsda/data.hpp"
#include "zsda/encoder.hpp"
#include "zsda/predictor.hpp"
#include "zsda/rng.hpp"

namespace zsda {

// KL(N(mu, diag(exp(logvar))) || N(0, I)) = 0.5 sum_k (mu_k^2 + sigma_k^2 - ln sigma_k^2 - 1).
double kl_standard_normal(const LatentPosterior& post);
Var kl_standard_normal(const PosteriorVars& post);

// Labelled points of one domain entering a minibatch.
struct DomainBatch {
  int domain_id = 0;
  Matrix x;
  std::vector<double> y;
  // Multiplies the summed log-likelihood; N_d / |subset| makes it unbiased for the
  // full-domain sum.
  double weight = 1.0;
  // Set the posterior is encoded from. nullptr means `x` itself. Non-owning.
  const Matrix* encode_set = nullptr;
};

struct ElboTerms {
  std::vector<double> kl;     // per domain
  std::vector<double> recon;  // per domain, weighted expected log-likelihood
  double total = 0.0;         // sum_d (recon_d - kl_d)
};

struct ElboGraph {
  Var total;
  ElboTerms terms;
};

// Reparametrized lower bound over the batch: per domain, encode q(z | set), draw
// `samples` latent vectors from `rng`, and average the summed log-likelihoods.
ElboGraph build_elbo(Tape& tape, const EncoderParams& enc, const PredictorParams& pred,
                     std::span<const DomainBatch> batch, Rng& rng, std::size_t samples);
ElboTerms elbo_minibatch(const EncoderParams& enc, const PredictorParams& pred,
                         std::span<const DomainBatch> batch, Rng& rng, std::size_t samples);

// Draws every domain at each step with an equal share of the minibatch. Each domain
// walks its own shuffled order; when fewer than `share` unseen points remain the order
// is reshuffled, so every batch is a uniformly random subset of the domain.
class DomainBatchSampler {
 public:
  DomainBatchSampler(const DomainDataset& train, std::size_t minibatch, bool rescale,
                     bool encode_full_set, std::uint64_t seed);

  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::size_t share(std::size_t domain) const { return shares_.at(domain); }
  std::vector<DomainBatch> next();

 private:
  const DomainDataset& data_;
  bool rescale_;
  bool encode_full_set_;
  Rng rng_;
  std::vector<std::size_t> shares_;
  std::vector<std::vector<std::size_t>> orders_;
  std::vector<std::size_t> cursors_;
  std::size_t steps_per_epoch_ = 1;
};

struct TrainConfig {
  std::size_t latent_dim = 2;   // K
  std::size_t train_samples = 1;  // L during training
  double lr = 1e-3;
  std::size_t minibatch = 512;
  std::size_t max_epochs = 300;
  std::size_t min_selection_epoch = 15;
  std::uint64_t seed = 0;
  bool likelihood_rescale = true;
  bool encode_full_set = false;
  std::size_t hidden = 100;         // J and the baseline hidden width
  std::size_t encoder_hidden = 0;   // 0: same as hidden
  std::size_t encoder_layers = 1;
  std::size_t h_layers = 1;
  std::size_t validation_samples = 10;

  std::size_t effective_encoder_hidden() const { return encoder_hidden ? encoder_hidden : hidden; }
  // Throws ConfigError on invalid settings.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double elbo = 0.0;        // mean over the epoch's steps
  double kl_mean = 0.0;     // mean per domain per step
  double recon_mean = 0.0;  // mean per domain per step
  double val_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_metric = std::numeric_limits<double>::quiet_NaN();

  // Columns: epoch,elbo,kl_mean,recon_mean,val_metric (empty when not evaluated).
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
};

struct TrainedModel {
  EncoderParams encoder;
  PredictorParams predictor;
  TrainingTrace trace;
  std::vector<int> source_ids;
};

// Maximizes the bound with Adam and keeps the parameter snapshot with the best validation
// metric among epochs >= min_selection_epoch (accuracy up, RMSE down; ties keep the
// earlier epoch). Without validation domains, or when max_epochs < min_selection_epoch,
// the final epoch is kept.
TrainedModel train(const DomainDataset& train_set, const TrainConfig& cfg,
                   const DomainDataset& validation);

// Validation metric over a set of domains: each domain's posterior is encoded from its
// own points, which are then predicted. Accuracy or RMSE pooled over all points.
double evaluate_domains(const EncoderParams& enc, const PredictorParams& pred,
                        const DomainDataset& ds, std::size_t samples, std::uint64_t seed);

inline bool metric_better(TaskSpec task, double candidate, double incumbent) {
  if (incumbent != incumbent) return true;
  return task.is_classification() ? candidate > incumbent : candidate < incumbent;
}

}  // namespace zsda
