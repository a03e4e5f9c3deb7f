#include "zsda/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "zsda/errors.hpp"
#include "zsda/inference.hpp"
#include "zsda/io_util.hpp"

namespace zsda {

double kl_standard_normal(const LatentPosterior& post) {
  if (post.mu.size() != post.logvar.size()) throw ShapeError("posterior mu/logvar size mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < post.mu.size(); ++k) {
    acc += post.mu[k] * post.mu[k] + std::exp(post.logvar[k]) - post.logvar[k] - 1.0;
  }
  return 0.5 * acc;
}

Var kl_standard_normal(const PosteriorVars& post) {
  Var mu2 = sum(mul(post.mu, post.mu));
  Var var = sum(exp(post.logvar));
  Var lv = sum(post.logvar);
  const double k = static_cast<double>(post.mu.cols());
  return scale(shift(sub(add(mu2, var), lv), -k), 0.5);
}

ElboGraph build_elbo(Tape& tape, const EncoderParams& enc, const PredictorParams& pred,
                     std::span<const DomainBatch> batch, Rng& rng, std::size_t samples) {
  if (batch.empty()) throw EmptyInputError("minibatch has no domains");
  if (samples == 0) throw ContractError("ELBO needs at least one latent sample");
  ElboGraph g;
  Var total;
  for (const auto& b : batch) {
    if (b.y.empty() || b.x.rows() == 0) {
      throw EmptyInputError("domain " + std::to_string(b.domain_id) +
                            " has no labelled points in the minibatch");
    }
    if (b.x.rows() != b.y.size()) throw ShapeError("minibatch features/targets size mismatch");
    PosteriorVars post = encode(tape, enc, b.encode_set ? *b.encode_set : b.x);
    Var kl = kl_standard_normal(post);
    Var feats = features(tape, pred, tape.constant(b.x));
    Var recon;
    for (Var z : sample_z(tape, post, rng, samples)) {
      Var ll = sum(log_likelihood(pred, head_outputs(feats, class_weights(tape, pred, z)), b.y));
      recon = recon.valid() ? add(recon, ll) : ll;
    }
    recon = scale(recon, b.weight / static_cast<double>(samples));
    Var term = sub(recon, kl);
    total = total.valid() ? add(total, term) : term;
    g.terms.kl.push_back(kl.scalar());
    g.terms.recon.push_back(recon.scalar());
  }
  g.total = total;
  g.terms.total = total.scalar();
  return g;
}

ElboTerms elbo_minibatch(const EncoderParams& enc, const PredictorParams& pred,
                         std::span<const DomainBatch> batch, Rng& rng, std::size_t samples) {
  Tape tape(false);
  return build_elbo(tape, enc, pred, batch, rng, samples).terms;
}

// ---- sampler --------------------------------------------------------------------------

DomainBatchSampler::DomainBatchSampler(const DomainDataset& train, std::size_t minibatch,
                                       bool rescale, bool encode_full_set, std::uint64_t seed)
    : data_(train), rescale_(rescale), encode_full_set_(encode_full_set), rng_(seed) {
  if (train.domains.empty()) throw EmptyInputError("no training domains");
  if (minibatch < train.domains.size()) {
    throw ConfigError("minibatch " + std::to_string(minibatch) + " smaller than the " +
                      std::to_string(train.domains.size()) + " domains sampled per step");
  }
  const std::size_t per_domain = minibatch / train.domains.size();
  for (const auto& d : train.domains) {
    if (d.size() == 0) throw EmptyInputError("training domain " + std::to_string(d.id) + " is empty");
    shares_.push_back(std::min(d.size(), per_domain));
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(std::span(order));
    orders_.push_back(std::move(order));
    cursors_.push_back(0);
  }
  const std::size_t total = train.total_points();
  steps_per_epoch_ = std::max<std::size_t>(1, (total + minibatch - 1) / minibatch);
}

std::vector<DomainBatch> DomainBatchSampler::next() {
  std::vector<DomainBatch> out;
  out.reserve(data_.domains.size());
  for (std::size_t i = 0; i < data_.domains.size(); ++i) {
    const Domain& d = data_.domains[i];
    auto& order = orders_[i];
    if (cursors_[i] + shares_[i] > order.size()) {
      rng_.shuffle(std::span(order));
      cursors_[i] = 0;
    }
    std::span<const std::size_t> rows(order.data() + cursors_[i], shares_[i]);
    cursors_[i] += shares_[i];
    DomainBatch b;
    b.domain_id = d.id;
    b.x = d.x.select_rows(rows);
    b.y.reserve(rows.size());
    for (auto r : rows) b.y.push_back(d.y[r]);
    b.weight = rescale_ ? static_cast<double>(d.size()) / static_cast<double>(rows.size()) : 1.0;
    b.encode_set = encode_full_set_ ? &d.x : nullptr;
    out.push_back(std::move(b));
  }
  return out;
}

// ---- training -------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (latent_dim == 0 || latent_dim > 64) throw ConfigError("K must lie in 1..64");
  if (train_samples == 0) throw ConfigError("L_train must be at least 1");
  if (validation_samples == 0) throw ConfigError("validation samples must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (minibatch == 0) throw ConfigError("minibatch must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (hidden == 0) throw ConfigError("hidden width must be positive");
  if (encoder_layers == 0 || encoder_layers > 2) throw ConfigError("encoder_layers must be 1 or 2");
  if (h_layers == 0) throw ConfigError("h_layers must be positive");
}

void TrainingTrace::write_csv(std::ostream& out) const {
  out << "epoch,elbo,kl_mean,recon_mean,val_metric\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.elbo) << ',' << format_double(e.kl_mean) << ','
        << format_double(e.recon_mean) << ',';
    if (!std::isnan(e.val_metric)) out << format_double(e.val_metric);
    out << '\n';
  }
}

std::string TrainingTrace::to_csv() const {
  std::ostringstream ss;
  write_csv(ss);
  return ss.str();
}

double evaluate_domains(const EncoderParams& enc, const PredictorParams& pred,
                        const DomainDataset& ds, std::size_t samples, std::uint64_t seed) {
  double hits_or_sse = 0.0;
  std::size_t n = 0;
  for (const auto& d : ds.domains) {
    InferenceConfig icfg{samples, derive_seed(seed, static_cast<std::uint64_t>(d.id)),
                         PredictionMode::stochastic};
    const auto preds = predict_domain(enc, pred, d.x, d.x, icfg);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (ds.task.is_classification()) {
        hits_or_sse += static_cast<double>(preds[i].argmax()) == d.y[i] ? 1.0 : 0.0;
      } else {
        const double r = preds[i].mean - d.y[i];
        hits_or_sse += r * r;
      }
    }
    n += preds.size();
  }
  if (n == 0) throw EmptyInputError("no points to evaluate");
  const double avg = hits_or_sse / static_cast<double>(n);
  return ds.task.is_classification() ? avg : std::sqrt(avg);
}

TrainedModel train(const DomainDataset& train_set, const TrainConfig& cfg,
                   const DomainDataset& validation) {
  cfg.validate();
  train_set.validate();
  if (train_set.domains.empty()) throw EmptyInputError("training set has no domains");
  if (!validation.domains.empty() &&
      (validation.dim != train_set.dim || !(validation.task == train_set.task))) {
    throw SchemaError("validation data does not match the training data");
  }

  Rng init_rng(derive_seed(cfg.seed, 1));
  TrainedModel model;
  model.source_ids = train_set.ids();
  model.encoder = EncoderParams::init(
      {train_set.dim, cfg.effective_encoder_hidden(), cfg.latent_dim, cfg.encoder_layers}, init_rng);
  model.predictor = PredictorParams::init(
      {train_set.dim, cfg.hidden, cfg.latent_dim, cfg.h_layers, train_set.task}, init_rng);

  auto params = model.encoder.params();
  for (auto& p : model.predictor.params()) params.push_back(p);
  Adam adam(params, cfg.lr);

  DomainBatchSampler sampler(train_set, cfg.minibatch, cfg.likelihood_rescale,
                             cfg.encode_full_set, derive_seed(cfg.seed, 2));
  Rng noise(derive_seed(cfg.seed, 3));
  const std::uint64_t val_seed = derive_seed(cfg.seed, 4);

  EncoderParams best_enc = model.encoder;
  PredictorParams best_pred = model.predictor;
  const bool can_select = !validation.domains.empty() && cfg.max_epochs >= cfg.min_selection_epoch;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t domain_terms = 0;
    for (std::size_t step = 0; step < sampler.steps_per_epoch(); ++step) {
      auto batch = sampler.next();
      Tape tape;
      ElboGraph g = build_elbo(tape, model.encoder, model.predictor, batch, noise, cfg.train_samples);
      if (!std::isfinite(g.terms.total)) {
        throw TrainingError("non-finite objective at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step));
      }
      tape.backward(scale(g.total, -1.0));
      try {
        adam.step(tape);
      } catch (const OptimizerError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
      }
      rec.elbo += g.terms.total;
      for (std::size_t d = 0; d < g.terms.kl.size(); ++d) {
        rec.kl_mean += g.terms.kl[d];
        rec.recon_mean += g.terms.recon[d];
      }
      domain_terms += g.terms.kl.size();
    }
    rec.elbo /= static_cast<double>(sampler.steps_per_epoch());
    rec.kl_mean /= static_cast<double>(domain_terms);
    rec.recon_mean /= static_cast<double>(domain_terms);

    if (can_select && epoch >= cfg.min_selection_epoch) {
      rec.val_metric = evaluate_domains(model.encoder, model.predictor, validation,
                                        cfg.validation_samples, val_seed);
      if (model.trace.best_epoch == 0 ||
          metric_better(train_set.task, rec.val_metric, model.trace.best_metric)) {
        model.trace.best_epoch = epoch;
        model.trace.best_metric = rec.val_metric;
        best_enc = model.encoder;
        best_pred = model.predictor;
      }
    }
    model.trace.epochs.push_back(rec);
  }

  if (can_select) {
    model.encoder = std::move(best_enc);
    model.predictor = std::move(best_pred);
  } else {
    model.trace.best_epoch = cfg.max_epochs;
  }
  return model;
}

}  // namespace zsda
