#include "zsda/inference.hpp"

#include <cmath>

#include "zsda/errors.hpp"

namespace zsda {

std::vector<PredictiveDistribution> predict_with_posterior(const PredictorParams& pred,
                                                           const LatentPosterior& post,
                                                           const Matrix& queries,
                                                           const InferenceConfig& cfg) {
  if (cfg.samples == 0) throw ContractError("inference needs at least one sample");
  if (post.dim() != pred.latent_dim()) throw ShapeError("posterior dimension does not match predictor");

  std::vector<std::vector<double>> zs;
  if (cfg.mode == PredictionMode::posterior_mean) {
    zs.push_back(post.mu);
  } else {
    Rng rng(cfg.seed);
    zs = sample_z(post, rng, cfg.samples);
  }

  Tape tape(false);
  Var feats = features(tape, pred, tape.constant(queries));
  const std::size_t n = queries.rows();
  const std::size_t outputs = pred.outputs();
  Matrix acc(n, outputs);
  for (const auto& z : zs) {
    Var out = head_outputs(feats, class_weights(tape, pred, tape.constant(Matrix::row(z))));
    const Matrix& o = out.value();
    for (std::size_t i = 0; i < n; ++i) {
      if (pred.task.is_classification()) {
        const auto p = softmax(o.row_span(i));
        for (std::size_t c = 0; c < outputs; ++c) acc(i, c) += p[c];
      } else {
        acc(i, 0) += o(i, 0);
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(zs.size());
  std::vector<PredictiveDistribution> result(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pred.task.is_classification()) {
      auto& p = result[i].probabilities;
      p.resize(outputs);
      double total = 0.0;
      for (std::size_t c = 0; c < outputs; ++c) total += acc(i, c) * inv;
      for (std::size_t c = 0; c < outputs; ++c) p[c] = acc(i, c) * inv / total;
    } else {
      result[i].mean = acc(i, 0) * inv;
    }
  }
  return result;
}

std::vector<PredictiveDistribution> predict_domain(const EncoderParams& enc,
                                                   const PredictorParams& pred,
                                                   const Matrix& unseen_set, const Matrix& queries,
                                                   const InferenceConfig& cfg) {
  if (unseen_set.rows() == 0) throw EmptyInputError("unseen domain has no feature vectors");
  if (queries.rows() > 0 && queries.cols() != pred.input_dim()) {
    throw ShapeError("query dimension does not match the predictor");
  }
  return predict_with_posterior(pred, encode(enc, unseen_set), queries, cfg);
}

std::vector<LatentPosterior> export_posteriors(const EncoderParams& enc,
                                               std::span<const Domain> domains) {
  std::vector<LatentPosterior> out;
  out.reserve(domains.size());
  for (const auto& d : domains) out.push_back(encode(enc, d.x, d.id));
  return out;
}

double accuracy(std::span<const PredictiveDistribution> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) throw ShapeError("accuracy: size mismatch");
  if (preds.empty()) throw EmptyInputError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (static_cast<double>(preds[i].argmax()) == targets[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double rmse(std::span<const PredictiveDistribution> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) throw ShapeError("rmse: size mismatch");
  if (preds.empty()) throw EmptyInputError("rmse of an empty set");
  double ss = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double r = preds[i].mean - targets[i];
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(preds.size()));
}

}  // namespace zsda
