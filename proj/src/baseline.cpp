#include "zsda/baseline.hpp"

#include <cmath>
#include <numeric>

#include "zsda/errors.hpp"
#include "zsda/inference.hpp"

namespace zsda {

BaselineParams BaselineParams::init(std::size_t input_dim, std::size_t width, std::size_t layers,
                                    TaskSpec task, Rng& rng) {
  if (input_dim == 0 || width == 0 || layers == 0) throw ShapeError("baseline dimensions must be positive");
  BaselineParams p;
  p.task = task;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    p.hidden.push_back(Dense::init(in, width, rng));
    in = width;
  }
  p.output = Dense::init(in, task.outputs(), rng);
  return p;
}

std::vector<ParamRef> BaselineParams::params() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string prefix = "baseline.hidden." + std::to_string(l);
    out.push_back({prefix + ".weight", &hidden[l].weight});
    out.push_back({prefix + ".bias", &hidden[l].bias});
  }
  out.push_back({"baseline.output.weight", &output.weight});
  out.push_back({"baseline.output.bias", &output.bias});
  return out;
}

namespace {

Var baseline_outputs(Tape& tape, const BaselineParams& p, const Matrix& x) {
  return p.output.forward(tape, relu_stack(tape, p.hidden, tape.constant(x)));
}

// Mean per-point log-likelihood of the targets.
Var mean_log_likelihood(const BaselineParams& p, Var outputs, std::span<const double> y) {
  if (p.task.is_classification()) {
    std::vector<std::size_t> cols(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) cols[i] = class_index(y[i], p.task.classes);
    return mean(pick(log_softmax(outputs), cols));
  }
  Var t = outputs.tape().constant(Matrix(y.size(), 1, std::vector<double>(y.begin(), y.end())));
  Var r = sub(t, outputs);
  return scale(mean(mul(r, r)), -0.5);
}

double evaluate(const BaselineParams& p, const PooledData& data) {
  const auto preds = predict_baseline(p, data.x);
  return p.task.is_classification() ? accuracy(preds, data.y) : rmse(preds, data.y);
}

}  // namespace

std::vector<PredictiveDistribution> predict_baseline(const BaselineParams& params,
                                                     const Matrix& x) {
  Tape tape(false);
  const Matrix& o = baseline_outputs(tape, params, x).value();
  std::vector<PredictiveDistribution> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (params.task.is_classification()) {
      out[i].probabilities = softmax(o.row_span(i));
    } else {
      out[i].mean = o(i, 0);
    }
  }
  return out;
}

TrainedBaseline train_baseline(const PooledData& train_set, const PooledData& validation,
                               TaskSpec task, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw EmptyInputError("baseline training set is empty");
  if (train_set.x.rows() != train_set.size()) throw ShapeError("pooled features/targets mismatch");

  Rng init_rng(derive_seed(cfg.seed, 11));
  TrainedBaseline result;
  result.params = BaselineParams::init(train_set.x.cols(), cfg.hidden, cfg.h_layers, task, init_rng);
  Adam adam(result.params.params(), cfg.lr);
  Rng order_rng(derive_seed(cfg.seed, 12));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(cfg.minibatch, train_set.size());
  const std::size_t steps = (train_set.size() + batch - 1) / batch;
  const bool can_select = validation.size() > 0 && cfg.max_epochs >= cfg.min_selection_epoch;
  BaselineParams best = result.params;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t begin = s * batch;
      const std::size_t end = std::min(begin + batch, order.size());
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      std::vector<double> y;
      y.reserve(rows.size());
      for (auto r : rows) y.push_back(train_set.y[r]);
      Tape tape;
      Var ll = mean_log_likelihood(result.params,
                                   baseline_outputs(tape, result.params, train_set.x.select_rows(rows)), y);
      if (!std::isfinite(ll.scalar())) {
        throw TrainingError("non-finite baseline loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(s));
      }
      tape.backward(scale(ll, -1.0));
      try {
        adam.step(tape);
      } catch (const OptimizerError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      rec.elbo += ll.scalar();
    }
    rec.elbo /= static_cast<double>(steps);
    rec.recon_mean = rec.elbo;
    if (can_select && epoch >= cfg.min_selection_epoch) {
      rec.val_metric = evaluate(result.params, validation);
      if (result.trace.best_epoch == 0 ||
          metric_better(task, rec.val_metric, result.trace.best_metric)) {
        result.trace.best_epoch = epoch;
        result.trace.best_metric = rec.val_metric;
        best = result.params;
      }
    }
    result.trace.epochs.push_back(rec);
  }
  if (can_select) {
    result.params = std::move(best);
  } else {
    result.trace.best_epoch = cfg.max_epochs;
  }
  return result;
}

}  // namespace zsda
