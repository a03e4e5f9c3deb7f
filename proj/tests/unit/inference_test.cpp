#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "zsda/errors.hpp"
#include "zsda/inference.hpp"

using namespace zsda;
using zsda::testing::micro_model;
using zsda::testing::random_matrix;

namespace {

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

}  // namespace

TEST(Inference, ZeroVarianceStochasticEqualsPosteriorMean) {
  const auto m = micro_model(3, 2, 5, TaskSpec::classification(3), 1, 2.0);
  Rng rng(2);
  const Matrix q = random_matrix(6, 3, rng);
  const LatentPosterior post{0, {0.7, -0.2}, {-40.0, -40.0}};
  const auto a = predict_with_posterior(m.predictor, post, q, {50, 3, PredictionMode::stochastic});
  const auto b = predict_with_posterior(m.predictor, post, q, {1, 0, PredictionMode::posterior_mean});
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a[i].probabilities[c], b[i].probabilities[c], 1e-8);
}

TEST(Inference, PosteriorMeanModeUsesTheMean) {
  const auto m = micro_model(2, 2, 4, TaskSpec::classification(2), 3);
  Rng rng(4);
  const Matrix q = random_matrix(3, 2, rng);
  const LatentPosterior post{0, {0.5, 0.1}, {1.0, 0.5}};
  const auto out = predict_with_posterior(m.predictor, post, q, {7, 9, PredictionMode::posterior_mean});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto ref = predict_given_z(m.predictor, q.row_span(i), post.mu);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out[i].probabilities[c], ref.probabilities[c], 1e-14);
  }
}

TEST(Inference, ProbabilitiesFormADistribution) {
  const auto m = micro_model(3, 2, 4, TaskSpec::classification(4), 5, 3.0);
  Rng rng(6);
  const Matrix set = random_matrix(20, 3, rng);
  const auto preds = predict_domain(m.encoder, m.predictor, set, set, {10, 1, PredictionMode::stochastic});
  ASSERT_EQ(preds.size(), 20u);
  for (const auto& p : preds) {
    double s = 0.0;
    for (double v : p.probabilities) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Inference, AveragesProbabilitiesNotLogits) {
  const auto m = micro_model(2, 2, 4, TaskSpec::classification(3), 7, 2.5);
  Rng rng(8);
  const Matrix q = random_matrix(4, 2, rng);
  const LatentPosterior post{0, {0.3, -0.6}, {0.8, 0.4}};
  const InferenceConfig cfg{5, 11, PredictionMode::stochastic};
  const auto out = predict_with_posterior(m.predictor, post, q, cfg);

  Rng draws(cfg.seed);
  const auto zs = sample_z(post, draws, cfg.samples);
  double logit_gap = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> prob_avg(3, 0.0), logit_avg(3, 0.0);
    for (const auto& z : zs) {
      const auto lg = logits(m.predictor, q.row_span(i), z);
      const auto p = softmax(lg);
      for (std::size_t c = 0; c < 3; ++c) {
        prob_avg[c] += p[c] / 5.0;
        logit_avg[c] += lg[c] / 5.0;
      }
    }
    const auto via_logits = softmax(logit_avg);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(out[i].probabilities[c], prob_avg[c], 1e-12);
      logit_gap = std::max(logit_gap, std::abs(out[i].probabilities[c] - via_logits[c]));
    }
  }
  EXPECT_GT(logit_gap, 1e-4);
}

TEST(Inference, SharedDrawsAcrossQueries) {
  // The same query twice in one call gets the same answer.
  const auto m = micro_model(2, 2, 4, TaskSpec::classification(2), 9, 2.0);
  Matrix q(2, 2);
  q(0, 0) = q(1, 0) = 0.4;
  q(0, 1) = q(1, 1) = -0.3;
  const LatentPosterior post{0, {0.0, 0.0}, {0.5, 0.5}};
  const auto out = predict_with_posterior(m.predictor, post, q, {3, 2, PredictionMode::stochastic});
  EXPECT_EQ(out[0].probabilities, out[1].probabilities);
}

TEST(Inference, LargeSampleMatchesQuadrature) {
  const auto m = micro_model(2, 1, 4, TaskSpec::classification(3), 10, 2.0);
  Rng rng(12);
  const Matrix q = random_matrix(5, 2, rng);
  const LatentPosterior post{0, {0.4}, {std::log(0.6)}};
  const auto out = predict_with_posterior(m.predictor, post, q, {10000, 13, PredictionMode::stochastic});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto ref = zsda::testing::predictive_k1(m.predictor, q.row_span(i), 0.4, std::sqrt(0.6));
    EXPECT_LE(total_variation(out[i].probabilities, ref), 0.005) << "query " << i;
  }
}

TEST(Inference, VarianceShrinksWithMoreSamples) {
  const auto m = micro_model(2, 2, 4, TaskSpec::classification(2), 14, 2.0);
  Rng rng(15);
  const Matrix q = random_matrix(1, 2, rng);
  const LatentPosterior post{0, {0.2, -0.1}, {0.5, 0.5}};
  std::vector<double> variances;
  for (std::size_t L : {1u, 10u, 100u}) {
    double s = 0.0, ss = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      const double p = predict_with_posterior(m.predictor, post, q,
                                              {L, static_cast<std::uint64_t>(1000 + r), PredictionMode::stochastic})[0]
                           .probabilities[0];
      s += p;
      ss += p * p;
    }
    variances.push_back(ss / reps - (s / reps) * (s / reps));
  }
  EXPECT_GT(variances[0], variances[1]);
  EXPECT_GT(variances[1], variances[2]);
}

TEST(Inference, RegressionAveragesMeans) {
  const auto m = micro_model(2, 2, 3, TaskSpec::regression(), 16);
  Rng rng(17);
  const Matrix q = random_matrix(3, 2, rng);
  const LatentPosterior post{0, {0.1, 0.2}, {0.0, -1.0}};
  const InferenceConfig cfg{4, 18, PredictionMode::stochastic};
  const auto out = predict_with_posterior(m.predictor, post, q, cfg);
  Rng draws(cfg.seed);
  const auto zs = sample_z(post, draws, cfg.samples);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double avg = 0.0;
    for (const auto& z : zs) avg += predict_given_z(m.predictor, q.row_span(i), z).mean / 4.0;
    EXPECT_NEAR(out[i].mean, avg, 1e-12);
  }
}

TEST(Inference, Errors) {
  const auto m = micro_model(2, 2, 3, TaskSpec::classification(2), 19);
  const Matrix q(2, 2, 0.1);
  EXPECT_THROW(predict_domain(m.encoder, m.predictor, Matrix(0, 2), q, {}), EmptyInputError);
  EXPECT_THROW(predict_with_posterior(m.predictor, LatentPosterior{0, {0.0}, {0.0}}, q, {}), ShapeError);
  EXPECT_THROW(predict_with_posterior(m.predictor, LatentPosterior{0, {0.0, 0.0}, {0.0, 0.0}}, q,
                                      {0, 0, PredictionMode::stochastic}),
               ContractError);
}

TEST(Inference, DeterministicForFixedSeed) {
  const auto m = micro_model(2, 2, 3, TaskSpec::classification(2), 20, 2.0);
  Rng rng(21);
  const Matrix set = random_matrix(8, 2, rng);
  const InferenceConfig cfg{10, 22, PredictionMode::stochastic};
  const auto a = predict_domain(m.encoder, m.predictor, set, set, cfg);
  const auto b = predict_domain(m.encoder, m.predictor, set, set, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].probabilities, b[i].probabilities);
}

TEST(ExportPosteriors, PermutationInvariantAndIdForIdentity) {
  const auto m = micro_model(3, 2, 4, TaskSpec::classification(2), 23);
  Rng rng(24);
  Domain a;
  a.id = 4;
  a.x = random_matrix(30, 3, rng);
  a.y.assign(30, 0.0);
  Domain b = a;
  b.id = 9;
  std::vector<std::size_t> order(30);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  Domain c = a;
  c.id = 11;
  c.x = a.x.select_rows(order);
  const std::vector<Domain> domains{a, b, c};
  const auto posts = export_posteriors(m.encoder, domains);
  ASSERT_EQ(posts.size(), 3u);
  EXPECT_EQ(posts[0].domain_id, 4);
  EXPECT_EQ(posts[2].domain_id, 11);
  EXPECT_EQ(posts[0].mu, posts[1].mu);
  EXPECT_EQ(posts[0].logvar, posts[1].logvar);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(posts[0].mu[k], posts[2].mu[k], 1e-12);
    EXPECT_NEAR(posts[0].logvar[k], posts[2].logvar[k], 1e-12);
  }
}

TEST(Metrics, AccuracyAndRmse) {
  std::vector<PredictiveDistribution> cls(4);
  cls[0].probabilities = {0.9, 0.1};
  cls[1].probabilities = {0.2, 0.8};
  cls[2].probabilities = {0.5, 0.5};
  cls[3].probabilities = {0.6, 0.4};
  const std::vector<double> y{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(accuracy(cls, y), 0.75);

  std::vector<PredictiveDistribution> reg(2);
  reg[0].mean = 1.0;
  reg[1].mean = -1.0;
  const std::vector<double> t{4.0, 3.0};
  EXPECT_DOUBLE_EQ(rmse(reg, t), std::sqrt(12.5));

  EXPECT_THROW(accuracy(cls, std::vector<double>{0.0}), ShapeError);
  EXPECT_THROW(rmse({}, {}), EmptyInputError);
}
