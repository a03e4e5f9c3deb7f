#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "zsda/errors.hpp"
#include "zsda/inference.hpp"
#include "zsda/objective.hpp"

using namespace zsda;
using zsda::testing::micro_model;
using zsda::testing::numeric_gradient;
using zsda::testing::random_matrix;
using zsda::testing::relative_error;

namespace {

DomainBatch batch_of(int id, Matrix x, std::vector<double> y) {
  DomainBatch b;
  b.domain_id = id;
  b.x = std::move(x);
  b.y = std::move(y);
  return b;
}

// Two well separated blobs per class in one domain.
DomainDataset separable_domain(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Domain d;
  d.id = 0;
  d.x = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double cls = static_cast<double>(i % 2);
    d.x(i, 0) = (cls == 0 ? -1.5 : 1.5) + 0.3 * rng.normal();
    d.x(i, 1) = 0.3 * rng.normal();
    d.y.push_back(cls);
  }
  return DomainDataset{TaskSpec::classification(2), 2, {d}};
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.hidden = 16;
  c.minibatch = 40;
  c.max_epochs = 30;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Kl, Examples) {
  EXPECT_EQ(kl_standard_normal(LatentPosterior{0, {0.0, 0.0}, {0.0, 0.0}}), 0.0);
  EXPECT_DOUBLE_EQ(kl_standard_normal(LatentPosterior{0, {1.0, 0.0}, {0.0, 0.0}}), 0.5);
  EXPECT_NEAR(kl_standard_normal(LatentPosterior{0, {0.0}, {1.0}}), 0.5 * (std::exp(1.0) - 2.0), 1e-15);
}

TEST(Kl, AgreesWithMonteCarlo) {
  // KL(q || p) = E_q[ln q(z) - ln p(z)], K = 1, sigma^2 = e.
  Rng rng(1);
  const double sd = std::exp(0.5);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double e = rng.normal();
    const double z = sd * e;
    acc += (-0.5 * e * e - std::log(sd)) - (-0.5 * z * z);
  }
  EXPECT_NEAR(acc / n, 0.359140914229522, 1e-2);
}

TEST(Kl, NonNegativeAndZeroOnlyAtPrior) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    LatentPosterior p{0, {rng.uniform(-3, 3), rng.uniform(-3, 3)}, {rng.uniform(-8, 8), rng.uniform(-8, 8)}};
    EXPECT_GT(kl_standard_normal(p), 0.0);
  }
}

TEST(Kl, TapeVersionMatchesClosedForm) {
  Matrix mu{{0.3, -1.1, 2.0}};
  Matrix lv{{-0.4, 0.9, 0.0}};
  Tape tape;
  Var kl = kl_standard_normal(PosteriorVars{tape.param(mu), tape.param(lv)});
  EXPECT_DOUBLE_EQ(kl.scalar(), kl_standard_normal(LatentPosterior{0, mu.to_vector(), lv.to_vector()}));
  tape.backward(kl);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR((*tape.grad_of(mu))[k], mu[k], 1e-15);
    EXPECT_NEAR((*tape.grad_of(lv))[k], 0.5 * (std::exp(lv[k]) - 1.0), 1e-15);
  }
}

TEST(Elbo, KlTermMatchesEncodedPosterior) {
  const auto m = micro_model(3, 2, 4, TaskSpec::classification(2), 3);
  Rng rng(4);
  std::vector<DomainBatch> batch{batch_of(0, random_matrix(5, 3, rng), {0, 1, 1, 0, 1}),
                                 batch_of(7, random_matrix(3, 3, rng), {1, 0, 0})};
  Rng noise(5);
  const auto terms = elbo_minibatch(m.encoder, m.predictor, batch, noise, 2);
  double total = 0.0;
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_NEAR(terms.kl[d], kl_standard_normal(encode(m.encoder, batch[d].x)), 1e-12);
    EXPECT_GE(terms.kl[d], 0.0);
    total += terms.recon[d] - terms.kl[d];
  }
  EXPECT_DOUBLE_EQ(terms.total, total);
}

TEST(Elbo, ZeroVarianceSamplingCollapsesToMean) {
  // The encoder clamps logvar at -10, so the limit is exercised with an explicit posterior.
  const auto m = micro_model(2, 2, 4, TaskSpec::classification(3), 6);
  Rng rng(7);
  const Matrix x = random_matrix(4, 2, rng);
  const std::vector<double> y{0, 2, 1, 2};
  const LatentPosterior post{0, {0.4, -0.9}, {-40.0, -40.0}};
  Tape tape;
  Rng noise(8);
  Var z = sample_z(tape, as_vars(tape, post), noise, 1).front();
  Var out = head_outputs(features(tape, m.predictor, tape.constant(x)), class_weights(tape, m.predictor, z));
  const double sampled = sum(log_likelihood(m.predictor, out, y)).scalar();
  EXPECT_NEAR(sampled, zsda::testing::total_log_likelihood(m.predictor, x, y, post.mu), 1e-6);
}

TEST(Elbo, EmptyDomainInBatchIsRejected) {
  const auto m = micro_model(2, 1, 3, TaskSpec::classification(2), 9);
  std::vector<DomainBatch> batch{batch_of(0, Matrix(0, 2), {})};
  Rng noise(1);
  EXPECT_THROW(elbo_minibatch(m.encoder, m.predictor, batch, noise, 1), EmptyInputError);
}

TEST(Elbo, GradientsMatchFiniteDifferencesWithFrozenNoise) {
  auto m = micro_model(3, 2, 4, TaskSpec::classification(2), 10);
  Rng rng(11);
  std::vector<DomainBatch> batch{batch_of(0, random_matrix(4, 3, rng), {0, 1, 1, 0}),
                                 batch_of(1, random_matrix(4, 3, rng), {1, 1, 0, 0})};
  batch[1].weight = 2.5;
  auto objective = [&](Tape& t) {
    Rng noise(12);
    return build_elbo(t, m.encoder, m.predictor, batch, noise, 1).total;
  };
  Tape tape;
  tape.backward(objective(tape));
  auto refs = m.encoder.params();
  for (auto& p : m.predictor.params()) refs.push_back(p);
  for (auto& p : refs) {
    const Matrix num = numeric_gradient([&] { Tape t(false); return objective(t).scalar(); }, *p.value);
    const Matrix* g = tape.grad_of(*p.value);
    ASSERT_NE(g, nullptr) << p.name;
    for (std::size_t i = 0; i < num.size(); ++i)
      EXPECT_LT(relative_error((*g)[i], num[i]), 1e-4) << p.name << "[" << i << "]";
  }
}

TEST(Elbo, RegressionGradientsMatchFiniteDifferences) {
  auto m = micro_model(2, 2, 3, TaskSpec::regression(), 13);
  Rng rng(14);
  std::vector<DomainBatch> batch{batch_of(0, random_matrix(5, 2, rng), {0.3, -1.0, 0.8, 1.5, -0.2})};
  auto objective = [&](Tape& t) {
    Rng noise(15);
    return build_elbo(t, m.encoder, m.predictor, batch, noise, 3).total;
  };
  Tape tape;
  tape.backward(objective(tape));
  auto refs = m.encoder.params();
  for (auto& p : m.predictor.params()) refs.push_back(p);
  for (auto& p : refs) {
    const Matrix num = numeric_gradient([&] { Tape t(false); return objective(t).scalar(); }, *p.value);
    for (std::size_t i = 0; i < num.size(); ++i)
      EXPECT_LT(relative_error((*tape.grad_of(*p.value))[i], num[i]), 1e-4) << p.name;
  }
}

TEST(Elbo, LowerBoundsQuadratureMarginal) {
  Rng rng(16);
  for (int t = 0; t < 10; ++t) {
    const auto m = micro_model(2, 1, 3, TaskSpec::classification(2), 100 + t);
    const Matrix x = random_matrix(4, 2, rng);
    const std::vector<double> y{0, 1, 1, 0};
    const auto post = encode(m.encoder, x);
    const double elbo = zsda::testing::expected_log_likelihood_k1(m.predictor, x, y, post.mu[0],
                                                                  post.stddev()[0]) -
                        kl_standard_normal(post);
    const double marginal = zsda::testing::log_marginal_k1(m.predictor, x, y);
    EXPECT_LE(elbo, marginal + 1e-3) << "setting " << t;
  }
}

TEST(Elbo, MonteCarloEstimateMatchesQuadratureExpectation) {
  const auto m = micro_model(2, 1, 3, TaskSpec::classification(2), 17);
  Rng rng(18);
  const Matrix x = random_matrix(4, 2, rng);
  const std::vector<double> y{1, 0, 1, 1};
  const auto post = encode(m.encoder, x);
  const double expected = zsda::testing::expected_log_likelihood_k1(m.predictor, x, y, post.mu[0],
                                                                    post.stddev()[0]);
  std::vector<DomainBatch> batch{batch_of(0, x, y)};
  Rng noise(19);
  const auto terms = elbo_minibatch(m.encoder, m.predictor, batch, noise, 20000);
  EXPECT_NEAR(terms.recon[0], expected, 0.02 * std::max(1.0, std::abs(expected)));
}

TEST(Sampler, EqualSharesAndEpochLength) {
  DomainDataset ds{TaskSpec::classification(2), 1, {}};
  for (int d = 0; d < 3; ++d) {
    Domain dom;
    dom.id = d * 10;
    dom.x = Matrix(20 + 10 * d, 1, 0.5);
    dom.y.assign(dom.x.rows(), 0.0);
    ds.domains.push_back(dom);
  }
  DomainBatchSampler s(ds, 30, true, false, 1);
  EXPECT_EQ(s.steps_per_epoch(), 3u);  // ceil(90 / 30)
  const auto b = s.next();
  ASSERT_EQ(b.size(), 3u);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_EQ(b[d].x.rows(), 10u);
    EXPECT_EQ(b[d].domain_id, static_cast<int>(10 * d));
    EXPECT_DOUBLE_EQ(b[d].weight, (20.0 + 10.0 * d) / 10.0);
    EXPECT_EQ(b[d].encode_set, nullptr);
  }
  EXPECT_THROW(DomainBatchSampler(ds, 2, true, false, 1), ConfigError);
  DomainBatchSampler full(ds, 30, false, true, 1);
  const auto fb = full.next();
  EXPECT_EQ(fb[0].weight, 1.0);
  EXPECT_EQ(fb[0].encode_set, &ds.domains[0].x);
}

TEST(Sampler, RescaledObjectiveIsUnbiased) {
  // With the posterior encoded from the full set and frozen noise, the subset objective
  // scaled by N / |subset| averages to the full-data objective.
  const auto m = micro_model(2, 2, 3, TaskSpec::classification(2), 20);
  Rng rng(21);
  Domain dom;
  dom.id = 0;
  dom.x = random_matrix(6, 2, rng);
  dom.y = {0, 1, 1, 0, 1, 0};
  DomainDataset ds{TaskSpec::classification(2), 2, {dom}};

  std::vector<DomainBatch> full{batch_of(0, dom.x, dom.y)};
  Rng n0(22);
  const double target = elbo_minibatch(m.encoder, m.predictor, full, n0, 1).recon[0];

  DomainBatchSampler sampler(ds, 2, true, true, 23);
  const int draws = 20000;
  double s = 0, ss = 0;
  for (int i = 0; i < draws; ++i) {
    auto batch = sampler.next();
    Rng noise(22);
    const double r = elbo_minibatch(m.encoder, m.predictor, batch, noise, 1).recon[0];
    s += r;
    ss += r * r;
  }
  const double mean = s / draws;
  const double se = std::sqrt((ss / draws - mean * mean) / draws);
  EXPECT_LT(std::abs(mean - target), 3.0 * se) << mean << " vs " << target;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.train_samples = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.latent_dim = 65;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, SeparableSingleDomain) {
  const auto ds = separable_domain(200, 24);
  auto cfg = small_config(25);
  cfg.max_epochs = 20;
  const auto model = train(ds, cfg, DomainDataset{});
  ASSERT_EQ(model.trace.epochs.size(), 20u);
  // Per-epoch values are noisy minibatch averages, so compare against the first epoch.
  for (std::size_t e = 2; e < 5; ++e) {
    EXPECT_GT(model.trace.epochs[e].elbo, model.trace.epochs[0].elbo) << "epoch " << e + 1;
  }
  EXPECT_GT(model.trace.epochs.back().elbo, model.trace.epochs[4].elbo);
  EXPECT_GE(evaluate_domains(model.encoder, model.predictor, ds, 10, 1), 0.95);
  EXPECT_EQ(model.trace.best_epoch, 20u);
}

TEST(Train, SeedDeterminism) {
  const auto ds = separable_domain(80, 26);
  const auto val = separable_domain(20, 27);
  auto cfg = small_config(28);
  cfg.max_epochs = 16;
  const auto a = train(ds, cfg, val);
  const auto b = train(ds, cfg, val);
  EXPECT_EQ(a.trace.best_metric, b.trace.best_metric);
  EXPECT_EQ(a.encoder.rho_mu.weight, b.encoder.rho_mu.weight);
  EXPECT_EQ(a.trace.to_csv(), b.trace.to_csv());
}

TEST(Train, SelectsBestValidationEpochAfterWarmup) {
  const auto ds = separable_domain(80, 29);
  const auto val = separable_domain(20, 30);
  auto cfg = small_config(31);
  cfg.max_epochs = 20;
  cfg.min_selection_epoch = 15;
  const auto model = train(ds, cfg, val);
  for (const auto& e : model.trace.epochs) EXPECT_EQ(std::isnan(e.val_metric), e.epoch < 15);
  EXPECT_GE(model.trace.best_epoch, 15u);
  double best = -1;
  for (const auto& e : model.trace.epochs)
    if (e.epoch >= 15) best = std::max(best, e.val_metric);
  EXPECT_EQ(model.trace.best_metric, best);
  EXPECT_EQ(evaluate_domains(model.encoder, model.predictor, val, cfg.validation_samples,
                             derive_seed(cfg.seed, 4)),
            best);
}

TEST(Train, TraceCsvLayout) {
  TrainingTrace t;
  t.epochs.push_back({1, -10.5, 0.25, -10.25, std::nan("")});
  t.epochs.push_back({2, -9.0, 0.5, -8.5, 0.75});
  EXPECT_EQ(t.to_csv(), "epoch,elbo,kl_mean,recon_mean,val_metric\n1,-10.5,0.25,-10.25,\n2,-9,0.5,-8.5,0.75\n");
}

TEST(Train, HeldOutRotatedDomainBeatsMajorityClass) {
  const auto ds = gen_rotated_gaussians({{0, 15, 30, 45, 60, 75}, 120, 3, 0.2, 32, 45.0});
  const auto sp = split(ds, SplitSpec{{2}, 0.8, 33});
  auto cfg = small_config(34);
  cfg.hidden = 32;
  cfg.minibatch = 100;
  cfg.max_epochs = 60;
  const auto model = train(sp.train, cfg, sp.val);
  const auto& target = sp.test.domains.front();
  std::vector<std::size_t> counts(3, 0);
  for (double y : target.y) ++counts[static_cast<std::size_t>(y)];
  const double majority =
      static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(target.size());
  const auto preds = predict_domain(model.encoder, model.predictor, target.x, target.x, InferenceConfig{});
  EXPECT_GT(accuracy(preds, target.y), majority + 0.2);
}
