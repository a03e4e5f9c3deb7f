#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "zsda/encoder.hpp"
#include "zsda/errors.hpp"
#include "zsda/predictor.hpp"

using namespace zsda;
using zsda::testing::micro_model;
using zsda::testing::numeric_gradient;
using zsda::testing::random_matrix;
using zsda::testing::relative_error;

namespace {

EncoderParams random_encoder(std::size_t m, std::size_t h, std::size_t k, std::uint64_t seed) {
  return micro_model(m, k, h, TaskSpec::classification(2), seed).encoder;
}

// eta = identity with zero bias, rho_mu = identity, rho_logvar = zero.
EncoderParams identity_encoder(std::size_t m) {
  EncoderParams p;
  p.eta.push_back(Dense{Matrix::identity(m), Matrix(1, m)});
  p.rho_mu = Dense{Matrix::identity(m), Matrix(1, m)};
  p.rho_logvar = Dense{Matrix(m, m), Matrix(1, m)};
  return p;
}

void expect_posteriors_near(const LatentPosterior& a, const LatentPosterior& b, double rel) {
  ASSERT_EQ(a.dim(), b.dim());
  for (std::size_t k = 0; k < a.dim(); ++k) {
    EXPECT_LE(std::abs(a.mu[k] - b.mu[k]), rel * std::max(1.0, std::abs(a.mu[k])));
    EXPECT_LE(std::abs(a.logvar[k] - b.logvar[k]), rel * std::max(1.0, std::abs(a.logvar[k])));
  }
}

}  // namespace

TEST(Encoder, PermutationInvariant) {
  Rng rng(1);
  const auto enc = random_encoder(3, 16, 2, 2);
  const Matrix x = random_matrix(64, 3, rng);
  const auto base = encode(enc, x);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::size_t> order(64);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    expect_posteriors_near(encode(enc, x.select_rows(order)), base, 1e-9);
  }
}

TEST(Encoder, DuplicatedSetEqualsOriginal) {
  Rng rng(3);
  const auto enc = random_encoder(2, 8, 3, 4);
  const Matrix x = random_matrix(1, 2, rng);
  const Matrix xx = vstack(std::vector<Matrix>{x, x});
  const auto a = encode(enc, x);
  const auto b = encode(enc, xx);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.logvar, b.logvar);
  const Matrix many = random_matrix(5, 2, rng);
  const Matrix copies = vstack(std::vector<Matrix>{many, many, many});
  expect_posteriors_near(encode(enc, copies), encode(enc, many), 1e-12);
}

TEST(Encoder, IdentityNetworksGiveArithmeticMean) {
  Rng rng(5);
  const Matrix x = random_matrix(10, 3, rng, 0.1, 2.0);  // positive, so the ReLU is transparent
  const auto post = encode(identity_encoder(3), x);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < 10; ++i) m += x(i, j);
    EXPECT_NEAR(post.mu[j], m / 10.0, 1e-12);
    EXPECT_EQ(post.logvar[j], 0.0);
  }
}

TEST(Encoder, Errors) {
  const auto enc = random_encoder(3, 4, 2, 6);
  EXPECT_THROW(encode(enc, Matrix(0, 3)), EmptyInputError);
  EXPECT_THROW(encode(enc, Matrix(4, 2)), ShapeError);
}

TEST(Encoder, EtaSharedAndHeadsDistinct) {
  Rng rng(7);
  auto enc = EncoderParams::init({4, 8, 2, 2}, rng);
  EXPECT_EQ(enc.eta.size(), 2u);
  EXPECT_NE(enc.rho_mu.weight, enc.rho_logvar.weight);
  std::vector<std::string> names;
  for (const auto& p : enc.params()) names.push_back(p.name);
  EXPECT_EQ(names.front(), "encoder.eta.0.weight");
  EXPECT_EQ(std::count_if(names.begin(), names.end(), [](const std::string& n) { return n.find("rho") != n.npos; }), 4);
}

TEST(Encoder, LogvarIsClamped) {
  auto enc = identity_encoder(1);
  enc.rho_logvar.bias = Matrix{{50.0}};
  EXPECT_EQ(encode(enc, Matrix{{1.0}}).logvar[0], kLogvarMax);
  enc.rho_logvar.bias = Matrix{{-50.0}};
  EXPECT_EQ(encode(enc, Matrix{{1.0}}).logvar[0], kLogvarMin);
  for (double s : encode(enc, Matrix{{1.0}}).stddev()) EXPECT_GT(s, 0.0);
}

TEST(SampleZ, ZeroVarianceLimitReturnsMean) {
  LatentPosterior post{0, {0.3, -1.2}, {-40.0, -40.0}};
  Rng rng(8);
  for (const auto& z : sample_z(post, rng, 100)) {
    EXPECT_NEAR(z[0], 0.3, 1e-8);
    EXPECT_NEAR(z[1], -1.2, 1e-8);
  }
}

TEST(SampleZ, SampleMeanWithinThreeStandardErrors) {
  LatentPosterior post{0, {0.5, -2.0}, {std::log(4.0), 0.0}};
  Rng rng(9);
  const std::size_t n = 100000;
  std::vector<double> sum(2, 0.0);
  for (const auto& z : sample_z(post, rng, n))
    for (int k = 0; k < 2; ++k) sum[k] += z[k];
  const auto sd = post.stddev();
  for (int k = 0; k < 2; ++k) {
    EXPECT_LT(std::abs(sum[k] / n - post.mu[k]), 3.0 * sd[k] / std::sqrt(double(n)));
  }
}

TEST(SampleZ, TapeAndPlainDrawsAgree) {
  LatentPosterior post{0, {0.1, 0.2, 0.3}, {-0.5, 0.0, 0.7}};
  Rng a(10), b(10);
  const auto plain = sample_z(post, a, 4);
  Tape tape;
  const auto vars = sample_z(tape, as_vars(tape, post), b, 4);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(plain[l][k], vars[l].value()(0, k));
}

TEST(SampleZ, GradientOfMeanSampleWithFrozenNoise) {
  Matrix mu{{0.4, -0.3}};
  Matrix lv{{0.2, -0.6}};
  auto f = [&](Tape& t) {
    Rng rng(11);  // frozen noise: identical draws on every evaluation
    PosteriorVars post{t.param(mu), t.param(lv)};
    Var acc;
    for (Var z : sample_z(t, post, rng, 5)) acc = acc.valid() ? add(acc, z) : z;
    return sum(scale(acc, 1.0 / 5.0));
  };
  Tape tape;
  tape.backward(f(tape));
  for (double g : tape.grad_of(mu)->data()) EXPECT_NEAR(g, 1.0, 1e-12);
  const Matrix num_mu = numeric_gradient([&] { Tape t(false); return f(t).scalar(); }, mu);
  const Matrix num_lv = numeric_gradient([&] { Tape t(false); return f(t).scalar(); }, lv);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(num_mu[i], 1.0, 1e-8);
    EXPECT_LT(relative_error((*tape.grad_of(lv))[i], num_lv[i]), 1e-6);
  }
}

TEST(Predictor, ZeroClassWeightsGiveUniformSoftmax) {
  Rng rng(12);
  auto p = PredictorParams::init({3, 5, 2, 1, TaskSpec::classification(4)}, rng);
  p.g.weight.fill(0.0);
  p.g.bias.fill(0.0);
  const std::vector<double> x{0.3, -0.1, 0.8}, z{1.0, -2.0};
  for (double l : logits(p, x, z)) EXPECT_EQ(l, 0.0);
  for (double q : predict_given_z(p, x, z).probabilities) EXPECT_DOUBLE_EQ(q, 0.25);
}

TEST(Predictor, LogitsBoundedByFeatureL1Norm) {
  Rng rng(13);
  const auto m = micro_model(3, 2, 6, TaskSpec::classification(3), 14, 2.0);
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> x{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const std::vector<double> z{rng.normal(), rng.normal()};
    Tape tape(false);
    const Matrix h = features(tape, m.predictor, tape.constant(Matrix::row(x))).value();
    double l1 = 0;
    for (double v : h.data()) l1 += std::abs(v);
    for (double f : logits(m.predictor, x, z)) EXPECT_LE(std::abs(f), l1 + 1e-12);
  }
}

TEST(Predictor, HandEvaluatedLogitsWithUnitWidth) {
  // h(x) = relu(1 * x + 0) = 2 for x = 2; g-linear outputs (0.5, -0.5) from bias only.
  PredictorParams p;
  p.task = TaskSpec::classification(2);
  p.h.push_back(Dense{Matrix{{1.0}}, Matrix{{0.0}}});
  p.g = Dense{Matrix{{0.0, 0.0}}, Matrix{{0.5, -0.5}}};
  const auto f = logits(p, std::vector<double>{2.0}, std::vector<double>{0.7});
  EXPECT_NEAR(f[0], 0.9242343145200195, 1e-12);
  EXPECT_NEAR(f[1], -0.9242343145200195, 1e-12);
}

TEST(Predictor, LogLikelihoodExamples) {
  const std::vector<double> uniform(10, 0.3);
  EXPECT_NEAR(log_softmax(uniform)[4], -2.302585092994046, 1e-12);
  const auto big = log_softmax(std::vector<double>{1000.0, 0.0});
  EXPECT_TRUE(std::isfinite(big[0]) && std::isfinite(big[1]));
  EXPECT_NEAR(big[0], 0.0, 1e-12);

  // Regression with f = 1: h = 1, tanh gate chosen so that output is exactly 1.
  PredictorParams r;
  r.task = TaskSpec::regression();
  r.h.push_back(Dense{Matrix{{0.0}}, Matrix{{1.0 / std::tanh(1.0)}}});
  r.g = Dense{Matrix{{0.0}}, Matrix{{1.0}}};
  EXPECT_NEAR(predict_given_z(r, std::vector<double>{0.5}, std::vector<double>{0.0}).mean, 1.0, 1e-12);
  EXPECT_NEAR(log_likelihood(r, std::vector<double>{0.5}, 3.0, std::vector<double>{0.0}), -2.0, 1e-12);
}

TEST(Predictor, LabelOutOfRange) {
  const auto m = micro_model(2, 1, 3, TaskSpec::classification(3), 15);
  EXPECT_THROW(log_likelihood(m.predictor, std::vector<double>{0.1, 0.2}, 3.0, std::vector<double>{0.0}),
               LabelError);
  EXPECT_THROW(class_index(-1.0, 3), LabelError);
  EXPECT_THROW(class_index(1.5, 3), LabelError);
  EXPECT_EQ(class_index(2.0, 3), 2u);
}

TEST(Predictor, DimensionMismatch) {
  const auto m = micro_model(2, 2, 3, TaskSpec::classification(2), 16);
  EXPECT_THROW(logits(m.predictor, std::vector<double>{0.1}, std::vector<double>{0.0, 0.0}), ShapeError);
  EXPECT_THROW(logits(m.predictor, std::vector<double>{0.1, 0.2}, std::vector<double>{0.0}), ShapeError);
}

TEST(Predictor, SoftmaxProperties) {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> l(5);
    for (auto& v : l) v = rng.uniform(-1000, 1000);
    const auto p = softmax(l);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
    std::vector<double> shifted = l;
    for (auto& v : shifted) v += 37.5;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
    PredictiveDistribution d{p, 0.0};
    EXPECT_EQ(d.argmax(), static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin()));
  }
  EXPECT_EQ((PredictiveDistribution{{0.4, 0.4, 0.2}, 0.0}).argmax(), 0u);
}

TEST(Predictor, DependsOnLatentVector) {
  const auto m = micro_model(3, 2, 6, TaskSpec::classification(3), 18);
  const std::vector<double> x{0.2, -0.5, 0.9};
  const auto a = predict_given_z(m.predictor, x, std::vector<double>{1.0, -1.0});
  const auto b = predict_given_z(m.predictor, x, std::vector<double>{-0.5, 2.0});
  double diff = 0;
  for (std::size_t c = 0; c < 3; ++c) diff += std::abs(a.probabilities[c] - b.probabilities[c]);
  EXPECT_GT(diff, 1e-3);
}

TEST(Predictor, LogLikelihoodGradientsMatchFiniteDifferences) {
  auto m = micro_model(3, 2, 4, TaskSpec::classification(3), 19);
  Rng rng(20);
  const Matrix x = random_matrix(6, 3, rng);
  const std::vector<double> y{0, 1, 2, 2, 1, 0};
  Matrix z{{0.3, -0.8}};
  auto f = [&](Tape& t) {
    Var out = head_outputs(features(t, m.predictor, t.constant(x)), class_weights(t, m.predictor, t.param(z)));
    return sum(log_likelihood(m.predictor, out, y));
  };
  Tape tape;
  tape.backward(f(tape));
  std::vector<ParamRef> refs = m.predictor.params();
  refs.push_back({"z", &z});
  for (auto& p : refs) {
    const Matrix num = numeric_gradient([&] { Tape t(false); return f(t).scalar(); }, *p.value);
    const Matrix* g = tape.grad_of(*p.value);
    ASSERT_NE(g, nullptr) << p.name;
    for (std::size_t i = 0; i < num.size(); ++i) EXPECT_LT(relative_error((*g)[i], num[i]), 1e-4) << p.name;
  }
}
