#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "xtime/backbone.hpp"
#include "xtime/error.hpp"
#include "xtime/losses.hpp"
#include "xtime/rng.hpp"

namespace xtime {
namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Scalar probe: L = sum_h c_h * y_h.
double probe(const Forecaster& f, const std::vector<double>& x, const std::vector<double>& c) {
  const auto y = f.forecast(x);
  double s = 0.0;
  for (std::size_t h = 0; h < y.size(); ++h) s += c[h] * y[h];
  return s;
}

void expect_gradients_match(Forecaster f, std::uint64_t seed) {
  Rng rng(seed);
  const auto x = random_vec(rng, f.shape().history);
  const auto c = random_vec(rng, f.shape().horizon);
  const auto g = f.backward(x, c);
  auto p = f.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    const double step = 1e-6 * std::max(1.0, std::abs(saved));
    p[i] = saved + step;
    const double up = probe(f, x, c);
    p[i] = saved - step;
    const double down = probe(f, x, c);
    p[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "parameter " << i;
  }
}

TEST(Forecaster, ZeroInitGivesZeroForecast) {
  Forecaster f({BackboneKind::Linear, 8, 3, 0});
  EXPECT_EQ(f.forecast(std::vector<double>(8, 1.5)), std::vector<double>(3, 0.0));
  Forecaster m({BackboneKind::Mlp, 8, 3, 4});
  EXPECT_EQ(m.forecast(std::vector<double>(8, 1.5)), std::vector<double>(3, 0.0));
}

TEST(Forecaster, PersistenceWeights) {
  const std::size_t T = 5, H = 3;
  Forecaster f({BackboneKind::Linear, T, H, 0});
  auto p = f.parameters();
  for (std::size_t h = 0; h < H; ++h) p[h * T + (T - 1)] = 1.0;
  const std::vector<double> x{1, 2, 3, 4, 7};
  EXPECT_EQ(f.forecast(x), std::vector<double>(H, 7.0));
}

TEST(Forecaster, DeterministicInit) {
  const BackboneShape s{BackboneKind::Mlp, 16, 4, 8};
  const auto a = Forecaster::random(s, 3);
  const auto b = Forecaster::random(s, 3);
  const auto c = Forecaster::random(s, 4);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
  const double bound = 1.0 / std::sqrt(16.0);
  for (std::size_t i = 0; i < 8 * 16; ++i) EXPECT_LE(std::abs(a.parameters()[i]), bound);
}

TEST(Forecaster, ParameterCounts) {
  EXPECT_EQ(Forecaster({BackboneKind::Linear, 10, 4, 0}).parameter_count(), 44u);
  EXPECT_EQ(Forecaster({BackboneKind::Mlp, 10, 4, 6}).parameter_count(), 6u * 10 + 6 + 4 * 6 + 4);
}

TEST(Forecaster, ShapeErrors) {
  Forecaster f({BackboneKind::Linear, 4, 2, 0});
  EXPECT_THROW(f.forecast(std::vector<double>(5, 0.0)), Error);
  EXPECT_THROW(f.backward(std::vector<double>(4, 0.0), std::vector<double>(3, 0.0)), Error);
  EXPECT_THROW(Forecaster({BackboneKind::Mlp, 4, 2, 0}), Error);
  EXPECT_THROW(Forecaster({BackboneKind::Linear, 0, 2, 0}), Error);
  EXPECT_THROW(backbone_from_string("transformer"), Error);
}

TEST(Backward, ZeroOutputGradGivesZero) {
  const auto f = Forecaster::random({BackboneKind::Mlp, 6, 3, 5}, 1);
  const auto g = f.backward(std::vector<double>(6, 0.7), std::vector<double>(3, 0.0));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearGradientIsInput) {
  Forecaster f({BackboneKind::Linear, 2, 1, 0});
  const std::vector<double> x{0.3, -1.2};
  const auto g = f.backward(x, std::vector<double>{1.0});
  EXPECT_EQ(g, (std::vector<double>{0.3, -1.2, 1.0}));
}

TEST(Backward, AccumulatesIntoBuffer) {
  const auto f = Forecaster::random({BackboneKind::Linear, 3, 2, 0}, 2);
  const std::vector<double> x{1.0, 2.0, 3.0}, c{0.5, -1.0};
  std::vector<double> acc(f.parameter_count(), 0.0);
  f.backward(x, c, acc);
  f.backward(x, c, acc);
  const auto once = f.backward(x, c);
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_DOUBLE_EQ(acc[i], 2.0 * once[i]);
}

TEST(Backward, FiniteDifferencesLinear) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    expect_gradients_match(Forecaster::random({BackboneKind::Linear, 7, 3, 0}, seed), seed + 100);
  }
}

TEST(Backward, FiniteDifferencesMlp) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    expect_gradients_match(Forecaster::random({BackboneKind::Mlp, 8, 4, 8}, seed), seed + 200);
  }
}

TEST(Backward, CombinedLossThroughMlp) {
  // T=8, H=4, W=8: d combined_loss / d params via the chain rule vs central differences.
  const auto f0 = Forecaster::random({BackboneKind::Mlp, 8, 4, 8}, 9);
  Rng rng(10);
  const auto x = random_vec(rng, 8);
  const auto truth = random_vec(rng, 4);
  const auto teacher = random_vec(rng, 4);
  const std::vector<RarityLevel> lv{RarityLevel::VeryRare, RarityLevel::Normal, RarityLevel::VeryRare,
                                    RarityLevel::Moderate};
  const auto loss = [&](const Forecaster& f) {
    return losses::combined_loss(f.forecast(x), truth, std::span<const double>(teacher), lv, RarityLevel::VeryRare,
                                 0.7, 4);
  };
  Forecaster f = f0;
  const auto g = f.backward(x, loss(f).grad);
  auto p = f.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + 1e-6;
    const double up = loss(f).value;
    p[i] = saved - 1e-6;
    const double down = loss(f).value;
    p[i] = saved;
    const double fd = (up - down) / 2e-6;
    EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const auto before = p;
  OptimizerState opt(AdamConfig{}, p.size());
  adam_step(p, std::vector<double>(3, 0.0), opt);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.steps, 1u);
}

TEST(Adam, OneStepReducesConvexQuadratic) {
  std::vector<double> p{3.0};
  OptimizerState opt(AdamConfig{.lr = 0.1}, 1);
  const double before = p[0] * p[0];
  adam_step(p, std::vector<double>{2.0 * p[0]}, opt);
  EXPECT_LT(p[0] * p[0], before);
}

TEST(Adam, LinearRegressionToy) {
  // y = 2x; closed-form least squares gives w = 2, b = 0.
  Forecaster f({BackboneKind::Linear, 1, 1, 0});
  OptimizerState opt(AdamConfig{.lr = 0.05}, f.parameter_count());
  Rng rng(12);
  std::vector<double> xs(64);
  for (double& x : xs) x = rng.uniform(-1.0, 1.0);
  double sxx = 0.0, sxy = 0.0;
  for (double x : xs) {
    sxx += x * x;
    sxy += x * 2.0 * x;
  }
  const double w_star = sxy / sxx;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> g(f.parameter_count(), 0.0);
    for (double x : xs) {
      const double y = f.forecast(std::vector<double>{x})[0];
      f.backward(std::vector<double>{x}, std::vector<double>{2.0 * (y - 2.0 * x) / xs.size()}, g);
    }
    step(f, g, opt);
  }
  EXPECT_NEAR(f.parameters()[0], w_star, 1e-2);
  EXPECT_NEAR(f.parameters()[0], 2.0, 1e-2);
}

TEST(Adam, NonFiniteGradientThrows) {
  std::vector<double> p{1.0};
  OptimizerState opt(AdamConfig{}, 1);
  EXPECT_THROW(adam_step(p, std::vector<double>{std::nan("")}, opt), Error);
  EXPECT_THROW(adam_step(p, std::vector<double>{1.0, 2.0}, opt), Error);
}

TEST(Adam, DeterministicTraining) {
  const auto run = [] {
    auto f = Forecaster::random({BackboneKind::Mlp, 4, 2, 3}, 5);
    OptimizerState opt(AdamConfig{}, f.parameter_count());
    Rng rng(6);
    for (int it = 0; it < 50; ++it) {
      const auto x = random_vec(rng, 4);
      const auto g = f.backward(x, f.forecast(x));
      step(f, g, opt);
    }
    return std::vector<double>(f.parameters().begin(), f.parameters().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace xtime
