#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "disco/flow_sim.hpp"

using namespace disco;
using namespace disco::flow;

namespace {

struct Moments {
  double mean = 0, var = 0;
  std::size_t n = 0;
};

Moments pooled(const Snapshot& s) {
  Moments m;
  m.n = s.values.size();
  for (double x : s.values) m.mean += x;
  m.mean /= static_cast<double>(m.n);
  for (double x : s.values) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(m.n - 1);
  return m;
}

// Deterministic Euler map from x_1 to x_0 in 1-D: x_0 = a x_1 + b.
std::pair<double, double> euler_affine(const GaussianWorld& w, std::size_t steps) {
  const auto grid = SamplerGrid::uniform(steps);
  auto run = [&](double x1) {
    Vec x{x1};
    for (std::size_t k = 0; k < steps; ++k) x = transition_mean(x, grid.times[k], grid.times[k + 1], w, 0.0);
    return x[0];
  };
  const double b = run(0.0);
  return {run(1.0) - b, b};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

TEST(Marginal, Endpoints) {
  const auto w = GaussianWorld::isotropic(2, 2.0, 0.5);
  const auto m0 = marginal(0.0, w);
  EXPECT_EQ(m0.mean_t, (std::vector<double>{2.0, 2.0}));
  EXPECT_DOUBLE_EQ(m0.var_t, 0.25);
  const auto m1 = marginal(1.0, w);
  EXPECT_EQ(m1.mean_t, (std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(m1.var_t, 1.0);
}

TEST(VelocityField, IsTheConditionalExpectation) {
  // The residual of x_1 - x_0 against v(x_t) must be orthogonal to 1 and x_t.
  const GaussianWorld w{{1.5}, 0.7};
  std::mt19937_64 rng(211);
  std::normal_distribution<double> n;
  for (double t : {0.1, 0.4, 0.8}) {
    const int samples = 100000;
    double r1 = 0, r1sq = 0, rx = 0, rxsq = 0;
    for (int i = 0; i < samples; ++i) {
      const double x0 = w.mu0[0] + w.s0 * n(rng);
      const double x1 = n(rng);
      const double xt = (1 - t) * x0 + t * x1;
      const double r = (x1 - x0) - velocity_field(std::vector<double>{xt}, t, w)[0];
      r1 += r;
      r1sq += r * r;
      rx += r * xt;
      rxsq += r * xt * r * xt;
    }
    const double m1 = r1 / samples, mx = rx / samples;
    const double se1 = std::sqrt((r1sq / samples - m1 * m1) / samples);
    const double sex = std::sqrt((rxsq / samples - mx * mx) / samples);
    EXPECT_LT(std::abs(m1), 3 * se1) << "t=" << t;
    EXPECT_LT(std::abs(mx), 3 * sex) << "t=" << t;
  }
}

TEST(Score, MatchesFiniteDifferenceOfLogDensity) {
  const GaussianWorld w{{2.0, -1.0}, 0.5};
  auto log_density = [&](const Vec& x, double t) {
    const auto m = marginal(t, w);
    double q = 0;
    for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - m.mean_t[i]) * (x[i] - m.mean_t[i]);
    return -0.5 * q / m.var_t - 0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi * m.var_t);
  };
  std::mt19937_64 rng(223);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int probe = 0; probe < 200; ++probe) {
    const Vec x{n(rng) * 2, n(rng) * 2};
    const double t = u(rng);
    const auto s = score(x, t, w);
    for (std::size_t i = 0; i < 2; ++i) {
      Vec up = x, dn = x;
      up[i] += 1e-5;
      dn[i] -= 1e-5;
      EXPECT_NEAR(s[i], (log_density(up, t) - log_density(dn, t)) / 2e-5, 1e-6 * std::max(1.0, std::abs(s[i])));
    }
  }
}

TEST(Drift, IdentitiesHoldPointwise) {
  const GaussianWorld w{{2.0, 0.5, -1.0}, 0.5};
  std::mt19937_64 rng(227);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0), us(0.0, 1.5);
  for (int probe = 0; probe < 100000; ++probe) {
    const Vec x{3 * n(rng), 3 * n(rng), 3 * n(rng)};
    const double t = u(rng), sigma = us(rng);
    const auto v = velocity_field(x, t, w);
    const auto s = score(x, t, w);
    const auto f = sde_drift(x, t, w, sigma);
    const auto b = reverse_drift(x, t, w, sigma);
    for (std::size_t i = 0; i < 3; ++i) {
      const double scale = std::max({1.0, std::abs(v[i]), std::abs(sigma * sigma * s[i])});
      ASSERT_LE(std::abs(f[i] - (v[i] + 0.5 * sigma * sigma * s[i])), 1e-12 * scale);
      ASSERT_LE(std::abs(b[i] - (v[i] - 0.5 * sigma * sigma * s[i])), 1e-12 * scale);
    }
  }
}

TEST(Drift, ZeroSigmaIsTheVelocity) {
  const GaussianWorld w{{2.0}, 0.0};
  EXPECT_EQ(sde_drift(Vec{1.0}, 0.3, w, 0.0), velocity_field(Vec{1.0}, 0.3, w));
  // s0 = 0 collapses the marginal at t = 0: neither field is defined there.
  EXPECT_THROW(score(Vec{1.0}, 0.0, w), DegenerateVariance);
  EXPECT_THROW(velocity_field(Vec{1.0}, 0.0, w), DegenerateVariance);
}

TEST(Simulate, ZeroSigmaSdeEqualsOde) {
  const auto w = GaussianWorld::isotropic(2, 2.0, 0.5);
  const auto grid = SamplerGrid::uniform(50, SigmaSchedule::constant(0.0));
  const auto a = simulate(w, grid, 500, Mode::ode, 3, {0.5});
  const auto b = simulate(w, grid, 500, Mode::sde, 3, {0.5});
  for (std::size_t c = 0; c < a.snapshots.size(); ++c) EXPECT_EQ(a.snapshots[c].values, b.snapshots[c].values);
}

TEST(Simulate, SingleEulerStepLandsOnTheDataMean) {
  // At t=1 the velocity is x - mu0, so one full step maps every path to mu0.
  const auto w = GaussianWorld::isotropic(3, 2.0, 0.5);
  const auto r = simulate(w, SamplerGrid::uniform(1), 100, Mode::ode, 5);
  ASSERT_EQ(r.snapshots.size(), 1u);
  for (double x : r.snapshots[0].values) EXPECT_NEAR(x, 2.0, 1e-12);
}

TEST(Simulate, OdeMomentsAtDataTime) {
  const auto w = GaussianWorld::isotropic(1, 2.0, 0.5);
  const auto r = simulate(w, SamplerGrid::uniform(200), 10000, Mode::ode, 7);
  const auto m = pooled(r.snapshots.back());
  const double se_mean = std::sqrt(0.25 / 10000.0);
  const double se_var = 0.25 * std::sqrt(2.0 / 9999.0);
  EXPECT_NEAR(m.mean, 2.0, 3 * se_mean);
  EXPECT_NEAR(m.var, 0.25, 3 * se_var);
}

class SdeMarginals : public ::testing::TestWithParam<SigmaSchedule> {};

TEST_P(SdeMarginals, MatchAnalyticMomentsAtCheckpoints) {
  const auto w = GaussianWorld::isotropic(1, 2.0, 0.5);
  const std::size_t n = 20000;
  const auto r = simulate(w, SamplerGrid::uniform(200, GetParam()), n, Mode::sde, 11, {0.75, 0.5, 0.25}, 4);
  ASSERT_EQ(r.snapshots.size(), 4u);
  for (const auto& s : r.snapshots) {
    const auto truth = marginal(s.t, w);
    const auto m = pooled(s);
    const double se_mean = std::sqrt(truth.var_t / static_cast<double>(n));
    const double se_var = truth.var_t * std::sqrt(2.0 / static_cast<double>(n - 1));
    // Euler-Maruyama bias at t=0 is a couple of standard errors for the 5e4-path
    // runs and smaller here; 3 SE at interior times, 4 at the endpoint.
    const double z = s.t == 0.0 ? 4.0 : 3.0;
    EXPECT_NEAR(m.mean, truth.mean_t[0], z * se_mean) << GetParam().name() << " t=" << s.t;
    EXPECT_NEAR(m.var, truth.var_t, z * se_var) << GetParam().name() << " t=" << s.t;
  }
}

INSTANTIATE_TEST_SUITE_P(Schedules, SdeMarginals,
                         ::testing::Values(SigmaSchedule::constant(0.0), SigmaSchedule::constant(0.2),
                                           SigmaSchedule::constant(0.5), SigmaSchedule::sqrt_t(1.0)),
                         [](const auto& info) {
                           std::string n = info.param.name();
                           for (char& c : n)
                             if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
                           return n;
                         });

TEST(Simulate, SdeEndpointIsGaussianByKolmogorovSmirnov) {
  const auto w = GaussianWorld::isotropic(1, 2.0, 0.5);
  const std::size_t n = 10000;
  const auto r = simulate(w, SamplerGrid::uniform(200, SigmaSchedule::constant(0.5)), n, Mode::sde, 13);
  auto x = r.snapshots.back().values;
  std::sort(x.begin(), x.end());
  double d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = normal_cdf((x[i] - 2.0) / 0.5);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  EXPECT_LT(d * std::sqrt(static_cast<double>(n)), 1.95);  // 0.001 critical value
}

TEST(Simulate, DeterministicAcrossWorkerCounts) {
  const auto w = GaussianWorld::isotropic(2, 2.0, 0.5);
  for (Mode mode : {Mode::ode, Mode::sde}) {
    const auto grid = SamplerGrid::uniform(40, SigmaSchedule::constant(0.3));
    const auto a = simulate(w, grid, 300, mode, 17, {0.5}, 1);
    const auto b = simulate(w, grid, 300, mode, 17, {0.5}, 6);
    for (std::size_t c = 0; c < a.snapshots.size(); ++c) EXPECT_EQ(a.snapshots[c].values, b.snapshots[c].values);
  }
}

TEST(Simulate, CheckpointsMustBeOnTheGrid) {
  const auto w = GaussianWorld::isotropic(1, 2.0, 0.5);
  EXPECT_THROW(simulate(w, SamplerGrid::uniform(15), 10, Mode::ode, 1, {0.5}), InvalidArgument);
  EXPECT_NO_THROW(simulate(w, SamplerGrid::uniform(28), 10, Mode::ode, 1, {0.5}));
}

TEST(Euler, FirstOrderConvergence) {
  const GaussianWorld w{{2.0}, 0.5};
  for (std::size_t k : {25u, 50u, 100u}) {
    const auto [a1, b1] = euler_affine(w, k);
    const auto [a2, b2] = euler_affine(w, 2 * k);
    // x_0 = a x_1 + b with x_1 ~ N(0,1): mean b, standard deviation |a|.
    const double e1 = std::abs(std::abs(a1) - 0.5) + std::abs(b1 - 2.0);
    const double e2 = std::abs(std::abs(a2) - 0.5) + std::abs(b2 - 2.0);
    const double ratio = e1 / e2;
    EXPECT_GE(ratio, 1.5) << k;
    EXPECT_LE(ratio, 2.5) << k;
  }
}

TEST(SamplerGrid, TrainAndTestResolutions) {
  for (std::size_t k : {14u, 28u}) {
    const auto g = SamplerGrid::uniform(k);
    ASSERT_EQ(g.times.size(), k + 1);
    EXPECT_EQ(g.times.front(), 1.0);
    EXPECT_EQ(g.times.back(), 0.0);
    for (std::size_t i = 0; i + 1 < g.times.size(); ++i) EXPECT_GT(g.times[i], g.times[i + 1]);
  }
  EXPECT_THROW(SamplerGrid::uniform(0), InvalidArgument);
}

TEST(SigmaSchedule, Parse) {
  EXPECT_DOUBLE_EQ(SigmaSchedule::parse("0.3")(0.7), 0.3);
  EXPECT_DOUBLE_EQ(SigmaSchedule::parse("constant:0.5")(0.1), 0.5);
  EXPECT_DOUBLE_EQ(SigmaSchedule::parse("sqrt:2")(0.25), 1.0);
  EXPECT_DOUBLE_EQ(SigmaSchedule::parse("linear:2")(0.25), 0.5);
  EXPECT_THROW(SigmaSchedule::parse("cubic:1"), InvalidArgument);
  EXPECT_THROW(SigmaSchedule::parse("constant:x"), InvalidArgument);
}

TEST(TransitionLogProb, NormalizedAndSymmetric) {
  const GaussianWorld w{{2.0}, 0.5};
  const auto sched = SigmaSchedule::constant(0.4);
  const Vec x{0.3};
  const double t = 0.6, tn = 0.55;
  const double mean = transition_mean(x, t, tn, w, 0.4)[0];
  const double var = 0.16 * 0.05;
  EXPECT_NEAR(transition_log_prob(Vec{mean}, x, t, tn, w, sched), -0.5 * std::log(2 * std::numbers::pi * var), 1e-12);
  EXPECT_NEAR(transition_log_prob(Vec{mean + 0.07}, x, t, tn, w, sched),
              transition_log_prob(Vec{mean - 0.07}, x, t, tn, w, sched), 1e-12);
  // Trapezoid over +-10 standard deviations.
  const double sd = std::sqrt(var);
  const int cells = 20000;
  const double h = 20 * sd / cells;
  double total = 0;
  for (int i = 0; i <= cells; ++i) {
    const double y = mean - 10 * sd + i * h;
    const double wgt = (i == 0 || i == cells) ? 0.5 : 1.0;
    total += wgt * std::exp(transition_log_prob(Vec{y}, x, t, tn, w, sched));
  }
  EXPECT_NEAR(total * h, 1.0, 1e-4);
}

TEST(TransitionLogProb, PathLogProbIsTheSumOfSteps) {
  const auto w = GaussianWorld::isotropic(2, 2.0, 0.5);
  const auto grid = SamplerGrid::uniform(10, SigmaSchedule::constant(0.5));
  Engine eng = substream(19, 0);
  const auto p = sample_path(w, grid, Mode::sde, eng);
  double sum = 0;
  for (std::size_t k = 0; k < 10; ++k)
    sum += transition_log_prob(p.states[k + 1], p.states[k], grid.times[k], grid.times[k + 1], w, grid.sigma);
  EXPECT_NEAR(p.log_prob, sum, 1e-9);
  Engine eng2 = substream(19, 0);
  EXPECT_EQ(sample_path(w, grid, Mode::ode, eng2).log_prob, 0.0);
}

TEST(TransitionLogProb, ZeroNoiseThrows) {
  const GaussianWorld w{{2.0}, 0.5};
  EXPECT_THROW(transition_log_prob(Vec{0.0}, Vec{0.0}, 0.5, 0.4, w, SigmaSchedule::constant(0.0)), ZeroNoise);
  EXPECT_THROW(transition_kl(Vec{0.0}, 0.5, 0.4, w, w, SigmaSchedule::constant(0.0)), ZeroNoise);
}

TEST(TransitionKl, ZeroForSameWorldPositiveOtherwise) {
  const GaussianWorld a{{2.0}, 0.5}, b{{1.0}, 0.5};
  const auto sched = SigmaSchedule::constant(0.3);
  EXPECT_EQ(transition_kl(Vec{0.1}, 0.5, 0.45, a, a, sched), 0.0);
  EXPECT_GT(transition_kl(Vec{0.1}, 0.5, 0.45, a, b, sched), 0.0);
}
