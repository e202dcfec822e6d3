#include <gtest/gtest.h>

#include <limits>

#include "oracles.hpp"
#include "tnn/adversarial.hpp"
#include "tnn/error.hpp"

using namespace tnn;

namespace {

constexpr AttackKind kAll[] = {AttackKind::l2_fgm, AttackKind::fgsm, AttackKind::l2_pgd, AttackKind::linf_pgd};

AttackConfig make(AttackKind k, double xi) {
  AttackConfig a;
  a.kind = k;
  a.xi = xi;
  return a;
}

/// Input gradient by central differences of the oracle forward pass.
Tensor3 numeric_input_gradient(const TNNModel& m, const Tensor3& x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  Tensor3 work = x;
  const auto g = oracle::central_difference(
      v,
      [&](const std::vector<double>& p) {
        std::copy(p.begin(), p.end(), work.data().begin());
        return oracle::forward(m, work);
      },
      1e-6);
  return Tensor3(x.rows(), x.cols(), x.channels(), g);
}

double logistic(double q) { return std::log1p(std::exp(-q)); }

}  // namespace

TEST(Loss, LogisticValuesAndDerivative) {
  const LossSpec l = LossSpec::logistic();
  for (double q : {-30.0, -2.0, 0.0, 0.7, 5.0, 40.0}) {
    EXPECT_NEAR(l.value(q), logistic(q), 1e-14 * std::max(1.0, logistic(q)));
    const double h = 1e-5;
    EXPECT_NEAR(l.derivative(q), (logistic(q + h) - logistic(q - h)) / (2 * h), 1e-8);
    EXPECT_NEAR(std::exp(-l.exponent(q)), l.value(q), 1e-12 * std::max(1e-300, l.value(q)) + 1e-300);
  }
}

TEST(Loss, LogisticInverseExponent) {
  const LossSpec l = LossSpec::logistic();
  for (double q : {0.0, 0.3, 2.0, 10.0, 50.0}) {
    EXPECT_NEAR(l.inverse_exponent(l.exponent(q)), q, 1e-8);
  }
  try {
    l.inverse_exponent(l.exponent(0.0) - 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSeparated);
  }
}

TEST(Loss, ExponentialClosedForms) {
  const LossSpec e = LossSpec::exponential();
  EXPECT_DOUBLE_EQ(e.value(1.5), std::exp(-1.5));
  EXPECT_DOUBLE_EQ(e.exponent(1.5), 1.5);
  EXPECT_NEAR(e.inverse_exponent(2.25), 2.25, 1e-8);
  EXPECT_DOUBLE_EQ(e.range_bound(3.0), std::exp(3.0));
  EXPECT_DOUBLE_EQ(e.lipschitz(3.0), std::exp(3.0));
  EXPECT_EQ(e.k_constant(), 1.0);
  EXPECT_FALSE(LossSpec::logistic().k_constant().has_value());
}

TEST(Loss, LogisticBoundsOnOutputRange) {
  const LossSpec l = LossSpec::logistic();
  EXPECT_NEAR(l.range_bound(2.0), logistic(-2.0), 1e-14);
  EXPECT_NEAR(l.lipschitz(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-14);
}

TEST(Attack, NamesRoundTrip) {
  for (AttackKind k : kAll) EXPECT_EQ(parse_attack(to_string(k)), k);
  EXPECT_FALSE(parse_attack("bogus").has_value());
}

TEST(Attack, ConfigValidation) {
  EXPECT_THROW(make(AttackKind::fgsm, -0.1).validate(), Error);
  AttackConfig a = make(AttackKind::l2_pgd, 0.1);
  a.steps = 0;
  EXPECT_THROW(a.validate(), Error);
}

TEST(Attack, ZeroRadiusIsNoPerturbation) {
  oracle::Rng rng(41);
  const TNNModel m = TNNModel::random(std::vector<std::size_t>{3, 4}, OrthogonalTransform::dct(2), 1);
  const Tensor3 x = oracle::random_tensor(3, 1, 2, rng);
  for (AttackKind k : kAll) EXPECT_EQ(attack(m, x, 1, LossSpec::logistic(), make(k, 0.0)).fro_norm(), 0.0);
}

TEST(Attack, BallMembership) {
  oracle::Rng rng(42);
  const LossSpec loss = LossSpec::logistic();
  for (int i = 0; i < 30; ++i) {
    const std::size_t c = oracle::pick(rng, 1, 4), d = oracle::pick(rng, 1, 5);
    const TNNModel m = TNNModel::random(std::vector<std::size_t>{d, 5, 3}, OrthogonalTransform::dct(c), rng());
    const Tensor3 x = oracle::random_tensor(d, 1, c, rng);
    const int y = i % 2 ? 1 : -1;
    const double xi = 0.05 + 0.1 * i;
    EXPECT_LE(attack(m, x, y, loss, make(AttackKind::l2_fgm, xi)).fro_norm(), xi * (1 + 1e-12));
    EXPECT_LE(attack(m, x, y, loss, make(AttackKind::l2_pgd, xi)).fro_norm(), xi * (1 + 1e-12));
    for (AttackKind k : {AttackKind::fgsm, AttackKind::linf_pgd}) {
      const Tensor3 d_inf = attack(m, x, y, loss, make(k, xi));
      for (double v : d_inf.data()) EXPECT_LE(std::abs(v), xi);
    }
    const Tensor3 signs = attack(m, x, y, loss, make(AttackKind::fgsm, xi));
    for (double v : signs.data()) {
      EXPECT_TRUE(v == xi || v == -xi || v == 0.0);
    }
  }
}

TEST(Attack, ScaleInvariance) {
  oracle::Rng rng(43);
  const LossSpec loss = LossSpec::logistic();
  for (int i = 0; i < 20; ++i) {
    const TNNModel m = TNNModel::random(std::vector<std::size_t>{4, 6, 5, 3}, OrthogonalTransform::dct(3), rng());
    const Tensor3 x = oracle::random_tensor(4, 1, 3, rng);
    for (AttackKind k : kAll) {
      const Tensor3 d = attack(m, x, 1, loss, make(k, 0.4));
      for (double a : {0.5, 2.0, 3.0}) {
        const Tensor3 da = attack(scale_weights(m, a), x, 1, loss, make(k, 0.4));
        EXPECT_LE((da - d).fro_norm(), 1e-8 * std::max(1.0, d.fro_norm())) << to_string(k);
      }
    }
  }
}

TEST(Attack, FgmAndFgsmFollowTheNumericGradient) {
  oracle::Rng rng(44);
  const LossSpec loss = LossSpec::logistic();
  const TNNModel m = TNNModel::random(std::vector<std::size_t>{5, 6, 4}, OrthogonalTransform::dct(3), 4);
  const Tensor3 x = oracle::random_tensor(5, 1, 3, rng);
  const Tensor3 z = numeric_input_gradient(m, x);
  for (int y : {1, -1}) {
    Tensor3 expect = z;
    expect *= -0.3 * y / z.fro_norm();
    EXPECT_LT((attack(m, x, y, loss, make(AttackKind::l2_fgm, 0.3)) - expect).fro_norm(), 1e-7);
    const Tensor3 s = attack(m, x, y, loss, make(AttackKind::fgsm, 0.3));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (std::abs(z.data()[i]) > 1e-6) EXPECT_EQ(s.data()[i], -y * z.data()[i] > 0 ? 0.3 : -0.3);
    }
  }
}

TEST(Attack, FgmLinearRegionClosedForm) {
  // inside one activation region f is linear, so y f(x + delta) = y f(x) - xi ||z||
  oracle::Rng rng(45);
  const LossSpec loss = LossSpec::logistic();
  int checked = 0;
  for (int i = 0; i < 20; ++i) {
    const TNNModel m = TNNModel::random(std::vector<std::size_t>{4, 5, 5}, OrthogonalTransform::dct(2), rng());
    const Tensor3 x = oracle::random_tensor(4, 1, 2, rng);
    const Tensor3 z = numeric_input_gradient(m, x);
    const double xi = 1e-4;
    for (int y : {1, -1}) {
      const Tensor3 d = attack(m, x, y, loss, make(AttackKind::l2_fgm, xi));
      const Tensor3 zp = numeric_input_gradient(m, x + d);
      if ((zp - z).fro_norm() > 1e-6 * z.fro_norm()) continue;  // crossed a kink
      EXPECT_NEAR(y * oracle::forward(m, x + d), y * oracle::forward(m, x) - xi * z.fro_norm(), 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(Attack, PgdMatchesGridSearchOn2D) {
  oracle::Rng rng(46);
  const LossSpec loss = LossSpec::logistic();
  for (int i = 0; i < 20; ++i) {
    const bool as_channels = i % 2;
    const std::size_t d = as_channels ? 1 : 2, c = as_channels ? 2 : 1;
    const TNNModel m = TNNModel::random(std::vector<std::size_t>{d, 16, 16}, OrthogonalTransform::dct(c), rng());
    const Tensor3 x = oracle::random_tensor(d, 1, c, rng);
    const int y = i % 3 ? 1 : -1;
    const double xi = 0.1;  // PGD starts at 0 and is local; large balls hold other optima
    for (AttackKind k : {AttackKind::l2_pgd, AttackKind::linf_pgd}) {
      double grid_best = 0.0;
      const int steps = 400;
      for (int a = 0; a <= steps; ++a) {
        for (int b = 0; b <= steps; ++b) {
          const double u = -xi + 2 * xi * a / steps, v = -xi + 2 * xi * b / steps;
          if (k == AttackKind::l2_pgd && u * u + v * v > xi * xi) continue;
          Tensor3 p = x;
          p.data()[0] += u;
          p.data()[1] += v;
          grid_best = std::max(grid_best, loss.value(y * oracle::forward(m, p)));
        }
      }
      AttackConfig cfg = make(k, xi);
      cfg.steps = 40;
      const double got = loss.value(y * oracle::forward(m, x + attack(m, x, y, loss, cfg)));
      EXPECT_GE(got, 0.95 * grid_best) << to_string(k) << " instance " << i;
    }
  }
}

TEST(Margins, MetricsAgainstDirectComputation) {
  oracle::Rng rng(47);
  const auto t = OrthogonalTransform::dct(2);
  const TNNModel m = TNNModel::random(std::vector<std::size_t>{3, 4, 3}, t, 5);
  std::vector<Sample> samples;
  for (int i = 0; i < 12; ++i) {
    const Tensor3 x = oracle::random_tensor(3, 1, 2, rng);
    samples.push_back({x, oracle::forward(m, x) > 0 ? 1 : -1});
  }
  const Dataset data(samples, 3, 2);
  const LossSpec loss = LossSpec::exponential();
  const AttackConfig cfg = make(AttackKind::l2_fgm, 1e-3);
  const MarginMetrics mm = margin_metrics(m, data, loss, cfg);
  double risk = 0.0, qmin = std::numeric_limits<double>::infinity();
  for (const Sample& s : samples) {
    const double q = s.y * oracle::forward(m, s.x + attack(m, s.x, s.y, loss, cfg));
    risk += std::exp(-q);
    qmin = std::min(qmin, q);
  }
  risk /= samples.size();
  double rho2 = m.head.squaredNorm();
  for (const Tensor3& w : m.layers) rho2 += w.fro_norm() * w.fro_norm();
  const double scale = std::pow(std::sqrt(rho2), 3.0);
  EXPECT_NEAR(mm.adv_risk, risk, 1e-12);
  EXPECT_NEAR(mm.min_margin, qmin, 1e-12);
  EXPECT_NEAR(mm.normalized_min_margin, qmin / scale, 1e-12);
  if (qmin > 0) {
    ASSERT_TRUE(mm.smoothed_margin.has_value());
    // exponential loss: G is the identity
    EXPECT_NEAR(*mm.smoothed_margin, std::log(1.0 / (samples.size() * risk)) / scale, 1e-9);
    EXPECT_LE(*mm.smoothed_margin, mm.normalized_min_margin + 1e-12);
  }
}

TEST(Margins, NormalizedMarginIsScaleInvariant) {
  oracle::Rng rng(48);
  const TNNModel m = TNNModel::random(std::vector<std::size_t>{3, 4}, OrthogonalTransform::dct(2), 6);
  std::vector<Sample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back({oracle::random_tensor(3, 1, 2, rng), i % 2 ? 1 : -1});
  const Dataset data(samples, 3, 2);
  const AttackConfig cfg = make(AttackKind::fgsm, 0.01);
  const double a = margin_metrics(m, data, LossSpec::logistic(), cfg).normalized_min_margin;
  const double b = margin_metrics(scale_weights(m, 2.5), data, LossSpec::logistic(), cfg).normalized_min_margin;
  EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(a)));
}

TEST(Margins, UnseparatedDataHasNoSmoothedMargin) {
  const TNNModel m = TNNModel::random(std::vector<std::size_t>{2, 3}, OrthogonalTransform::identity(1), 7);
  Tensor3 x(2, 1, 1, {1.0, -0.5});
  const Dataset data({{x, 1}, {x, -1}}, 2, 1);
  const AttackConfig cfg = make(AttackKind::l2_fgm, 0.0);
  EXPECT_FALSE(margin_metrics(m, data, LossSpec::logistic(), cfg).smoothed_margin.has_value());
  try {
    smoothed_margin(m, data, LossSpec::logistic(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSeparated);
  }
}

TEST(Risk, EmptyDatasetIsAnError) {
  const TNNModel m = TNNModel::random(std::vector<std::size_t>{2, 3}, OrthogonalTransform::identity(1), 8);
  const Dataset empty({}, 2, 1);
  try {
    adversarial_risk(m, empty, LossSpec::logistic(), make(AttackKind::fgsm, 0.1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
  }
}
