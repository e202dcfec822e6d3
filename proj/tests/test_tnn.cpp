#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "tnn/error.hpp"
#include "tnn/model.hpp"

using namespace tnn;

namespace {

TNNModel model_with(std::vector<std::size_t> widths, const OrthogonalTransform& t, std::uint64_t seed) {
  return TNNModel::random(widths, t, seed);
}

std::vector<double> flatten(const TNNModel& m, const Tensor3& x) {
  std::vector<double> v;
  for (const Tensor3& w : m.layers) v.insert(v.end(), w.data().begin(), w.data().end());
  for (Eigen::Index i = 0; i < m.head.size(); ++i) v.push_back(m.head(i));
  v.insert(v.end(), x.data().begin(), x.data().end());
  return v;
}

void unflatten(const std::vector<double>& v, TNNModel& m, Tensor3& x) {
  std::size_t p = 0;
  for (Tensor3& w : m.layers) {
    for (double& e : w.data()) e = v[p++];
  }
  for (Eigen::Index i = 0; i < m.head.size(); ++i) m.head(i) = v[p++];
  for (double& e : x.data()) e = v[p++];
}

}  // namespace

TEST(TNN, ForwardMatchesOracle) {
  oracle::Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    const std::size_t c = oracle::pick(rng, 1, 5);
    const auto t = i % 2 ? OrthogonalTransform::dct(c) : OrthogonalTransform::custom(oracle::random_orthogonal(c, rng));
    const TNNModel m = model_with({oracle::pick(rng, 1, 5), oracle::pick(rng, 1, 6), oracle::pick(rng, 1, 6)}, t, rng());
    const Tensor3 x = oracle::random_tensor(m.input_dim(), 1, c, rng);
    const double f = oracle::forward(m, x);
    EXPECT_NEAR(forward(m, x), f, 1e-12 * std::max(1.0, std::abs(f)));
  }
}

TEST(TNN, SingleChannelIsDenseNetwork) {
  oracle::Rng rng(32);
  const TNNModel m = model_with({4, 7, 5}, OrthogonalTransform::identity(1), 5);
  const Tensor3 x = oracle::random_tensor(4, 1, 1, rng);
  Vector h = oracle::slice(x, 0).col(0);
  for (const Tensor3& w : m.layers) h = (oracle::slice(w, 0) * h).cwiseMax(0.0);
  EXPECT_NEAR(forward(m, x), m.head.dot(h), 1e-13);
}

TEST(TNN, FeaturesAreNonNegativeAndChained) {
  oracle::Rng rng(33);
  const TNNModel m = model_with({3, 4, 2}, OrthogonalTransform::dct(3), 6);
  const Tensor3 x = oracle::random_tensor(3, 1, 3, rng);
  const auto feats = forward_features(m, x);
  ASSERT_EQ(feats.size(), 3u);
  EXPECT_EQ(feats[0], x);
  EXPECT_EQ(feats[1].rows(), 4u);
  EXPECT_EQ(feats[2].rows(), 2u);
  for (std::size_t l = 1; l < feats.size(); ++l) {
    for (double v : feats[l].data()) EXPECT_GE(v, 0.0);
  }
  EXPECT_NEAR(m.head.dot(Eigen::Map<const Vector>(feats[2].data().data(), 6)), forward(m, x), 1e-13);
}

TEST(TNN, FiniteDifferencesOnEveryCoordinate) {
  oracle::Rng rng(34);
  const TNNModel model = model_with({6, 6, 6, 6}, OrthogonalTransform::dct(4), 7);
  const Tensor3 x = oracle::random_tensor(6, 1, 4, rng);
  const Gradients g = backward(model, x);
  std::vector<double> analytic;
  for (const Tensor3& w : g.layers) analytic.insert(analytic.end(), w.data().begin(), w.data().end());
  for (Eigen::Index i = 0; i < g.head.size(); ++i) analytic.push_back(g.head(i));
  analytic.insert(analytic.end(), g.input.data().begin(), g.input.data().end());

  TNNModel work = model;
  Tensor3 xw = x;
  const auto numeric = oracle::central_difference(
      flatten(model, x),
      [&](const std::vector<double>& v) {
        unflatten(v, work, xw);
        return oracle::forward(work, xw);
      },
      1e-6);
  ASSERT_EQ(numeric.size(), analytic.size());
  double peak = 0.0;
  for (double a : analytic) peak = std::max(peak, std::abs(a));
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), 1e-2 * peak);
    EXPECT_LE(std::abs(numeric[i] - analytic[i]) / scale, 1e-4) << "coordinate " << i;
  }
}

TEST(TNN, UpstreamScalesGradients) {
  oracle::Rng rng(35);
  const TNNModel m = model_with({3, 4, 4}, OrthogonalTransform::dct(2), 8);
  const Tensor3 x = oracle::random_tensor(3, 1, 2, rng);
  const Gradients g1 = backward(m, x, 1.0), g3 = backward(m, x, -3.0);
  EXPECT_LT((g3.head + 3.0 * g1.head).norm(), 1e-12);
  Tensor3 s = g1.input;
  s *= -3.0;
  EXPECT_LT((g3.input - s).fro_norm(), 1e-12);
}

TEST(TNN, HomogeneityAndEuler) {
  oracle::Rng rng(36);
  for (int i = 0; i < 20; ++i) {
    const std::size_t depth = oracle::pick(rng, 1, 4), c = oracle::pick(rng, 1, 4);
    std::vector<std::size_t> w{oracle::pick(rng, 2, 6)};
    for (std::size_t l = 0; l < depth; ++l) w.push_back(oracle::pick(rng, 2, 6));
    const TNNModel m = model_with(w, OrthogonalTransform::dct(c), rng());
    const Tensor3 x = oracle::random_tensor(w[0], 1, c, rng);
    const double f = forward(m, x);
    if (std::abs(f) < 1e-9) continue;
    for (double a : {0.5, 2.0, 3.0}) {
      const double expect = std::pow(a, static_cast<double>(depth + 1)) * f;
      EXPECT_LE(std::abs(forward(scale_weights(m, a), x) - expect) / std::abs(expect), 1e-8);
    }
    const Gradients g = backward(m, x);
    double inner = g.head.dot(m.head);
    for (std::size_t l = 0; l < depth; ++l) {
      for (std::size_t k = 0; k < m.layers[l].size(); ++k) inner += g.layers[l].data()[k] * m.layers[l].data()[k];
    }
    EXPECT_LE(std::abs(inner - (depth + 1.0) * f) / std::abs(f), 1e-8);
  }
}

TEST(TNN, ScaleWeightsRejectsNonPositive) {
  const TNNModel m = model_with({2, 2}, OrthogonalTransform::dct(2), 1);
  try {
    scale_weights(m, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPositiveScale);
  }
}

TEST(TNN, WeightNorms) {
  const TNNModel m = model_with({3, 4, 2}, OrthogonalTransform::dct(2), 2);
  const WeightNorms n = weight_norms(m);
  ASSERT_EQ(n.layers.size(), 2u);
  double sq = m.head.squaredNorm(), prod = m.head.norm();
  for (std::size_t l = 0; l < 2; ++l) {
    double s = 0.0;
    for (double v : m.layers[l].data()) s += v * v;
    EXPECT_NEAR(n.layers[l], std::sqrt(s), 1e-13);
    sq += s;
    prod *= std::sqrt(s);
  }
  EXPECT_NEAR(n.total, std::sqrt(sq), 1e-12);
  EXPECT_NEAR(n.product, prod, 1e-12);
}

TEST(TNN, ValidateCatchesBrokenChains) {
  TNNModel m = model_with({3, 4, 2}, OrthogonalTransform::dct(2), 3);
  m.layers[1] = Tensor3(2, 5, 2);
  EXPECT_THROW(m.validate(), Error);
  TNNModel h = model_with({3, 4}, OrthogonalTransform::dct(2), 3);
  h.head.resize(3);
  EXPECT_THROW(h.validate(), Error);
}

TEST(TNN, CheckpointRoundTrip) {
  const auto t = OrthogonalTransform::dct(3);
  const TNNModel m = model_with({4, 5, 2}, t, 4);
  std::stringstream buf;
  write_model(buf, m);
  EXPECT_EQ(buf.str().substr(0, 4), "TNNW");
  const TNNModel back = read_model(buf, t);
  ASSERT_EQ(back.depth(), 2u);
  EXPECT_EQ(back.layers[0], m.layers[0]);
  EXPECT_EQ(back.layers[1], m.layers[1]);
  EXPECT_EQ(back.head, m.head);

  std::stringstream again;
  write_model(again, m);
  EXPECT_THROW(read_model(again, OrthogonalTransform::dct(4)), Error);
}

TEST(TNN, RandomInitIsSeeded) {
  const auto t = OrthogonalTransform::dct(2);
  const TNNModel a = model_with({3, 3}, t, 9), b = model_with({3, 3}, t, 9), c = model_with({3, 3}, t, 10);
  EXPECT_EQ(a.layers[0], b.layers[0]);
  EXPECT_FALSE(a.layers[0] == c.layers[0]);
}
