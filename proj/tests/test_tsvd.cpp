#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"
#include "tnn/error.hpp"
#include "tnn/tsvd.hpp"

using namespace tnn;

namespace {

/// Tensor whose every transformed slice has singular values `sigma`.
Tensor3 with_spectrum(std::size_t m, std::size_t n, const Matrix& q, const std::vector<double>& sigma,
                      oracle::Rng& rng) {
  std::vector<Matrix> slices;
  for (Eigen::Index k = 0; k < q.rows(); ++k) {
    const Matrix u = oracle::random_orthogonal(m, rng), v = oracle::random_orthogonal(n, rng);
    Matrix s = Matrix::Zero(m, n);
    for (std::size_t j = 0; j < sigma.size(); ++j) s(j, j) = sigma[j];
    slices.push_back(u * s * v.transpose());
  }
  return oracle::from_slices(oracle::mode3(oracle::from_slices(slices), q.transpose()));
}

/// sqrt(sum over slices of the squared singular values beyond r).
double tail_oracle(const Tensor3& a, const Matrix& q, std::size_t r) {
  double e = 0.0;
  for (const Matrix& s : oracle::mode3(a, q)) {
    const Vector sv = Eigen::JacobiSVD<Matrix>(s).singularValues();
    for (Eigen::Index j = static_cast<Eigen::Index>(r); j < sv.size(); ++j) e += sv(j) * sv(j);
  }
  return std::sqrt(e);
}

}  // namespace

TEST(TSVD, ReconstructionAndOrthogonalFactors) {
  oracle::Rng rng(21);
  for (int i = 0; i < 40; ++i) {
    const std::size_t c = oracle::pick(rng, 1, 5), m = oracle::pick(rng, 1, 7), n = oracle::pick(rng, 1, 7);
    const Matrix q = oracle::random_orthogonal(c, rng);
    const auto t = OrthogonalTransform::custom(q);
    const Tensor3 a = oracle::random_tensor(m, n, c, rng);
    const TSVDFactors f = tsvd(a, t);
    const Tensor3 back = oracle::t_product(oracle::t_product(f.U, f.S, q), t_transpose(f.V, t), q);
    EXPECT_LT(oracle::rel_err(back, a), 1e-8);
    for (const Matrix& u : oracle::mode3(f.U, q)) {
      EXPECT_LT((u.transpose() * u - Matrix::Identity(m, m)).norm(), 1e-10);
    }
    // transformed S is diagonal in every slice
    for (const Matrix& s : oracle::mode3(f.S, q)) {
      Matrix off = s;
      for (Eigen::Index j = 0; j < std::min(off.rows(), off.cols()); ++j) off(j, j) = 0.0;
      EXPECT_LT(off.norm(), 1e-10);
    }
  }
}

TEST(TSVD, SingularValuesMatchSliceOracle) {
  oracle::Rng rng(22);
  const Tensor3 a = oracle::random_tensor(5, 3, 4, rng);
  const auto sv = transformed_singular_values(a, OrthogonalTransform::dct(4));
  const auto slices = oracle::mode3(a, oracle::dct_matrix(4));
  ASSERT_EQ(sv.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LT((sv[k] - Eigen::JacobiSVD<Matrix>(slices[k]).singularValues()).norm(), 1e-12);
  }
}

TEST(TSVD, TubalRankOfConstructedProducts) {
  oracle::Rng rng(23);
  for (int i = 0; i < 30; ++i) {
    const std::size_t c = oracle::pick(rng, 1, 5), m = oracle::pick(rng, 2, 8), n = oracle::pick(rng, 2, 8);
    const std::size_t r = oracle::pick(rng, 1, std::min(m, n));
    const Matrix q = oracle::random_orthogonal(c, rng);
    const Tensor3 a = oracle::t_product(oracle::random_tensor(m, r, c, rng), oracle::random_tensor(r, n, c, rng), q);
    const auto t = OrthogonalTransform::custom(q);
    EXPECT_EQ(tubal_rank(a, t), r);
    for (std::size_t k : multi_rank(a, t)) EXPECT_EQ(k, r);
  }
}

TEST(TSVD, MultiRankSeesSliceDifferences) {
  // transformed slice k has rank k + 1
  oracle::Rng rng(24);
  const Matrix q = oracle::dct_matrix(3);
  std::vector<Matrix> slices;
  for (std::size_t k = 0; k < 3; ++k) {
    const Matrix l = oracle::slice(oracle::random_tensor(4, k + 1, 1, rng), 0);
    const Matrix r = oracle::slice(oracle::random_tensor(k + 1, 5, 1, rng), 0);
    slices.push_back(l * r);
  }
  const Tensor3 a = oracle::from_slices(oracle::mode3(oracle::from_slices(slices), q.transpose()));
  const auto t = OrthogonalTransform::dct(3);
  EXPECT_EQ(multi_rank(a, t), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(tubal_rank(a, t), 3u);
}

TEST(TSVD, TruncationErrorMatchesOracle) {
  oracle::Rng rng(25);
  for (int i = 0; i < 40; ++i) {
    const std::size_t c = oracle::pick(rng, 1, 5), m = oracle::pick(rng, 1, 7), n = oracle::pick(rng, 1, 7);
    const std::size_t r = oracle::pick(rng, 1, std::min(m, n));
    const Matrix q = oracle::random_orthogonal(c, rng);
    const auto t = OrthogonalTransform::custom(q);
    const Tensor3 a = oracle::random_tensor(m, n, c, rng);
    const double expect = tail_oracle(a, q, r);
    EXPECT_NEAR((a - truncate(a, t, r)).fro_norm(), expect, 1e-10 * std::max(1.0, expect));
    EXPECT_NEAR(truncation_error(a, t, r), expect, 1e-10 * std::max(1.0, expect));
  }
}

TEST(TSVD, EckartYoungAgainstRandomCompetitors) {
  oracle::Rng rng(26);
  const auto t = OrthogonalTransform::dct(4);
  const Matrix q = oracle::dct_matrix(4);
  const Tensor3 a = oracle::random_tensor(6, 5, 4, rng);
  for (std::size_t r = 1; r <= 4; ++r) {
    const double best = (a - truncate(a, t, r)).fro_norm();
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor3 b = oracle::t_product(oracle::random_tensor(6, r, 4, rng), oracle::random_tensor(r, 5, 4, rng), q);
      EXPECT_GE((a - b).fro_norm(), best - 1e-12);
    }
    // a perturbed optimum is no better
    Tensor3 near = truncate(a, t, r);
    near *= 1.01;
    EXPECT_GE((a - near).fro_norm(), best - 1e-12);
  }
}

TEST(TSVD, TruncationKeepsRankAndFullRankIsCopy) {
  oracle::Rng rng(27);
  const auto t = OrthogonalTransform::dct(3);
  const Tensor3 a = oracle::random_tensor(5, 4, 3, rng);
  EXPECT_EQ(truncate(a, t, 4), a);
  EXPECT_EQ(tubal_rank(truncate(a, t, 2), t), 2u);
  EXPECT_THROW(truncate(a, t, 0), Error);
  try {
    truncate(a, t, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankOutOfRange);
  }
}

TEST(TSVD, DecayTailBound) {
  oracle::Rng rng(28);
  const std::size_t c = 4, m = 10;
  const Matrix q = oracle::dct_matrix(c);
  const auto t = OrthogonalTransform::dct(c);
  const double v0 = 1.7;
  for (double alpha : {0.75, 1.0, 2.0}) {
    std::vector<double> sigma;
    for (std::size_t j = 1; j <= m; ++j) sigma.push_back(v0 * std::pow(static_cast<double>(j), -alpha));
    const Tensor3 w = with_spectrum(m, m, q, sigma, rng);
    for (std::size_t r = 2; r <= 8; ++r) {
      const double bound = std::sqrt(c / (2 * alpha - 1)) * v0 * std::pow(r - 1.0, (1 - 2 * alpha) / 2);
      EXPECT_LE((w - truncate(w, t, r)).fro_norm(), bound) << alpha << " " << r;
    }
  }
}

TEST(TSVD, StableRank) {
  oracle::Rng rng(29);
  const Matrix q = oracle::dct_matrix(2);
  // every slice has singular values (2, 1): stable rank = 2 * 5 / 4
  const Tensor3 w = with_spectrum(3, 3, q, {2.0, 1.0}, rng);
  EXPECT_NEAR(stable_rank(w, OrthogonalTransform::dct(2)), 2.5, 1e-12);
  try {
    stable_rank(Tensor3(2, 2, 2), OrthogonalTransform::dct(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroTensor);
  }
}

TEST(TSVD, SoftThresholdShrinksEverySingularValue) {
  oracle::Rng rng(30);
  const Matrix q = oracle::dct_matrix(3);
  const Tensor3 a = oracle::random_tensor(4, 5, 3, rng);
  const double tau = 0.8;
  const Tensor3 s = soft_threshold(a, OrthogonalTransform::dct(3), tau);
  const auto before = oracle::mode3(a, q), after = oracle::mode3(s, q);
  for (std::size_t k = 0; k < 3; ++k) {
    const Vector sb = Eigen::JacobiSVD<Matrix>(before[k]).singularValues();
    const Vector sa = Eigen::JacobiSVD<Matrix>(after[k]).singularValues();
    for (Eigen::Index j = 0; j < sb.size(); ++j) EXPECT_NEAR(sa(j), std::max(0.0, sb(j) - tau), 1e-10);
  }
  EXPECT_EQ(soft_threshold(a, OrthogonalTransform::dct(3), 1e6).fro_norm(), 0.0);
}
