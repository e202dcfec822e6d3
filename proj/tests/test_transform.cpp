#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tnn/error.hpp"
#include "tnn/transform.hpp"

using namespace tnn;

TEST(Transform, DctMatchesCosineDefinition) {
  for (std::size_t c = 1; c <= 12; ++c) {
    EXPECT_LT((OrthogonalTransform::dct(c).matrix() - oracle::dct_matrix(c)).norm(), 1e-14) << c;
  }
}

TEST(Transform, DctTwoChannelsIsHaar) {
  const Matrix m = OrthogonalTransform::dct(2).matrix();
  const double h = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(m(0, 0), h, 1e-15);
  EXPECT_NEAR(m(0, 1), h, 1e-15);
  EXPECT_NEAR(m(1, 0), h, 1e-15);
  EXPECT_NEAR(m(1, 1), -h, 1e-15);
}

TEST(Transform, BuiltInTransformsAreOrthogonal) {
  for (std::size_t c : {1u, 3u, 8u, 28u}) {
    for (const auto& t : {OrthogonalTransform::dct(c), OrthogonalTransform::identity(c)}) {
      const Matrix& m = t.matrix();
      EXPECT_LT((m.transpose() * m - Matrix::Identity(c, c)).norm(), 1e-12);
      EXPECT_LT((t.inverse() * m - Matrix::Identity(c, c)).norm(), 1e-12);
    }
  }
}

TEST(Transform, RejectsNonOrthogonalCustomMatrix) {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 1) = 0.1;
  try {
    OrthogonalTransform::custom(m);
    FAIL() << "accepted a non-orthogonal matrix";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonOrthogonal);
  }
}

TEST(Transform, RejectsZeroChannels) {
  EXPECT_THROW(OrthogonalTransform::dct(0), Error);
  EXPECT_THROW(OrthogonalTransform::identity(0), Error);
}

TEST(Transform, ApplyMixesChannelsAndInverts) {
  oracle::Rng rng(11);
  const Matrix q = oracle::random_orthogonal(5, rng);
  const auto t = OrthogonalTransform::custom(q);
  EXPECT_EQ(t.kind(), TransformKind::custom);
  const Tensor3 a = oracle::random_tensor(3, 4, 5, rng);
  const Tensor3 hat = t.apply(a);
  const auto expect = oracle::mode3(a, q);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_LT((oracle::slice(hat, k) - expect[k]).norm(), 1e-12);
  EXPECT_LT(oracle::rel_err(t.inverse_apply(hat), a), 1e-14);
}

TEST(Transform, IdentityApplyIsCopy) {
  oracle::Rng rng(12);
  const Tensor3 a = oracle::random_tensor(2, 3, 4, rng);
  EXPECT_EQ(OrthogonalTransform::identity(4).apply(a), a);
}

TEST(Transform, ChannelMismatchIsRejected) {
  oracle::Rng rng(13);
  const Tensor3 a = oracle::random_tensor(2, 2, 3, rng);
  EXPECT_THROW(OrthogonalTransform::dct(4).apply(a), Error);
}
