#include "tnn/transform.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tnn/error.hpp"
#include "tnn/tensor3.hpp"

namespace tnn {

namespace {

void check_orthogonal(const Matrix& m) {
  const auto c = static_cast<double>(m.rows());
  const Matrix gram = m.transpose() * m;
  const double defect = (gram - Matrix::Identity(m.rows(), m.cols())).norm();
  if (!std::isfinite(defect) || defect > OrthogonalTransform::tolerance_scale * std::sqrt(c)) {
    throw Error(ErrorKind::NonOrthogonal,
                "||M^T M - I||_F = " + std::to_string(defect) + " exceeds tolerance");
  }
}

}  // namespace

OrthogonalTransform::OrthogonalTransform(TransformKind kind, Matrix m)
    : kind_(kind), matrix_(std::move(m)), inverse_(matrix_.transpose()) {}

OrthogonalTransform OrthogonalTransform::identity(std::size_t c) {
  if (c == 0) throw Error(ErrorKind::DimensionMismatch, "channel count must be positive");
  const auto n = static_cast<Eigen::Index>(c);
  return OrthogonalTransform(TransformKind::identity, Matrix::Identity(n, n));
}

OrthogonalTransform OrthogonalTransform::dct(std::size_t c) {
  if (c == 0) throw Error(ErrorKind::DimensionMismatch, "channel count must be positive");
  const auto n = static_cast<Eigen::Index>(c);
  const double cd = static_cast<double>(c);
  Matrix m(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / cd) : std::sqrt(2.0 / cd);
    for (Eigen::Index j = 0; j < n; ++j) {
      m(k, j) = scale * std::cos(std::numbers::pi * (2.0 * static_cast<double>(j) + 1.0) *
                                 static_cast<double>(k) / (2.0 * cd));
    }
  }
  check_orthogonal(m);
  return OrthogonalTransform(TransformKind::dct, std::move(m));
}

OrthogonalTransform OrthogonalTransform::custom(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "custom transform must be a non-empty square matrix");
  }
  check_orthogonal(m);
  return OrthogonalTransform(TransformKind::custom, m);
}

OrthogonalTransform OrthogonalTransform::build(TransformKind kind, std::size_t c,
                                               const std::optional<Matrix>& m) {
  switch (kind) {
    case TransformKind::identity: return identity(c);
    case TransformKind::dct: return dct(c);
    case TransformKind::custom:
      if (!m) throw Error(ErrorKind::DimensionMismatch, "custom transform requires a matrix");
      if (static_cast<std::size_t>(m->rows()) != c) {
        throw Error(ErrorKind::DimensionMismatch, "custom matrix is not c x c");
      }
      return custom(*m);
  }
  throw Error(ErrorKind::InvalidInputs, "unknown transform kind");
}

Tensor3 OrthogonalTransform::apply(const Tensor3& t) const {
  if (t.channels() != channels()) {
    throw Error(ErrorKind::DimensionMismatch, "tensor channel count does not match transform");
  }
  if (kind_ == TransformKind::identity) return t;
  Tensor3 out(t.rows(), t.cols(), t.channels());
  out.channel_rows().noalias() = matrix_ * t.channel_rows();
  return out;
}

Tensor3 OrthogonalTransform::inverse_apply(const Tensor3& t) const {
  if (t.channels() != channels()) {
    throw Error(ErrorKind::DimensionMismatch, "tensor channel count does not match transform");
  }
  if (kind_ == TransformKind::identity) return t;
  Tensor3 out(t.rows(), t.cols(), t.channels());
  out.channel_rows().noalias() = inverse_ * t.channel_rows();
  return out;
}

}  // namespace tnn
