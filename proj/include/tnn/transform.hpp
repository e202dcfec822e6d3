#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/Dense>

namespace tnn {

class Tensor3;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class TransformKind { identity, dct, custom };

/// Orthogonal c x c matrix M acting along the third (channel) mode.
///
/// apply() maps every tube T(i,j,:) to M * T(i,j,:); inverse_apply() uses the
/// stored transpose. Instances are immutable once built.
class OrthogonalTransform {
 public:
  /// Orthogonality is accepted when ||M^T M - I||_F <= tolerance_scale * sqrt(c).
  static constexpr double tolerance_scale = 1e-10;

  static OrthogonalTransform identity(std::size_t c);
  /// Orthonormal type-II cosine basis: row k is the k-th DCT-II basis vector.
  static OrthogonalTransform dct(std::size_t c);
  static OrthogonalTransform custom(const Matrix& m);
  static OrthogonalTransform build(TransformKind kind, std::size_t c,
                                   const std::optional<Matrix>& m = std::nullopt);

  std::size_t channels() const { return static_cast<std::size_t>(matrix_.rows()); }
  TransformKind kind() const { return kind_; }
  const Matrix& matrix() const { return matrix_; }
  const Matrix& inverse() const { return inverse_; }

  Tensor3 apply(const Tensor3& t) const;
  Tensor3 inverse_apply(const Tensor3& t) const;

  friend bool operator==(const OrthogonalTransform& a, const OrthogonalTransform& b) {
    return a.kind_ == b.kind_ && a.matrix_ == b.matrix_;
  }

 private:
  OrthogonalTransform(TransformKind kind, Matrix m);

  TransformKind kind_;
  Matrix matrix_;
  Matrix inverse_;
};

}  // namespace tnn
