#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tnn/transform.hpp"

namespace tnn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SliceMap = Eigen::Map<RowMatrix>;
using ConstSliceMap = Eigen::Map<const RowMatrix>;

/// Dense real m x n x c array.
///
/// Storage is slice-major: the frontal-slice index k is outermost and each
/// slice is row-major, so element (i, j, k) lives at k*m*n + i*n + j. A
/// t-vector is the n == 1 case, in which case the storage order coincides
/// with vec() (features fastest, channels outermost).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t m, std::size_t n, std::size_t c);
  Tensor3(std::size_t m, std::size_t n, std::size_t c, std::vector<double> data);

  static Tensor3 tvector(std::size_t d, std::size_t c) { return Tensor3(d, 1, c); }

  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }
  std::size_t channels() const { return c_; }
  std::size_t size() const { return data_.size(); }
  std::size_t slice_size() const { return m_ * n_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[k * m_ * n_ + i * n_ + j];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[k * m_ * n_ + i * n_ + j];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  SliceMap slice(std::size_t k) {
    return SliceMap(data_.data() + k * m_ * n_, static_cast<Eigen::Index>(m_),
                    static_cast<Eigen::Index>(n_));
  }
  ConstSliceMap slice(std::size_t k) const {
    return ConstSliceMap(data_.data() + k * m_ * n_, static_cast<Eigen::Index>(m_),
                         static_cast<Eigen::Index>(n_));
  }

  /// c x (m*n) view whose k-th row is frontal slice k; mode-3 products are a
  /// left multiplication of this view.
  SliceMap channel_rows() {
    return SliceMap(data_.data(), static_cast<Eigen::Index>(c_),
                    static_cast<Eigen::Index>(m_ * n_));
  }
  ConstSliceMap channel_rows() const {
    return ConstSliceMap(data_.data(), static_cast<Eigen::Index>(c_),
                         static_cast<Eigen::Index>(m_ * n_));
  }

  bool same_shape(const Tensor3& o) const { return m_ == o.m_ && n_ == o.n_ && c_ == o.c_; }

  double fro_norm() const;
  bool all_finite() const;

  Tensor3& operator+=(const Tensor3& o);
  Tensor3& operator-=(const Tensor3& o);
  Tensor3& operator*=(double a);

  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(Tensor3 a, double s) { return a *= s; }
  friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }
  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::size_t c_ = 0;
  std::vector<double> data_;
};

/// Frontal-slice-wise matrix product: (A (.) B)_k = A_k B_k.
Tensor3 slicewise_product(const Tensor3& a, const Tensor3& b);

/// C = M^{-1}( M(A) (.) M(B) ).
Tensor3 t_product(const Tensor3& a, const Tensor3& b, const OrthogonalTransform& t);

/// M(A^T)_k = (M(A)_k)^T.
Tensor3 t_transpose(const Tensor3& a, const OrthogonalTransform& t);

/// Tensor whose transformed frontal slices are all the m x m identity.
Tensor3 t_identity(std::size_t m, const OrthogonalTransform& t);

/// bdiag(M(A)), an (m c) x (n c) dense matrix.
Matrix m_block_diag(const Tensor3& a, const OrthogonalTransform& t);

struct TensorNorms {
  double fro = 0.0;
  /// Largest singular value over the transformed frontal slices.
  double spectral = 0.0;
  /// Sum of nuclear norms of the transformed frontal slices (no 1/c factor).
  double tubal_nuclear = 0.0;
};

TensorNorms norms(const Tensor3& a, const OrthogonalTransform& t);
double spectral_norm(const Tensor3& a, const OrthogonalTransform& t);
/// Entrywise l_p norm of vec(A); p >= 1, p = infinity allowed.
double lp_norm(const Tensor3& a, double p);

/// Binary format: "TNS3", m, n, c as u64 little-endian, then m*n*c f64
/// little-endian values in slice-major order.
void write_tensor(std::ostream& out, const Tensor3& t);
Tensor3 read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor3& t);
Tensor3 load_tensor(const std::filesystem::path& path);

}  // namespace tnn
