#pragma once

#include <cstddef>
#include <vector>

#include "tnn/tensor3.hpp"
#include "tnn/transform.hpp"

namespace tnn {

/// T = U *_M S *_M V^T with U, V t-orthogonal and S f-diagonal.
struct TSVDFactors {
  Tensor3 U;  // m x m x c
  Tensor3 S;  // m x n x c
  Tensor3 V;  // n x n x c
};

/// Singular values of every transformed frontal slice, slice k in entry k,
/// each sorted in non-increasing order (length min(m, n)).
std::vector<Vector> transformed_singular_values(const Tensor3& t, const OrthogonalTransform& tr);

TSVDFactors tsvd(const Tensor3& t, const OrthogonalTransform& tr);

inline constexpr double default_rank_tolerance = 1e-10;

/// Number of tubes S(i,i,:) with ||S(i,i,:)||_F > tol * ||S||_F.
std::size_t tubal_rank(const Tensor3& t, const OrthogonalTransform& tr,
                       double tol = default_rank_tolerance);

/// Rank of every transformed slice at the same relative tolerance.
std::vector<std::size_t> multi_rank(const Tensor3& t, const OrthogonalTransform& tr,
                                    double tol = default_rank_tolerance);

/// Tube energies ||S(i,i,:)||_F, i < min(m, n). Diagnostic only; truncation
/// does not rank by these.
std::vector<double> tube_energies(const Tensor3& t, const OrthogonalTransform& tr);

/// Best tubal-rank-r approximation: keeps the top-r singular triplets of every
/// transformed frontal slice. Requires 1 <= r <= min(m, n).
Tensor3 truncate(const Tensor3& t, const OrthogonalTransform& tr, std::size_t r);

/// ||T - truncate(T, r)||_F computed from the discarded transformed spectra.
double truncation_error(const Tensor3& t, const OrthogonalTransform& tr, std::size_t r);

/// ||bdiag(M(T))||_F^2 / ||bdiag(M(T))||_2^2. Throws ZeroTensor for T = 0.
double stable_rank(const Tensor3& t, const OrthogonalTransform& tr);

/// Singular value soft-thresholding of every transformed slice by tau.
Tensor3 soft_threshold(const Tensor3& t, const OrthogonalTransform& tr, double tau);

}  // namespace tnn
