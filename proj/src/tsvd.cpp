#include "tnn/tsvd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tnn/error.hpp"

namespace tnn {

namespace {

Eigen::BDCSVD<Matrix> slice_svd(const Matrix& a, unsigned options) {
  Eigen::BDCSVD<Matrix> svd(a, options);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalFailure, "per-slice SVD did not converge");
  }
  return svd;
}

// Rebuilds every transformed slice from its SVD after mapping the singular
// values through `shrink(rank_index, sigma)`.
template <typename Shrink>
Tensor3 spectral_map(const Tensor3& t, const OrthogonalTransform& tr, Shrink shrink) {
  const Tensor3 tt = tr.apply(t);
  Tensor3 out(t.rows(), t.cols(), t.channels());
  for (std::size_t k = 0; k < t.channels(); ++k) {
    const auto svd = slice_svd(Matrix(tt.slice(k)), Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector s = svd.singularValues();
    for (Eigen::Index j = 0; j < s.size(); ++j) s(j) = shrink(static_cast<std::size_t>(j), s(j));
    out.slice(k).noalias() = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  }
  return tr.inverse_apply(out);
}

}  // namespace

std::vector<Vector> transformed_singular_values(const Tensor3& t, const OrthogonalTransform& tr) {
  const Tensor3 tt = tr.apply(t);
  std::vector<Vector> out;
  out.reserve(t.channels());
  for (std::size_t k = 0; k < t.channels(); ++k) {
    out.push_back(slice_svd(Matrix(tt.slice(k)), 0).singularValues());
  }
  return out;
}

TSVDFactors tsvd(const Tensor3& t, const OrthogonalTransform& tr) {
  const std::size_t m = t.rows(), n = t.cols(), c = t.channels();
  const Tensor3 tt = tr.apply(t);
  Tensor3 u(m, m, c), s(m, n, c), v(n, n, c);
  for (std::size_t k = 0; k < c; ++k) {
    const auto svd = slice_svd(Matrix(tt.slice(k)), Eigen::ComputeFullU | Eigen::ComputeFullV);
    u.slice(k) = svd.matrixU();
    v.slice(k) = svd.matrixV();
    const Vector& sv = svd.singularValues();
    auto sk = s.slice(k);
    for (Eigen::Index j = 0; j < sv.size(); ++j) sk(j, j) = sv(j);
  }
  return {tr.inverse_apply(u), tr.inverse_apply(s), tr.inverse_apply(v)};
}

std::vector<double> tube_energies(const Tensor3& t, const OrthogonalTransform& tr) {
  const auto spectra = transformed_singular_values(t, tr);
  const std::size_t p = std::min(t.rows(), t.cols());
  std::vector<double> energy(p, 0.0);
  for (const Vector& s : spectra) {
    for (std::size_t i = 0; i < p; ++i) energy[i] += s(static_cast<Eigen::Index>(i)) * s(static_cast<Eigen::Index>(i));
  }
  for (double& e : energy) e = std::sqrt(e);
  return energy;
}

std::size_t tubal_rank(const Tensor3& t, const OrthogonalTransform& tr, double tol) {
  if (tol < 0) throw Error(ErrorKind::InvalidInputs, "rank tolerance must be nonnegative");
  const double threshold = tol * t.fro_norm();
  const auto energy = tube_energies(t, tr);
  return static_cast<std::size_t>(
      std::count_if(energy.begin(), energy.end(), [&](double e) { return e > threshold; }));
}

std::vector<std::size_t> multi_rank(const Tensor3& t, const OrthogonalTransform& tr, double tol) {
  if (tol < 0) throw Error(ErrorKind::InvalidInputs, "rank tolerance must be nonnegative");
  const double threshold = tol * t.fro_norm();
  std::vector<std::size_t> ranks;
  for (const Vector& s : transformed_singular_values(t, tr)) {
    ranks.push_back(static_cast<std::size_t>((s.array() > threshold).count()));
  }
  return ranks;
}

Tensor3 truncate(const Tensor3& t, const OrthogonalTransform& tr, std::size_t r) {
  const std::size_t p = std::min(t.rows(), t.cols());
  if (r < 1 || r > p) {
    throw Error(ErrorKind::RankOutOfRange,
                "rank " + std::to_string(r) + " outside [1, " + std::to_string(p) + "]");
  }
  if (r == p) return t;
  return spectral_map(t, tr, [r](std::size_t j, double s) { return j < r ? s : 0.0; });
}

double truncation_error(const Tensor3& t, const OrthogonalTransform& tr, std::size_t r) {
  const std::size_t p = std::min(t.rows(), t.cols());
  if (r < 1 || r > p) throw Error(ErrorKind::RankOutOfRange, "truncation rank out of range");
  double sq = 0.0;
  for (const Vector& s : transformed_singular_values(t, tr)) {
    sq += s.tail(static_cast<Eigen::Index>(p - r)).squaredNorm();
  }
  return std::sqrt(sq);
}

double stable_rank(const Tensor3& t, const OrthogonalTransform& tr) {
  const double fro = t.fro_norm();
  if (fro == 0.0) throw Error(ErrorKind::ZeroTensor, "stable rank of the zero tensor");
  double spec = 0.0;
  for (const Vector& s : transformed_singular_values(t, tr)) {
    if (s.size() > 0) spec = std::max(spec, s(0));
  }
  return (fro * fro) / (spec * spec);
}

Tensor3 soft_threshold(const Tensor3& t, const OrthogonalTransform& tr, double tau) {
  if (tau < 0) throw Error(ErrorKind::InvalidInputs, "threshold must be nonnegative");
  if (tau == 0.0) return t;
  return spectral_map(t, tr, [tau](std::size_t, double s) { return std::max(s - tau, 0.0); });
}

}  // namespace tnn
