#include "tnn/tensor3.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "tnn/error.hpp"

namespace tnn {

Tensor3::Tensor3(std::size_t m, std::size_t n, std::size_t c)
    : m_(m), n_(n), c_(c), data_(m * n * c, 0.0) {}

Tensor3::Tensor3(std::size_t m, std::size_t n, std::size_t c, std::vector<double> data)
    : m_(m), n_(n), c_(c), data_(std::move(data)) {
  if (data_.size() != m * n * c) {
    throw Error(ErrorKind::DimensionMismatch, "data length does not equal m*n*c");
  }
}

double Tensor3::fro_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

bool Tensor3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor3& Tensor3::operator+=(const Tensor3& o) {
  if (!same_shape(o)) throw Error(ErrorKind::DimensionMismatch, "shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& o) {
  if (!same_shape(o)) throw Error(ErrorKind::DimensionMismatch, "shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Tensor3 slicewise_product(const Tensor3& a, const Tensor3& b) {
  if (a.cols() != b.rows() || a.channels() != b.channels()) {
    throw Error(ErrorKind::DimensionMismatch, "slicewise product: incompatible shapes");
  }
  Tensor3 out(a.rows(), b.cols(), a.channels());
  for (std::size_t k = 0; k < a.channels(); ++k) out.slice(k).noalias() = a.slice(k) * b.slice(k);
  return out;
}

Tensor3 t_product(const Tensor3& a, const Tensor3& b, const OrthogonalTransform& t) {
  if (a.channels() != t.channels() || b.channels() != t.channels()) {
    throw Error(ErrorKind::TransformChannelMismatch, "t-product: channels differ from transform");
  }
  if (a.cols() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "t-product: inner dims differ");
  return t.inverse_apply(slicewise_product(t.apply(a), t.apply(b)));
}

Tensor3 t_transpose(const Tensor3& a, const OrthogonalTransform& t) {
  // Transposing every frontal slice commutes with the mode-3 transform.
  (void)t;
  Tensor3 out(a.cols(), a.rows(), a.channels());
  for (std::size_t k = 0; k < a.channels(); ++k) out.slice(k) = a.slice(k).transpose();
  return out;
}

Tensor3 t_identity(std::size_t m, const OrthogonalTransform& t) {
  Tensor3 transformed(m, m, t.channels());
  for (std::size_t k = 0; k < t.channels(); ++k) transformed.slice(k).setIdentity();
  return t.inverse_apply(transformed);
}

Matrix m_block_diag(const Tensor3& a, const OrthogonalTransform& t) {
  const Tensor3 ta = t.apply(a);
  const auto m = static_cast<Eigen::Index>(a.rows());
  const auto n = static_cast<Eigen::Index>(a.cols());
  const auto c = static_cast<Eigen::Index>(a.channels());
  Matrix out = Matrix::Zero(m * c, n * c);
  for (Eigen::Index k = 0; k < c; ++k) {
    out.block(k * m, k * n, m, n) = ta.slice(static_cast<std::size_t>(k));
  }
  return out;
}

TensorNorms norms(const Tensor3& a, const OrthogonalTransform& t) {
  TensorNorms out;
  out.fro = a.fro_norm();
  const Tensor3 ta = t.apply(a);
  for (std::size_t k = 0; k < ta.channels(); ++k) {
    if (ta.slice_size() == 0) break;
    Eigen::JacobiSVD<Matrix> svd(Matrix(ta.slice(k)));
    const Vector& s = svd.singularValues();
    if (s.size() > 0) out.spectral = std::max(out.spectral, s(0));
    out.tubal_nuclear += s.sum();
  }
  return out;
}

double spectral_norm(const Tensor3& a, const OrthogonalTransform& t) {
  return norms(a, t).spectral;
}

double lp_norm(const Tensor3& a, double p) {
  if (!(p >= 1.0)) throw Error(ErrorKind::InvalidInputs, "lp norm requires p >= 1");
  const auto vals = a.data();
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : vals) m = std::max(m, std::abs(v));
    return m;
  }
  double s = 0.0;
  for (double v : vals) s += std::pow(std::abs(v), p);
  return std::pow(s, 1.0 / p);
}

namespace {

constexpr std::array<char, 4> tensor_magic{'T', 'N', 'S', '3'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  const T le = to_little(v);
  out.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw Error(ErrorKind::TruncatedFile, "unexpected end of tensor stream");
  }
  return to_little(v);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor3& t) {
  out.write(tensor_magic.data(), tensor_magic.size());
  put<std::uint64_t>(out, t.rows());
  put<std::uint64_t>(out, t.cols());
  put<std::uint64_t>(out, t.channels());
  for (double v : t.data()) put<double>(out, v);
  if (!out) throw Error(ErrorKind::Io, "failed to write tensor");
}

Tensor3 read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) throw Error(ErrorKind::TruncatedFile, "missing tensor magic");
  if (magic != tensor_magic) throw Error(ErrorKind::BadMagic, "expected TNS3 tensor magic");
  const auto m = get<std::uint64_t>(in);
  const auto n = get<std::uint64_t>(in);
  const auto c = get<std::uint64_t>(in);
  constexpr std::uint64_t limit = std::uint64_t{1} << 40;
  if (m > limit || n > limit || c > limit || (m && n && c && m * n > limit / c)) {
    throw Error(ErrorKind::DimensionMismatch, "tensor header dimensions are implausible");
  }
  std::vector<double> data(m * n * c);
  for (double& v : data) v = get<double>(in);
  return Tensor3(m, n, c, std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor3& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  write_tensor(out, t);
}

Tensor3 load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace tnn
