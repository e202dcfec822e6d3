#include "tnn/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "tnn/error.hpp"

namespace tnn {

std::vector<std::size_t> TNNModel::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().cols());
  for (const Tensor3& l : layers) w.push_back(l.rows());
  return w;
}

void TNNModel::validate() const {
  if (layers.empty()) throw Error(ErrorKind::DimensionMismatch, "model has no t-product layers");
  const std::size_t c = channels();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].channels() != c) {
      throw Error(ErrorKind::TransformChannelMismatch,
                  "layer " + std::to_string(l + 1) + " channel count differs from transform");
    }
    if (l > 0 && layers[l].cols() != layers[l - 1].rows()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "layer " + std::to_string(l + 1) + " input width does not chain");
    }
    if (!layers[l].all_finite()) throw Error(ErrorKind::InvalidInputs, "non-finite layer weight");
  }
  if (static_cast<std::size_t>(head.size()) != c * layers.back().rows()) {
    throw Error(ErrorKind::DimensionMismatch, "head length must be c * d_L");
  }
  if (!head.allFinite()) throw Error(ErrorKind::InvalidInputs, "non-finite head weight");
}

TNNModel TNNModel::random(std::span<const std::size_t> widths, const OrthogonalTransform& t,
                          std::uint64_t seed) {
  if (widths.size() < 2) throw Error(ErrorKind::DimensionMismatch, "need at least d_0 and d_1");
  const std::size_t c = t.channels();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TNNModel model;
  model.transform = t;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    Tensor3 w(widths[l], widths[l - 1], c);
    const double sd = std::sqrt(2.0 / static_cast<double>(widths[l - 1]));
    for (double& v : w.data()) v = sd * normal(rng);
    model.layers.push_back(std::move(w));
  }
  const std::size_t dl = widths.back();
  model.head.resize(static_cast<Eigen::Index>(c * dl));
  const double sd = 1.0 / std::sqrt(static_cast<double>(dl));
  for (Eigen::Index i = 0; i < model.head.size(); ++i) model.head(i) = sd * normal(rng);
  model.validate();
  return model;
}

TransformedGradients TransformedGradients::zeros_like(const TNNModel& model) {
  TransformedGradients g;
  for (const Tensor3& l : model.layers) g.layers.emplace_back(l.rows(), l.cols(), l.channels());
  g.head = Vector::Zero(model.head.size());
  return g;
}

Gradients TransformedGradients::finalize(const OrthogonalTransform& t) const {
  Gradients g;
  for (const Tensor3& l : layers) g.layers.push_back(t.inverse_apply(l));
  g.head = head;
  return g;
}

// Activations are carried as c x d row-major matrices: row k is channel k.
struct PreparedModel::Trace {
  std::vector<RowMatrix> inputs_hat;  // M(f^(l-1)) per layer
  std::vector<RowMatrix> preacts;     // W^(l) *_M f^(l-1), original domain
  RowMatrix features;                 // f^(L)
};

PreparedModel::PreparedModel(const TNNModel& model) : model_(&model) {
  model.validate();
  transformed_.reserve(model.layers.size());
  for (const Tensor3& l : model.layers) transformed_.push_back(model.transform.apply(l));
}

namespace {

void check_input(const TNNModel& model, const Tensor3& x) {
  if (x.rows() != model.input_dim() || x.cols() != 1 || x.channels() != model.channels()) {
    throw Error(ErrorKind::DimensionMismatch,
                "input must be a " + std::to_string(model.input_dim()) + "x1x" +
                    std::to_string(model.channels()) + " t-vector");
  }
}

RowMatrix to_channel_domain(const OrthogonalTransform& t, const RowMatrix& a, bool forward) {
  if (t.kind() == TransformKind::identity) return a;
  return forward ? RowMatrix(t.matrix() * a) : RowMatrix(t.inverse() * a);
}

}  // namespace

PreparedModel::Trace PreparedModel::run(const Tensor3& x) const {
  const TNNModel& m = *model_;
  check_input(m, x);
  const std::size_t c = m.channels();
  Trace tr;
  RowMatrix a = x.channel_rows();
  for (std::size_t l = 0; l < m.depth(); ++l) {
    const Tensor3& w = transformed_[l];
    RowMatrix xb = to_channel_domain(m.transform, a, true);
    RowMatrix zb(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(w.rows()));
    for (std::size_t k = 0; k < c; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      zb.row(kk).noalias() = (w.slice(k) * xb.row(kk).transpose()).transpose();
    }
    RowMatrix z = to_channel_domain(m.transform, zb, false);
    a = z.cwiseMax(0.0);
    tr.inputs_hat.push_back(std::move(xb));
    tr.preacts.push_back(std::move(z));
  }
  tr.features = std::move(a);
  return tr;
}

Tensor3 PreparedModel::reverse(const Trace& tr, double upstream, TransformedGradients* acc) const {
  const TNNModel& m = *model_;
  const std::size_t c = m.channels();
  const auto feat = Eigen::Map<const Vector>(tr.features.data(), tr.features.size());
  if (acc) acc->head.noalias() += upstream * feat;

  RowMatrix g = Eigen::Map<const RowMatrix>(m.head.data(), static_cast<Eigen::Index>(c),
                                            tr.features.cols()) *
                upstream;
  for (std::size_t l = m.depth(); l-- > 0;) {
    const Tensor3& w = transformed_[l];
    // relu'(0) = 0
    RowMatrix gz = g.cwiseProduct((tr.preacts[l].array() > 0.0).cast<double>().matrix());
    RowMatrix gzb = to_channel_domain(m.transform, gz, true);
    RowMatrix gxb(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(w.cols()));
    for (std::size_t k = 0; k < c; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (acc) {
        acc->layers[l].slice(k).noalias() += gzb.row(kk).transpose() * tr.inputs_hat[l].row(kk);
      }
      gxb.row(kk).noalias() = (w.slice(k).transpose() * gzb.row(kk).transpose()).transpose();
    }
    g = to_channel_domain(m.transform, gxb, false);
  }
  Tensor3 grad = Tensor3::tvector(m.input_dim(), c);
  grad.channel_rows() = g;
  return grad;
}

double PreparedModel::forward(const Tensor3& x) const {
  const Trace tr = run(x);
  return model_->head.dot(Eigen::Map<const Vector>(tr.features.data(), tr.features.size()));
}

std::vector<Tensor3> PreparedModel::forward_features(const Tensor3& x) const {
  const Trace tr = run(x);
  std::vector<Tensor3> out;
  out.push_back(x);
  for (std::size_t l = 0; l < tr.preacts.size(); ++l) {
    Tensor3 f = Tensor3::tvector(static_cast<std::size_t>(tr.preacts[l].cols()), model_->channels());
    f.channel_rows() = tr.preacts[l].cwiseMax(0.0);
    out.push_back(std::move(f));
  }
  return out;
}

Tensor3 PreparedModel::input_gradient(const Tensor3& x, double upstream) const {
  return reverse(run(x), upstream, nullptr);
}

double PreparedModel::accumulate(const Tensor3& x, double upstream,
                                 TransformedGradients& acc) const {
  const Trace tr = run(x);
  reverse(tr, upstream, &acc);
  return model_->head.dot(Eigen::Map<const Vector>(tr.features.data(), tr.features.size()));
}

double PreparedModel::accumulate(const Tensor3& x, const std::function<double(double)>& upstream,
                                 TransformedGradients& acc) const {
  const Trace tr = run(x);
  const double f =
      model_->head.dot(Eigen::Map<const Vector>(tr.features.data(), tr.features.size()));
  reverse(tr, upstream(f), &acc);
  return f;
}

Gradients PreparedModel::backward(const Tensor3& x, double upstream) const {
  auto acc = TransformedGradients::zeros_like(*model_);
  const Trace tr = run(x);
  Tensor3 input = reverse(tr, upstream, &acc);
  Gradients g = acc.finalize(model_->transform);
  g.input = std::move(input);
  return g;
}

double forward(const TNNModel& model, const Tensor3& x) { return PreparedModel(model).forward(x); }

std::vector<Tensor3> forward_features(const TNNModel& model, const Tensor3& x) {
  return PreparedModel(model).forward_features(x);
}

Gradients backward(const TNNModel& model, const Tensor3& x, double upstream) {
  return PreparedModel(model).backward(x, upstream);
}

TNNModel scale_weights(const TNNModel& model, double a) {
  if (!(a > 0.0)) throw Error(ErrorKind::NonPositiveScale, "scale must be positive");
  TNNModel out = model;
  for (Tensor3& l : out.layers) l *= a;
  out.head *= a;
  return out;
}

WeightNorms weight_norms(const TNNModel& model) {
  WeightNorms n;
  n.head = model.head.norm();
  double sq = n.head * n.head;
  n.product = n.head;
  for (const Tensor3& l : model.layers) {
    const double f = l.fro_norm();
    n.layers.push_back(f);
    sq += f * f;
    n.product *= f;
  }
  n.total = std::sqrt(sq);
  return n;
}

namespace {

constexpr char model_magic[4] = {'T', 'N', 'N', 'W'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw Error(ErrorKind::TruncatedFile, "unexpected end of model stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void write_model(std::ostream& out, const TNNModel& model) {
  model.validate();
  out.write(model_magic, 4);
  put_u64(out, model.depth());
  for (const Tensor3& l : model.layers) {
    put_u64(out, l.rows());
    put_u64(out, l.cols());
    put_u64(out, l.channels());
  }
  for (const Tensor3& l : model.layers) write_tensor(out, l);
  put_u64(out, static_cast<std::uint64_t>(model.head.size()));
  for (Eigen::Index i = 0; i < model.head.size(); ++i) put_f64(out, model.head(i));
  if (!out) throw Error(ErrorKind::Io, "failed to write model");
}

TNNModel read_model(std::istream& in, const OrthogonalTransform& t) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw Error(ErrorKind::TruncatedFile, "missing model magic");
  if (!std::equal(magic, magic + 4, model_magic)) throw Error(ErrorKind::BadMagic, "expected TNNW");
  const std::uint64_t depth = get_u64(in);
  if (depth == 0 || depth > 4096) throw Error(ErrorKind::DimensionMismatch, "bad layer count");
  std::vector<std::array<std::uint64_t, 3>> dims(depth);
  for (auto& d : dims) d = {get_u64(in), get_u64(in), get_u64(in)};
  TNNModel model;
  model.transform = t;
  for (const auto& d : dims) {
    Tensor3 l = read_tensor(in);
    if (l.rows() != d[0] || l.cols() != d[1] || l.channels() != d[2]) {
      throw Error(ErrorKind::DimensionMismatch, "layer tensor disagrees with header dims");
    }
    model.layers.push_back(std::move(l));
  }
  const std::uint64_t n = get_u64(in);
  if (n > (std::uint64_t{1} << 32)) throw Error(ErrorKind::DimensionMismatch, "bad head length");
  model.head.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < model.head.size(); ++i) model.head(i) = get_f64(in);
  model.validate();
  return model;
}

void save_model(const std::filesystem::path& path, const TNNModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  write_model(out, model);
}

TNNModel load_model(const std::filesystem::path& path, const OrthogonalTransform& t) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_model(in, t);
}

}  // namespace tnn
