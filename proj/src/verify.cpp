#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "tnn/error.hpp"
#include "tnn/experiments.hpp"
#include "tnn/tsvd.hpp"

namespace tnn {

namespace {

using Rng = std::mt19937_64;

Tensor3 random_tensor(std::size_t m, std::size_t n, std::size_t c, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor3 t(m, n, c);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

OrthogonalTransform random_transform(std::size_t c, Rng& rng, std::size_t i) {
  if (i % 3 == 0) return OrthogonalTransform::dct(c);
  if (i % 3 == 1) return OrthogonalTransform::identity(c);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(c, c);
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index k = 0; k < g.cols(); ++k) g(r, k) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return OrthogonalTransform::custom(qr.householderQ() * Matrix::Identity(c, c));
}

double rel(const Tensor3& a, const Tensor3& b) {
  const double scale = std::max(1.0, b.fro_norm());
  return (a - b).fro_norm() / scale;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

struct Check {
  std::string name;
  double tol = 0.0;
  double worst = 0.0;
  bool ok = true;
  std::string note;

  void value(double err) {
    if (!(err <= tol)) ok = false;
    worst = std::max(worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
  }
  void require(bool cond, const std::string& why) {
    if (!cond) {
      ok = false;
      if (note.empty()) note = why;
    }
  }
  PropertyResult result() const { return {name, ok, worst, note}; }
};

template <class F>
PropertyResult guarded(const std::string& name, double tol, F&& body) {
  Check c;
  c.name = name;
  c.tol = tol;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.note = e.what();
  }
  return c.result();
}

TNNModel random_model(Rng& rng, std::size_t i, std::size_t depth) {
  const std::size_t c = pick(rng, 1, 4);
  std::vector<std::size_t> w{pick(rng, 2, 5)};
  for (std::size_t l = 0; l < depth; ++l) w.push_back(pick(rng, 2, 6));
  return TNNModel::random(w, random_transform(c, rng, i), rng());
}

}  // namespace

std::vector<PropertyResult> cmd_verify(const Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed");
  const std::size_t count = cfg.get_size("instances");
  if (count == 0) throw Error(ErrorKind::InvalidInputs, "instances must be positive");
  std::vector<PropertyResult> out;

  out.push_back(guarded("transform_orthogonality", 1e-12, [&](Check& ck) {
    for (std::size_t c = 1; c <= 16; ++c) {
      const Matrix m = OrthogonalTransform::dct(c).matrix();
      ck.value((m.transpose() * m - Matrix::Identity(c, c)).norm());
    }
  }));

  out.push_back(guarded("t_product_associativity", 1e-10, [&](Check& ck) {
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(rng, 1, 6), m = pick(rng, 1, 5), n = pick(rng, 1, 5), p = pick(rng, 1, 5),
                        q = pick(rng, 1, 5);
      const OrthogonalTransform t = random_transform(c, rng, i);
      const Tensor3 a = random_tensor(m, n, c, rng), b = random_tensor(n, p, c, rng),
                    d = random_tensor(p, q, c, rng);
      ck.value(rel(t_product(t_product(a, b, t), d, t), t_product(a, t_product(b, d, t), t)));
    }
  }));

  out.push_back(guarded("t_identity", 1e-10, [&](Check& ck) {
    Rng rng(seed + 1);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(rng, 1, 6), m = pick(rng, 1, 5), n = pick(rng, 1, 5);
      const OrthogonalTransform t = random_transform(c, rng, i);
      const Tensor3 a = random_tensor(m, n, c, rng);
      ck.value(rel(t_product(t_identity(m, t), a, t), a));
      ck.value(rel(t_product(a, t_identity(n, t), t), a));
    }
  }));

  out.push_back(guarded("t_transpose_reverses_products", 1e-10, [&](Check& ck) {
    Rng rng(seed + 2);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(rng, 1, 6), m = pick(rng, 1, 5), n = pick(rng, 1, 5), p = pick(rng, 1, 5);
      const OrthogonalTransform t = random_transform(c, rng, i);
      const Tensor3 a = random_tensor(m, n, c, rng), b = random_tensor(n, p, c, rng);
      ck.value(rel(t_transpose(t_product(a, b, t), t), t_product(t_transpose(b, t), t_transpose(a, t), t)));
    }
  }));

  out.push_back(guarded("block_diagonal_homomorphism", 1e-10, [&](Check& ck) {
    Rng rng(seed + 3);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(rng, 1, 6), m = pick(rng, 1, 5), n = pick(rng, 1, 5), p = pick(rng, 1, 5);
      const OrthogonalTransform t = random_transform(c, rng, i);
      const Tensor3 a = random_tensor(m, n, c, rng), b = random_tensor(n, p, c, rng);
      const Matrix lhs = m_block_diag(t_product(a, b, t), t);
      const Matrix rhs = m_block_diag(a, t) * m_block_diag(b, t);
      ck.value((lhs - rhs).norm() / std::max(1.0, rhs.norm()));
    }
  }));

  out.push_back(guarded("tsvd_reconstruction", 1e-8, [&](Check& ck) {
    Rng rng(seed + 4);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(rng, 1, 6), m = pick(rng, 1, 7), n = pick(rng, 1, 7);
      const OrthogonalTransform t = random_transform(c, rng, i);
      const Tensor3 a = random_tensor(m, n, c, rng);
      const TSVDFactors f = tsvd(a, t);
      ck.value(rel(t_product(t_product(f.U, f.S, t), t_transpose(f.V, t), t), a));
    }
  }));

  out.push_back(guarded("truncation_error_identity", 1e-10, [&](Check& ck) {
    Rng rng(seed + 5);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(rng, 1, 6), m = pick(rng, 1, 7), n = pick(rng, 1, 7);
      const OrthogonalTransform t = random_transform(c, rng, i);
      const Tensor3 a = random_tensor(m, n, c, rng);
      const std::size_t r = pick(rng, 1, std::min(m, n));
      const Tensor3 ar = truncate(a, t, r);
      ck.value(rel((a - ar).fro_norm(), truncation_error(a, t, r)));
      ck.require(tubal_rank(ar, t) <= r, "truncated tensor exceeds the requested rank");
    }
  }));

  out.push_back(guarded("input_gradient_finite_difference", 1e-5, [&](Check& ck) {
    Rng rng(seed + 6);
    for (std::size_t i = 0; i < count; ++i) {
      const TNNModel model = random_model(rng, i, pick(rng, 1, 3));
      const Tensor3 x = random_tensor(model.input_dim(), 1, model.channels(), rng);
      const Tensor3 g = backward(model, x).input;
      const double h = 1e-6;
      for (std::size_t k = 0; k < x.size(); ++k) {
        Tensor3 xp = x, xm = x;
        xp.data()[k] += h;
        xm.data()[k] -= h;
        ck.value(std::abs((forward(model, xp) - forward(model, xm)) / (2 * h) - g.data()[k]) /
                 std::max(1.0, g.fro_norm()));
      }
    }
  }));

  out.push_back(guarded("homogeneity", 1e-8, [&](Check& ck) {
    Rng rng(seed + 7);
    for (std::size_t i = 0; i < count; ++i) {
      const TNNModel model = random_model(rng, i, pick(rng, 1, 3));
      const Tensor3 x = random_tensor(model.input_dim(), 1, model.channels(), rng);
      const double f = forward(model, x);
      for (double a : {0.5, 2.0, 3.0}) {
        const double expect = std::pow(a, static_cast<double>(model.depth() + 1)) * f;
        ck.value(std::abs(forward(scale_weights(model, a), x) - expect) / std::max(1e-12, std::abs(expect)));
      }
    }
  }));

  out.push_back(guarded("euler_identity", 1e-8, [&](Check& ck) {
    Rng rng(seed + 8);
    for (std::size_t i = 0; i < count; ++i) {
      const TNNModel model = random_model(rng, i, pick(rng, 1, 3));
      const Tensor3 x = random_tensor(model.input_dim(), 1, model.channels(), rng);
      const Gradients g = backward(model, x);
      double inner = g.head.dot(model.head);
      for (std::size_t l = 0; l < model.depth(); ++l) {
        const auto a = g.layers[l].data();
        const auto w = model.layers[l].data();
        for (std::size_t k = 0; k < a.size(); ++k) inner += a[k] * w[k];
      }
      const double expect = static_cast<double>(model.depth() + 1) * forward(model, x);
      ck.value(std::abs(inner - expect) / std::max(1e-12, std::abs(expect)));
    }
  }));

  out.push_back(guarded("attack_ball_and_scale_invariance", 1e-8, [&](Check& ck) {
    Rng rng(seed + 9);
    const LossSpec loss = LossSpec::logistic();
    for (std::size_t i = 0; i < count; ++i) {
      const TNNModel model = random_model(rng, i, pick(rng, 1, 3));
      const Tensor3 x = random_tensor(model.input_dim(), 1, model.channels(), rng);
      for (AttackKind k : {AttackKind::l2_fgm, AttackKind::fgsm, AttackKind::l2_pgd, AttackKind::linf_pgd}) {
        AttackConfig a;
        a.kind = k;
        a.xi = 0.3;
        const Tensor3 d = attack(model, x, 1, loss, a);
        const double size = a.is_linf() ? lp_norm(d, std::numeric_limits<double>::infinity()) : d.fro_norm();
        ck.require(size <= a.xi * (1.0 + 1e-12), "perturbation leaves the ball");
        ck.value(rel(attack(scale_weights(model, 2.5), x, 1, loss, a), d));
      }
    }
  }));

  out.push_back(guarded("bound_monotonicity", 0.0, [&](Check& ck) {
    Rng rng(seed + 10);
    for (std::size_t i = 0; i < count; ++i) {
      BoundInputs in;
      in.n = pick(rng, 10, 5000);
      in.channels = pick(rng, 1, 8);
      const std::size_t depth = pick(rng, 1, 4);
      for (std::size_t l = 0; l <= depth; ++l) in.widths.push_back(pick(rng, 2, 30));
      for (std::size_t l = 0; l < depth; ++l) in.layer_caps.push_back(0.5 + std::uniform_real_distribution<>(0, 2)(rng));
      for (std::size_t l = 0; l < depth; ++l) in.ranks.push_back(pick(rng, 1, std::min(in.widths[l], in.widths[l + 1])));
      in.decay = SpectralDecay{1.0, 0.75 + std::uniform_real_distribution<>(0, 2)(rng)};
      BoundInputs more = in;
      more.n = in.n * 2;
      ck.require(standard_gap_bound(more).value < standard_gap_bound(in).value, "standard bound not decreasing in N");
      ck.require(adv_gap_bound_full(more).value < adv_gap_bound_full(in).value, "full bound not decreasing in N");
      ck.require(adv_gap_bound_lowrank(more).value < adv_gap_bound_lowrank(in).value,
                 "low-rank bound not decreasing in N");
      BoundInputs wider = in;
      wider.layer_caps[0] *= 1.5;
      ck.require(standard_gap_bound(wider).value > standard_gap_bound(in).value, "standard bound not increasing in B_l");
      ck.require(adv_gap_bound_full(wider).value > adv_gap_bound_full(in).value, "full bound not increasing in B_l");
    }
  }));

  out.push_back(guarded("compression_certificate", 0.0, [&](Check& ck) {
    Rng rng(seed + 11);
    const LossSpec loss = LossSpec::logistic();
    for (std::size_t i = 0; i < std::min<std::size_t>(count, 5); ++i) {
      const std::size_t c = pick(rng, 2, 4), d = pick(rng, 3, 6);
      const OrthogonalTransform t = OrthogonalTransform::dct(c);
      const TNNModel model = TNNModel::random(std::vector<std::size_t>{d, 6, 6}, t, rng());
      const Dataset data = synth_dataset(rng(), 50, d, c, 1);
      AttackConfig a;
      a.kind = i % 2 ? AttackKind::fgsm : AttackKind::l2_pgd;
      a.xi = 0.05;
      const CompressionCertificate cc = compress_and_certify(model, {pick(rng, 1, 3), pick(rng, 1, 6)}, data, loss, a);
      ck.require(cc.observed <= cc.spectral_certificate, "observed distance above the spectral certificate");
      ck.require(cc.spectral_certificate <= cc.certificate * (1.0 + 1e-12), "spectral certificate above the F one");
      ck.value(std::max(0.0, cc.observed - cc.spectral_certificate));
    }
  }));

  out.push_back(guarded("serialization_round_trip", 0.0, [&](Check& ck) {
    Rng rng(seed + 12);
    const TNNModel model = random_model(rng, 0, 2);
    std::stringstream buf;
    write_model(buf, model);
    const TNNModel back = read_model(buf, model.transform);
    for (std::size_t l = 0; l < model.depth(); ++l) {
      ck.require(back.layers[l] == model.layers[l], "layer differs after reload");
    }
    ck.require(back.head == model.head, "head differs after reload");

    const Dataset data = synth_dataset(seed, 20, 4, 3, 1);
    const auto dir = std::filesystem::temp_directory_path() /
                     ("tnn_verify_" + std::to_string(seed) + "_" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    write_idx(data, dir / "images.idx", dir / "labels.idx");
    const Dataset again = load_mnist(dir / "images.idx", dir / "labels.idx");
    std::filesystem::remove_all(dir);
    ck.require(again.size() == data.size(), "IDX round trip changed the sample count");
    for (std::size_t i = 0; i < std::min(again.size(), data.size()); ++i) {
      ck.require(again[i].x == data[i].x && again[i].y == data[i].y, "IDX round trip changed a sample");
    }
  }));

  return out;
}

}  // namespace tnn
