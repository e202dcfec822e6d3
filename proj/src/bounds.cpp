#include "tnn/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tnn/error.hpp"
#include "tnn/tsvd.hpp"

namespace tnn {

double BoundInputs::weight_cap() const {
  double p = head_cap;
  for (double b : layer_caps) p *= b;
  return p;
}

double BoundInputs::output_cap() const { return (input_bound + xi * compat) * weight_cap(); }

void BoundInputs::use_loss(const LossSpec& loss) {
  lipschitz = loss.lipschitz(output_cap());
  range = loss.range_bound(output_cap());
}

void BoundInputs::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidInputs, m); };
  if (n < 1) fail("N must be positive");
  if (channels < 1) fail("c must be positive");
  if (widths.size() < 2) fail("need widths d_0..d_L with L >= 1");
  if (std::any_of(widths.begin(), widths.end(), [](std::size_t d) { return d == 0; })) fail("zero width");
  if (layer_caps.size() != depth()) fail("need one norm cap per layer");
  if (std::any_of(layer_caps.begin(), layer_caps.end(), [](double b) { return !(b > 0.0); })) {
    fail("layer caps must be positive");
  }
  if (!(head_cap > 0.0) || !(input_bound > 0.0)) fail("B_w and B_x must be positive");
  if (!(xi >= 0.0) || !(compat > 0.0)) fail("need xi >= 0 and C_R > 0");
  if (!(lipschitz > 0.0) || !(range >= 0.0) || !(confidence > 0.0)) fail("need L_l > 0, B >= 0, t > 0");
  if (!ranks.empty()) {
    if (ranks.size() != depth()) fail("need one rank per layer");
    for (std::size_t l = 0; l < ranks.size(); ++l) {
      if (ranks[l] < 1 || ranks[l] > std::min(widths[l], widths[l + 1])) {
        fail("rank r_" + std::to_string(l + 1) + " outside [1, min(d_l, d_{l-1})]");
      }
    }
  }
  if (decay && (!(decay->alpha > 0.5) || !(decay->v0 > 0.0))) fail("decay needs alpha > 1/2 and V0 > 0");
}

namespace {

double confidence_term(const BoundInputs& in) {
  return 3.0 * in.range * std::sqrt(in.confidence / (2.0 * static_cast<double>(in.n)));
}

}  // namespace

GapBound standard_gap_bound(const BoundInputs& in) {
  in.validate();
  const double L = static_cast<double>(in.depth());
  GapBound b;
  b.complexity = in.lipschitz * in.input_bound * in.weight_cap() / std::sqrt(static_cast<double>(in.n)) *
                 (std::sqrt(2.0 * std::log(2.0 * (L + 1.0))) + 1.0);
  b.confidence = confidence_term(in);
  b.value = b.complexity + b.confidence;
  return b;
}

GapBound adv_gap_bound_full(const BoundInputs& in) {
  in.validate();
  const double L = static_cast<double>(in.depth());
  double params = 0.0;
  for (std::size_t l = 1; l < in.widths.size(); ++l) {
    params += static_cast<double>(in.widths[l - 1]) * static_cast<double>(in.widths[l]);
  }
  GapBound b;
  b.complexity = in.constants.full * in.lipschitz * in.output_cap() / std::sqrt(static_cast<double>(in.n)) *
                 std::sqrt(static_cast<double>(in.channels) * params * std::log(3.0 * (L + 1.0)));
  b.confidence = confidence_term(in);
  b.value = b.complexity + b.confidence;
  return b;
}

GapBound adv_gap_bound_lowrank(const BoundInputs& in) {
  in.validate();
  if (in.ranks.empty()) throw Error(ErrorKind::InvalidInputs, "low-rank bound needs ranks");
  const double L = static_cast<double>(in.depth());
  double params = 0.0;
  for (std::size_t l = 1; l < in.widths.size(); ++l) {
    params += static_cast<double>(in.ranks[l - 1]) *
              static_cast<double>(in.widths[l - 1] + in.widths[l]);
  }
  GapBound b;
  b.complexity = in.constants.lowrank * in.lipschitz * in.output_cap() /
                 std::sqrt(static_cast<double>(in.n)) *
                 std::sqrt(static_cast<double>(in.channels) * params * std::log(9.0 * (L + 1.0)));
  b.confidence = confidence_term(in);
  b.value = b.complexity + b.confidence;
  return b;
}

DecayBound adv_gap_bound_decay(const BoundInputs& in) {
  in.validate();
  if (!in.decay) throw Error(ErrorKind::InvalidInputs, "decay bound needs (V0, alpha)");
  const double alpha = in.decay->alpha;
  const double v0 = in.decay->v0;
  const std::size_t depth = in.depth();
  const double L = static_cast<double>(depth);
  const double N = static_cast<double>(in.n);
  const double c = static_cast<double>(in.channels);
  const double bf = in.output_cap();
  const double log_arg = 9.0 * N * L * bf / std::sqrt(c);
  if (!(log_arg > 1.0)) throw Error(ErrorKind::InvalidInputs, "9 N L B_f / sqrt(c) must exceed 1");
  const double log_term = std::log(log_arg);

  DecayBound out;
  double e2_sum = 0.0, opt_radical = 0.0;
  for (std::size_t l = 0; l < depth; ++l) {
    const double fan = static_cast<double>(in.widths[l] + in.widths[l + 1]);
    const double base = L * v0 * bf / in.layer_caps[l];
    const double root = std::pow(base, 1.0 / alpha);
    const double cap = static_cast<double>(std::min(in.widths[l], in.widths[l + 1]));
    out.optimal_ranks.push_back(static_cast<std::size_t>(std::min(std::ceil(root), cap)));
    e2_sum += root * fan;
    opt_radical += std::pow(L * v0 / in.layer_caps[l], 1.0 / alpha) * fan;
  }
  out.ranks = in.ranks.empty() ? out.optimal_ranks : in.ranks;

  double r_hat = 0.0, e1_sum = 0.0;
  for (std::size_t l = 0; l < depth; ++l) {
    const double r = static_cast<double>(out.ranks[l]);
    r_hat += std::pow(r + 1.0, -alpha) / in.layer_caps[l];
    e1_sum += r * static_cast<double>(in.widths[l] + in.widths[l + 1]);
  }
  out.r_hat = v0 * bf * r_hat;
  out.e1 = c * e1_sum * log_term / N;
  out.e2 = c * e2_sum * log_term / N;

  const double p = 2.0 * alpha / (2.0 * alpha + 1.0);
  const double e2_part = std::pow(out.e2, p) * (std::pow(bf, (2.0 * alpha - 1.0) / (2.0 * alpha + 1.0)) + 1.0);
  const double tail = (1.0 + in.confidence * bf) / N;
  const double t_over_n = std::sqrt(in.confidence / N);
  const double scale = in.constants.decay * in.lipschitz;

  out.rank_value = scale * (bf * out.e1 + out.r_hat * std::sqrt(out.e1) + e2_part +
                            std::pow(out.r_hat, p) * std::sqrt(out.e2) +
                            (out.r_hat + in.range / in.lipschitz) * t_over_n + tail);
  out.optimal_value = scale * (std::pow(bf, 1.0 - 1.0 / (2.0 * alpha)) * std::sqrt(c * opt_radical * log_term / N) +
                               e2_part + std::sqrt(out.e2) + in.range / in.lipschitz * t_over_n + tail);
  return out;
}

double attack_fro_radius(const AttackConfig& cfg, std::size_t d, std::size_t c) {
  return cfg.is_linf() ? cfg.xi * std::sqrt(static_cast<double>(d * c)) : cfg.xi;
}

CompressionCertificate compress_and_certify(const TNNModel& model,
                                            const std::vector<std::size_t>& ranks,
                                            const Dataset& data, const LossSpec& loss,
                                            const AttackConfig& attack_cfg,
                                            std::optional<double> input_bound) {
  model.validate();
  if (ranks.size() != model.depth()) throw Error(ErrorKind::RankOutOfRange, "need one rank per layer");
  CompressionCertificate out;
  out.compressed = model;
  for (std::size_t l = 0; l < model.depth(); ++l) {
    out.compressed.layers[l] = truncate(model.layers[l], model.transform, ranks[l]);
    const Tensor3 diff = model.layers[l] - out.compressed.layers[l];
    out.layer_distance.push_back(diff.fro_norm());
    out.layer_spectral_distance.push_back(spectral_norm(diff, model.transform));
  }
  out.delta = *std::max_element(out.layer_distance.begin(), out.layer_distance.end());

  const WeightNorms norms = weight_norms(model);
  out.input_radius = input_bound.value_or(data.input_bound()) +
                     attack_fro_radius(attack_cfg, model.input_dim(), model.channels());
  // delta * B_f * sum_l 1/B_l written as a sum of products so a zero layer is harmless.
  double sum_f = 0.0, sum_sp = 0.0;
  for (std::size_t l = 0; l < model.depth(); ++l) {
    double others = norms.head;
    for (std::size_t k = 0; k < model.depth(); ++k) {
      if (k != l) others *= norms.layers[k];
    }
    sum_f += others;
    sum_sp += out.layer_spectral_distance[l] * others;
  }
  out.certificate = out.delta * out.input_radius * sum_f;
  out.spectral_certificate = out.input_radius * sum_sp;

  const PreparedModel f(model);
  const PreparedModel g(out.compressed);
  for (const Sample& s : data.samples()) {
    const Tensor3 xp = s.x + attack(f, s.x, s.y, loss, attack_cfg);
    const double y = static_cast<double>(s.y);
    out.observed = std::max(out.observed, std::abs(y * f.forward(xp) - y * g.forward(xp)));
  }
  return out;
}

}  // namespace tnn
