#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tnn/adversarial.hpp"
#include "tnn/error.hpp"

namespace tnn {

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::l2_fgm: return "fgm";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::l2_pgd: return "pgd2";
    case AttackKind::linf_pgd: return "pgdinf";
  }
  return "?";
}

std::optional<AttackKind> parse_attack(std::string_view s) {
  if (s == "fgm" || s == "l2_fgm") return AttackKind::l2_fgm;
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd2" || s == "l2_pgd") return AttackKind::l2_pgd;
  if (s == "pgdinf" || s == "linf_pgd") return AttackKind::linf_pgd;
  return std::nullopt;
}

void AttackConfig::validate() const {
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw Error(ErrorKind::InvalidInputs, "attack radius must be >= 0");
  if (kind == AttackKind::l2_pgd || kind == AttackKind::linf_pgd) {
    if (steps < 1) throw Error(ErrorKind::InvalidInputs, "PGD needs at least one step");
    if (!(rho > 0.0)) throw Error(ErrorKind::InvalidInputs, "PGD step size must be positive");
  }
  if (!(compat > 0.0)) throw Error(ErrorKind::InvalidInputs, "compatibility constant must be positive");
}

namespace {

void project(Tensor3& delta, AttackKind kind, double xi) {
  if (kind == AttackKind::l2_pgd) {
    const double n = delta.fro_norm();
    if (n > xi) delta *= xi / n;
  } else {
    for (double& v : delta.data()) v = std::clamp(v, -xi, xi);
  }
}

}  // namespace

Tensor3 attack(const PreparedModel& model, const Tensor3& x, int y, const LossSpec& loss,
               const AttackConfig& cfg) {
  (void)loss;  // l' <= 0 fixes the ascent direction to -y z for every admissible loss
  cfg.validate();
  Tensor3 delta(x.rows(), x.cols(), x.channels());
  if (cfg.xi == 0.0) return delta;
  const double yd = static_cast<double>(y);

  switch (cfg.kind) {
    case AttackKind::l2_fgm: {
      const Tensor3 z = model.input_gradient(x);
      const double n = z.fro_norm();
      if (n == 0.0) return delta;
      return z * (-cfg.xi * yd / n);
    }
    case AttackKind::fgsm: {
      const Tensor3 z = model.input_gradient(x);
      auto out = delta.data();
      const auto zs = z.data();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = -yd * zs[i];
        out[i] = s > 0 ? cfg.xi : (s < 0 ? -cfg.xi : 0.0);
      }
      return delta;
    }
    case AttackKind::l2_pgd:
    case AttackKind::linf_pgd: {
      for (std::size_t j = 0; j < cfg.steps; ++j) {
        const Tensor3 z = model.input_gradient(x + delta);
        const double n = z.fro_norm();
        if (n == 0.0) break;
        Tensor3 step = z;
        step *= -cfg.rho * cfg.xi * yd / n;
        delta += step;
        project(delta, cfg.kind, cfg.xi);
      }
      return delta;
    }
  }
  return delta;
}

Tensor3 attack(const TNNModel& model, const Tensor3& x, int y, const LossSpec& loss,
               const AttackConfig& cfg) {
  return attack(PreparedModel(model), x, y, loss, cfg);
}

std::vector<double> robust_margins(const PreparedModel& model, const Dataset& data,
                                   const LossSpec& loss, const AttackConfig& cfg) {
  std::vector<double> q;
  q.reserve(data.size());
  for (const Sample& s : data.samples()) {
    const Tensor3 delta = attack(model, s.x, s.y, loss, cfg);
    q.push_back(static_cast<double>(s.y) * model.forward(s.x + delta));
  }
  return q;
}

double adversarial_risk(const TNNModel& model, const Dataset& data, const LossSpec& loss,
                        const AttackConfig& cfg) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "adversarial risk of an empty dataset");
  const PreparedModel pm(model);
  double sum = 0.0;
  for (double q : robust_margins(pm, data, loss, cfg)) sum += loss.value(q);
  return sum / static_cast<double>(data.size());
}

double clean_risk(const TNNModel& model, const Dataset& data, const LossSpec& loss) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "clean risk of an empty dataset");
  const PreparedModel pm(model);
  double sum = 0.0;
  for (const Sample& s : data.samples()) sum += loss.value(static_cast<double>(s.y) * pm.forward(s.x));
  return sum / static_cast<double>(data.size());
}

MarginMetrics margin_metrics(const TNNModel& model, const Dataset& data, const LossSpec& loss,
                             const AttackConfig& cfg) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "margins of an empty dataset");
  const PreparedModel pm(model);
  MarginMetrics out;
  out.margins = robust_margins(pm, data, loss, cfg);
  out.min_margin = *std::min_element(out.margins.begin(), out.margins.end());
  out.rho = weight_norms(model).total;
  const double scale = std::pow(out.rho, static_cast<double>(model.depth() + 1));
  out.normalized_min_margin = out.min_margin / scale;

  // log(1 / (N L_adv)) = -log sum_i exp(-F(q_i)), evaluated as a log-sum-exp.
  double top = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double q : out.margins) {
    top = std::max(top, -loss.exponent(q));
    sum += loss.value(q);
  }
  double lse = 0.0;
  for (double q : out.margins) lse += std::exp(-loss.exponent(q) - top);
  const double log_inv = -(top + std::log(lse));
  out.adv_risk = sum / static_cast<double>(data.size());
  if (log_inv > loss.exponent(loss.b_f())) {
    out.smoothed_margin = loss.inverse_exponent(log_inv) / scale;
  }
  return out;
}

double smoothed_margin(const TNNModel& model, const Dataset& data, const LossSpec& loss,
                       const AttackConfig& cfg) {
  const MarginMetrics m = margin_metrics(model, data, loss, cfg);
  if (!m.smoothed_margin) {
    throw Error(ErrorKind::NotSeparated, "N * adversarial risk is not below l(b_F)");
  }
  return *m.smoothed_margin;
}

}  // namespace tnn
