#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "tnn/data.hpp"
#include "tnn/model.hpp"
#include "tnn/tensor3.hpp"

namespace tnn {

enum class LossKind { exponential, logistic };

/// Margin loss l(q) = exp(-F(q)) of the margin q = y f(x).
///
/// F is increasing; G is its inverse on [b_F, inf). For the logistic loss
/// l(q) = log(1 + e^{-q}), so F(q) = -log log(1 + e^{-q}) and G has no closed
/// form (monotone bisection on [b_F, 1e6]).
class LossSpec {
 public:
  static LossSpec exponential();
  static LossSpec logistic();

  LossKind kind() const { return kind_; }
  std::string_view name() const;

  double value(double q) const;       // l(q)
  double derivative(double q) const;  // l'(q) <= 0
  double exponent(double q) const;    // F(q)
  double exponent_derivative(double q) const;  // F'(q) >= 0
  /// G(v) for v >= F(b_F); throws NotSeparated below that.
  double inverse_exponent(double v) const;
  double b_f() const { return 0.0; }

  /// Range bound B of the loss over outputs |q| <= output_bound.
  double range_bound(double output_bound) const;
  /// L_l = sup_{|q| <= output_bound} F'(q) e^{-F(q)}.
  double lipschitz(double output_bound) const;

  // Constants of the loss assumptions carried for reference; no computation
  // reads them.
  double b_g() const;
  /// K of the loss assumptions when known in closed form (1 for exponential).
  std::optional<double> k_constant() const;

 private:
  explicit LossSpec(LossKind k) : kind_(k) {}
  LossKind kind_;
};

enum class AttackKind { l2_fgm, fgsm, l2_pgd, linf_pgd };

std::string_view to_string(AttackKind k);
std::optional<AttackKind> parse_attack(std::string_view s);

struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double xi = 0.0;     // radius
  double rho = 0.25;   // PGD step size, relative to xi
  std::size_t steps = 10;
  /// Compatibility constant C_R = sup R_a(x) / ||x||_F of the attack norm.
  double compat = 1.0;

  void validate() const;
  bool is_linf() const { return kind == AttackKind::fgsm || kind == AttackKind::linf_pgd; }
};

/// Perturbation for (x, y) at the current weights.
///   l2_fgm:   -xi y z / ||z||_F, z = df/dx (zero if z = 0)
///   fgsm:     xi sign(-y z), sign(0) = 0
///   *_pgd:    delta <- Proj(delta - rho xi y z_j / ||z_j||_F) from delta = 0
/// Proj is the Euclidean-ball projection for l2_pgd and an entrywise clamp to
/// [-xi, xi] for linf_pgd.
Tensor3 attack(const PreparedModel& model, const Tensor3& x, int y, const LossSpec& loss,
               const AttackConfig& cfg);
Tensor3 attack(const TNNModel& model, const Tensor3& x, int y, const LossSpec& loss,
               const AttackConfig& cfg);

/// N^{-1} sum_i l(y_i f(x_i + delta_i)).
double adversarial_risk(const TNNModel& model, const Dataset& data, const LossSpec& loss,
                        const AttackConfig& cfg);
double clean_risk(const TNNModel& model, const Dataset& data, const LossSpec& loss);

/// Per-sample robust margins q_i = y_i f(x_i + delta_i) in dataset order.
std::vector<double> robust_margins(const PreparedModel& model, const Dataset& data,
                                   const LossSpec& loss, const AttackConfig& cfg);

struct MarginMetrics {
  std::vector<double> margins;  // q_i
  double min_margin = 0.0;      // q_m
  double normalized_min_margin = 0.0;  // q_m / rho^{L+1}
  std::optional<double> smoothed_margin;  // gamma, absent when not separated
  double rho = 0.0;             // ||W||_F
  double adv_risk = 0.0;
};

/// Computes every margin quantity. gamma = G(log(1/(N L_adv))) / rho^{L+1} is
/// left empty when N L_adv >= l(b_F).
MarginMetrics margin_metrics(const TNNModel& model, const Dataset& data, const LossSpec& loss,
                             const AttackConfig& cfg);

/// Same as margin_metrics but throws NotSeparated instead of leaving gamma empty.
double smoothed_margin(const TNNModel& model, const Dataset& data, const LossSpec& loss,
                       const AttackConfig& cfg);

}  // namespace tnn
