#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "tnn/adversarial.hpp"
#include "tnn/data.hpp"
#include "tnn/model.hpp"

namespace tnn {

struct SpectralDecay {
  double v0 = 1.0;     // sigma_j <= v0 * j^{-alpha} in every transformed slice
  double alpha = 1.0;  // > 1/2
};

/// The absolute constants of the bounds are existential; they default to 1
/// and only scale the reported values.
struct BoundConstants {
  double full = 1.0;     // C
  double lowrank = 1.0;  // C'
  double decay = 1.0;    // C_alpha
};

struct BoundInputs {
  std::size_t n = 1;                  // training sample size N
  std::size_t channels = 1;           // c
  std::vector<std::size_t> widths;    // d_0, ..., d_L
  std::vector<double> layer_caps;     // B_1, ..., B_L
  double head_cap = 1.0;              // B_w
  double input_bound = 1.0;           // B_x
  double xi = 0.0;                    // attack radius
  double compat = 1.0;                // C_R
  double lipschitz = 1.0;             // L_l
  double range = 1.0;                 // B
  double confidence = 1.0;            // t
  std::vector<std::size_t> ranks;     // r_1, ..., r_L (optional)
  std::optional<SpectralDecay> decay;
  BoundConstants constants;

  std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
  /// B_W = B_w * prod_l B_l.
  double weight_cap() const;
  /// B_f~ = (B_x + xi C_R) B_W.
  double output_cap() const;
  /// Sets lipschitz and range from the loss evaluated at output_cap().
  void use_loss(const LossSpec& loss);
  void validate() const;
};

struct GapBound {
  double complexity = 0.0;
  double confidence = 0.0;  // 3 B sqrt(t / 2N)
  double value = 0.0;
};

/// L_l B_x B_W / sqrt(N) (sqrt(2 log(2(L+1))) + 1) + 3 B sqrt(t/(2N)).
GapBound standard_gap_bound(const BoundInputs& in);
/// C L_l B_f~ / sqrt(N) sqrt(c sum_l d_{l-1} d_l log(3(L+1))) + 3 B sqrt(t/(2N)).
GapBound adv_gap_bound_full(const BoundInputs& in);
/// C' L_l B_f~ / sqrt(N) sqrt(c sum_l r_l (d_{l-1} + d_l) log(9(L+1))) + 3 B sqrt(t/(2N)).
GapBound adv_gap_bound_lowrank(const BoundInputs& in);

struct DecayBound {
  std::vector<std::size_t> ranks;          // ranks used for r_hat and E1
  std::vector<std::size_t> optimal_ranks;  // min(ceil((L V0 B_f~ / B_l)^{1/alpha}), d_l, d_{l-1})
  double r_hat = 0.0;   // V0 B_f~ sum_l (r_l + 1)^{-alpha} / B_l
  double e1 = 0.0;
  double e2 = 0.0;
  double rank_value = 0.0;     // bound at `ranks`
  double optimal_value = 0.0;  // bound at the optimal ranks (closed form)
};

/// Spectral-decay bound pieces. Uses in.ranks when set, otherwise the optimal
/// ranks. Requires in.decay with alpha > 1/2.
DecayBound adv_gap_bound_decay(const BoundInputs& in);

struct CompressionCertificate {
  TNNModel compressed;
  std::vector<double> layer_distance;           // ||W^(l) - W_r^(l)||_F
  std::vector<double> layer_spectral_distance;  // ||W^(l) - W_r^(l)|| (t-spectral)
  double delta = 0.0;                           // max_l layer_distance
  double input_radius = 0.0;                    // B_x + F-radius of the attack ball
  double certificate = 0.0;                     // delta * B_f~ * sum_l 1/B_l
  double spectral_certificate = 0.0;            // sum_l delta_l^sp * B_f~ / B_l
  double observed = 0.0;                        // max_i |f~(x_i) - g~(x_i)|
};

/// F-norm radius of the attack ball around a d x 1 x c input: xi for the l2
/// attacks, xi sqrt(d c) for the l_inf ones.
double attack_fro_radius(const AttackConfig& cfg, std::size_t d, std::size_t c);

/// Compresses every layer to its tubal-rank-r_l truncation and certifies the
/// adversarial output distance. B_l and B_w are the model's own norms; B_x
/// defaults to the sample bound of `data`. Both models are evaluated at the
/// perturbation computed on the uncompressed model.
CompressionCertificate compress_and_certify(const TNNModel& model,
                                            const std::vector<std::size_t>& ranks,
                                            const Dataset& data, const LossSpec& loss,
                                            const AttackConfig& attack,
                                            std::optional<double> input_bound = std::nullopt);

}  // namespace tnn
