#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "tnn/adversarial.hpp"
#include "tnn/data.hpp"
#include "tnn/model.hpp"

namespace tnn {

enum class OptimizerKind { gd, sgd };
enum class ConstraintKind { none, rank_projection, nuclear_prox };
enum class ConstraintSchedule { per_step, per_epoch };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd;
  std::size_t batch_size = 80;
  double lr = 0.01;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  AttackConfig attack;
  LossSpec loss = LossSpec::logistic();
  ConstraintKind constraint = ConstraintKind::none;
  std::vector<std::size_t> ranks;  // per layer, rank_projection only
  double lambda = 0.0;             // nuclear_prox only
  /// Defaults: rank projection once per epoch, the proximal map after every step.
  std::optional<ConstraintSchedule> schedule;
  std::size_t log_every = 1;

  ConstraintSchedule effective_schedule() const;
  void validate(const TNNModel& model) const;
};

struct TrainLogRecord {
  std::size_t epoch = 0;
  double adv_risk_train = 0.0;
  double clean_risk_train = 0.0;
  double adv_risk_test = 0.0;
  double clean_risk_test = 0.0;
  double robust_acc = 0.0;  // test set
  double clean_acc = 0.0;   // test set
  double rho = 0.0;
  double qhat_m = 0.0;
  std::optional<double> gamma_tilde;
  std::vector<double> fro;     // per layer
  std::vector<double> stable;  // per layer, 0 for an all-zero layer
};

struct TrainResult {
  TNNModel model;
  std::vector<TrainLogRecord> log;
  /// Set when some layer collapsed to exactly zero (gradients vanish from
  /// there on); training stops at that epoch.
  bool collapsed = false;
};

/// Gradient of N_B^{-1} sum_{i in batch} l(y_i f(x_i + delta_i)) with every
/// delta_i computed at the current weights and then held fixed.
Gradients batch_gradient(const TNNModel& model, const Dataset& data,
                         std::span<const std::size_t> batch, const LossSpec& loss,
                         const AttackConfig& attack);

/// Replaces every W^(l) by its best tubal-rank-r_l approximation.
TNNModel project_ranks(const TNNModel& model, std::span<const std::size_t> ranks);

/// Proximal map of tau * sum_l ||W^(l)||_tubal-nuclear (per-slice singular
/// value soft-thresholding). The head is untouched.
TNNModel prox_nuclear(const TNNModel& model, double tau);

TrainLogRecord evaluate(const TNNModel& model, std::size_t epoch, const Dataset& train,
                        const Dataset& test, const LossSpec& loss, const AttackConfig& attack);

/// Explicit-Euler adversarial training. Epoch 0 logs the starting point (after
/// projection onto the rank constraint, when one is configured). Throws
/// DivergenceDetected when the risk or weights become non-finite.
TrainResult train(TNNModel model, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg);

/// CSV header and rows in full round-trip precision; an undefined gamma is an
/// empty cell.
void write_log_csv(std::ostream& out, std::span<const TrainLogRecord> log, std::size_t depth);
/// Header and row of write_log_csv without the trailing newline.
void write_log_header(std::ostream& out, std::size_t depth);
void write_log_row(std::ostream& out, const TrainLogRecord& r);

}  // namespace tnn
