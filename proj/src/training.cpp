#include "tnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "tnn/error.hpp"
#include "tnn/format.hpp"
#include "tnn/tsvd.hpp"

namespace tnn {

ConstraintSchedule TrainConfig::effective_schedule() const {
  if (schedule) return *schedule;
  return constraint == ConstraintKind::rank_projection ? ConstraintSchedule::per_epoch
                                                       : ConstraintSchedule::per_step;
}

void TrainConfig::validate(const TNNModel& model) const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::InvalidInputs, "lr must be >= 0");
  if (optimizer == OptimizerKind::sgd && batch_size < 1) {
    throw Error(ErrorKind::InvalidInputs, "batch size must be >= 1");
  }
  if (log_every < 1) throw Error(ErrorKind::InvalidInputs, "log_every must be >= 1");
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidInputs, "lambda must be >= 0");
  attack.validate();
  if (constraint == ConstraintKind::rank_projection && ranks.size() != model.depth()) {
    throw Error(ErrorKind::RankOutOfRange, "need one rank per t-product layer");
  }
}

Gradients batch_gradient(const TNNModel& model, const Dataset& data,
                         std::span<const std::size_t> batch, const LossSpec& loss,
                         const AttackConfig& attack_cfg) {
  if (batch.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
  const PreparedModel pm(model);
  auto acc = TransformedGradients::zeros_like(model);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const Sample& s = data[i];
    const Tensor3 delta = attack(pm, s.x, s.y, loss, attack_cfg);
    const double y = static_cast<double>(s.y);
    pm.accumulate(s.x + delta, [&](double f) { return inv * y * loss.derivative(y * f); }, acc);
  }
  return acc.finalize(model.transform);
}

TNNModel project_ranks(const TNNModel& model, std::span<const std::size_t> ranks) {
  if (ranks.size() != model.depth()) {
    throw Error(ErrorKind::RankOutOfRange, "need one rank per t-product layer");
  }
  TNNModel out = model;
  for (std::size_t l = 0; l < model.depth(); ++l) {
    out.layers[l] = truncate(model.layers[l], model.transform, ranks[l]);
  }
  return out;
}

TNNModel prox_nuclear(const TNNModel& model, double tau) {
  if (!(tau >= 0.0)) throw Error(ErrorKind::InvalidInputs, "prox threshold must be >= 0");
  TNNModel out = model;
  if (tau == 0.0) return out;
  for (Tensor3& l : out.layers) l = soft_threshold(l, model.transform, tau);
  return out;
}

TrainLogRecord evaluate(const TNNModel& model, std::size_t epoch, const Dataset& train,
                        const Dataset& test, const LossSpec& loss, const AttackConfig& attack_cfg) {
  TrainLogRecord r;
  r.epoch = epoch;
  const MarginMetrics m = margin_metrics(model, train, loss, attack_cfg);
  r.adv_risk_train = m.adv_risk;
  r.clean_risk_train = clean_risk(model, train, loss);
  r.rho = m.rho;
  r.qhat_m = m.normalized_min_margin;
  r.gamma_tilde = m.smoothed_margin;

  const PreparedModel pm(model);
  const auto q = robust_margins(pm, test, loss, attack_cfg);
  double adv = 0.0, clean = 0.0;
  std::size_t robust_ok = 0, clean_ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    adv += loss.value(q[i]);
    robust_ok += q[i] > 0 ? 1 : 0;
    const double qc = static_cast<double>(test[i].y) * pm.forward(test[i].x);
    clean += loss.value(qc);
    clean_ok += qc > 0 ? 1 : 0;
  }
  const double n = static_cast<double>(std::max<std::size_t>(test.size(), 1));
  r.adv_risk_test = adv / n;
  r.clean_risk_test = clean / n;
  r.robust_acc = static_cast<double>(robust_ok) / n;
  r.clean_acc = static_cast<double>(clean_ok) / n;

  for (const Tensor3& l : model.layers) {
    const double f = l.fro_norm();
    r.fro.push_back(f);
    r.stable.push_back(f == 0.0 ? 0.0 : stable_rank(l, model.transform));
  }
  return r;
}

namespace {

void sgd_step(TNNModel& model, const Gradients& g, double lr) {
  for (std::size_t l = 0; l < model.depth(); ++l) model.layers[l] -= g.layers[l] * lr;
  model.head -= lr * g.head;
  for (const Tensor3& l : model.layers) {
    if (!l.all_finite()) throw Error(ErrorKind::DivergenceDetected, "non-finite weights");
  }
  if (!model.head.allFinite()) throw Error(ErrorKind::DivergenceDetected, "non-finite head");
}

void apply_constraint(TNNModel& model, const TrainConfig& cfg) {
  if (cfg.constraint == ConstraintKind::rank_projection) model = project_ranks(model, cfg.ranks);
  else if (cfg.constraint == ConstraintKind::nuclear_prox) model = prox_nuclear(model, cfg.lr * cfg.lambda);
}

bool has_zero_layer(const TNNModel& model) {
  return std::any_of(model.layers.begin(), model.layers.end(),
                     [](const Tensor3& l) { return l.fro_norm() == 0.0; });
}

void check_record(const TrainLogRecord& r) {
  const bool finite = std::isfinite(r.adv_risk_train) && std::isfinite(r.clean_risk_train) &&
                      std::isfinite(r.adv_risk_test) && std::isfinite(r.clean_risk_test) &&
                      std::isfinite(r.rho);
  if (!finite) {
    throw Error(ErrorKind::DivergenceDetected, "risk became non-finite at epoch " + std::to_string(r.epoch));
  }
}

}  // namespace

TrainResult train(TNNModel model, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg) {
  cfg.validate(model);
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "empty training set");
  if (train_set.dim() != model.input_dim() || train_set.channels() != model.channels()) {
    throw Error(ErrorKind::DimensionMismatch, "training data does not match the model input");
  }
  if (!test_set.empty() &&
      (test_set.dim() != model.input_dim() || test_set.channels() != model.channels())) {
    throw Error(ErrorKind::DimensionMismatch, "test data does not match the model input");
  }
  if (cfg.constraint == ConstraintKind::rank_projection) model = project_ranks(model, cfg.ranks);

  TrainResult result;
  auto log = [&](std::size_t epoch) {
    TrainLogRecord r = evaluate(model, epoch, train_set, test_set, cfg.loss, cfg.attack);
    check_record(r);
    result.log.push_back(std::move(r));
  };
  log(0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch =
      cfg.optimizer == OptimizerKind::gd ? train_set.size() : std::min(cfg.batch_size, train_set.size());
  const auto schedule = cfg.effective_schedule();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.optimizer == OptimizerKind::sgd) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(start + batch, order.size());
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Gradients g = batch_gradient(model, train_set, idx, cfg.loss, cfg.attack);
      sgd_step(model, g, cfg.lr);
      if (schedule == ConstraintSchedule::per_step) apply_constraint(model, cfg);
    }
    if (schedule == ConstraintSchedule::per_epoch) apply_constraint(model, cfg);

    if (has_zero_layer(model)) {
      result.collapsed = true;
      log(epoch);
      break;
    }
    if (epoch % cfg.log_every == 0 || epoch == cfg.epochs) log(epoch);
  }
  result.model = std::move(model);
  return result;
}

void write_log_header(std::ostream& out, std::size_t depth) {
  out << "epoch,adv_risk_train,clean_risk_train,adv_risk_test,clean_risk_test,robust_acc,clean_acc,"
         "rho,qhat_m,gamma_tilde";
  for (std::size_t l = 1; l <= depth; ++l) out << ",fro_l" << l;
  for (std::size_t l = 1; l <= depth; ++l) out << ",stable_l" << l;
}

void write_log_row(std::ostream& out, const TrainLogRecord& r) {
  out << r.epoch << ',' << format_double(r.adv_risk_train) << ',' << format_double(r.clean_risk_train)
      << ',' << format_double(r.adv_risk_test) << ',' << format_double(r.clean_risk_test) << ','
      << format_double(r.robust_acc) << ',' << format_double(r.clean_acc) << ','
      << format_double(r.rho) << ',' << format_double(r.qhat_m) << ',';
  if (r.gamma_tilde) out << format_double(*r.gamma_tilde);
  for (double f : r.fro) out << ',' << format_double(f);
  for (double s : r.stable) out << ',' << format_double(s);
}

void write_log_csv(std::ostream& out, std::span<const TrainLogRecord> log, std::size_t depth) {
  write_log_header(out, depth);
  out << '\n';
  for (const TrainLogRecord& r : log) {
    write_log_row(out, r);
    out << '\n';
  }
}

}  // namespace tnn
