#include <algorithm>
#include <cmath>
#include <limits>

#include "tnn/adversarial.hpp"
#include "tnn/error.hpp"

namespace tnn {

namespace {

// log(1 + e^{s}) without overflow.
double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

}  // namespace

LossSpec LossSpec::exponential() { return LossSpec(LossKind::exponential); }
LossSpec LossSpec::logistic() { return LossSpec(LossKind::logistic); }

std::string_view LossSpec::name() const {
  return kind_ == LossKind::exponential ? "exponential" : "logistic";
}

double LossSpec::value(double q) const {
  if (kind_ == LossKind::exponential) return std::exp(-q);
  return softplus(-q);
}

double LossSpec::derivative(double q) const {
  if (kind_ == LossKind::exponential) return -std::exp(-q);
  if (q >= 0) {
    const double t = std::exp(-q);
    return -t / (1.0 + t);
  }
  return -1.0 / (1.0 + std::exp(q));
}

double LossSpec::exponent(double q) const {
  if (kind_ == LossKind::exponential) return q;
  if (q < 0) return -std::log(softplus(-q));
  // -log log1p(t) = q - log(log1p(t) / t) with t = e^{-q}
  const double t = std::exp(-q);
  const double ratio = t > 0 ? std::log1p(t) / t : 1.0;
  return q - std::log(ratio);
}

double LossSpec::exponent_derivative(double q) const {
  if (kind_ == LossKind::exponential) return 1.0;
  if (q < 0) {
    const double s = 1.0 / (1.0 + std::exp(q));
    return s / softplus(-q);
  }
  const double t = std::exp(-q);
  const double ratio = t > 0 ? t / std::log1p(t) : 1.0;
  return ratio / (1.0 + t);
}

double LossSpec::inverse_exponent(double v) const {
  const double lo_value = exponent(b_f());
  if (!(v >= lo_value)) {
    throw Error(ErrorKind::NotSeparated, "inverse exponent evaluated below F(b_F)");
  }
  if (kind_ == LossKind::exponential) return v;
  double lo = b_f(), hi = 1e6;
  if (v >= exponent(hi)) return hi;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (exponent(mid) < v) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double LossSpec::range_bound(double output_bound) const { return value(-std::abs(output_bound)); }

double LossSpec::lipschitz(double output_bound) const {
  // F' e^{-F} = -l' is nonincreasing in q for both losses, so the supremum
  // sits at q = -output_bound.
  return -derivative(-std::abs(output_bound));
}

double LossSpec::b_g() const { return std::max(2.0 * exponent(b_f()), exponent(2.0 * b_f())); }

std::optional<double> LossSpec::k_constant() const {
  if (kind_ == LossKind::exponential) return 1.0;
  return std::nullopt;
}

}  // namespace tnn
