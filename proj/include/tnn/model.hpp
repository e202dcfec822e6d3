#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "tnn/tensor3.hpp"
#include "tnn/transform.hpp"

namespace tnn {

/// f(x; W) = w^T vec(f^(L)(x)) with f^(l) = relu(W^(l) *_M f^(l-1)), f^(0) = x.
///
/// Layer l holds a d_l x d_{l-1} x c weight tensor; the head w has length
/// c * d_L and is applied to vec() of the last feature t-vector.
struct TNNModel {
  OrthogonalTransform transform = OrthogonalTransform::identity(1);
  std::vector<Tensor3> layers;
  Vector head;

  std::size_t depth() const { return layers.size(); }
  std::size_t channels() const { return transform.channels(); }
  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().cols(); }
  /// d_0, d_1, ..., d_L.
  std::vector<std::size_t> widths() const;

  /// Throws DimensionMismatch on broken chaining and InvalidInputs on
  /// non-finite weights.
  void validate() const;

  /// Gaussian init; layer l entries have std sqrt(2/d_{l-1}) (fan-in of one
  /// transformed slice), the head 1/sqrt(d_L). `widths` is d_0..d_L.
  static TNNModel random(std::span<const std::size_t> widths, const OrthogonalTransform& t,
                         std::uint64_t seed);
};

struct Gradients {
  std::vector<Tensor3> layers;
  Vector head;
  Tensor3 input;
};

/// Weight gradients kept in the transformed domain so that a batch can be
/// accumulated with one inverse transform at the end.
struct TransformedGradients {
  std::vector<Tensor3> layers;
  Vector head;

  static TransformedGradients zeros_like(const TNNModel& model);
  /// Maps the layer cotangents back to the original domain.
  Gradients finalize(const OrthogonalTransform& t) const;
};

/// Model with its weight tensors pre-transformed; cheap repeated evaluation.
class PreparedModel {
 public:
  explicit PreparedModel(const TNNModel& model);
  explicit PreparedModel(TNNModel&&) = delete;

  double forward(const Tensor3& x) const;
  /// f^(0), ..., f^(L) in the original domain.
  std::vector<Tensor3> forward_features(const Tensor3& x) const;
  /// upstream * df/dx.
  Tensor3 input_gradient(const Tensor3& x, double upstream = 1.0) const;
  /// Adds upstream * df/dW to acc; returns f(x).
  double accumulate(const Tensor3& x, double upstream, TransformedGradients& acc) const;
  /// As above, with the upstream factor chosen from the output f(x).
  double accumulate(const Tensor3& x, const std::function<double(double)>& upstream,
                    TransformedGradients& acc) const;
  Gradients backward(const Tensor3& x, double upstream) const;

  const TNNModel& model() const { return *model_; }

 private:
  struct Trace;
  Trace run(const Tensor3& x) const;
  Tensor3 reverse(const Trace& tr, double upstream, TransformedGradients* acc) const;

  const TNNModel* model_;
  std::vector<Tensor3> transformed_;  // M(W^(l))
};

double forward(const TNNModel& model, const Tensor3& x);
std::vector<Tensor3> forward_features(const TNNModel& model, const Tensor3& x);
/// Reverse-mode gradients of upstream * f(x; W) with respect to every layer,
/// the head and the input. relu'(0) is taken as 0.
Gradients backward(const TNNModel& model, const Tensor3& x, double upstream = 1.0);

/// Multiplies every layer and the head by a > 0.
TNNModel scale_weights(const TNNModel& model, double a);

struct WeightNorms {
  std::vector<double> layers;  // ||W^(l)||_F
  double head = 0.0;           // ||w||_2
  double total = 0.0;          // sqrt(||w||^2 + sum_l ||W^(l)||_F^2)
  double product = 0.0;        // ||w|| * prod_l ||W^(l)||_F
};

WeightNorms weight_norms(const TNNModel& model);

/// Checkpoint: "TNNW", layer count, (d_l, d_{l-1}, c) per layer as u64
/// little-endian, the layer tensors in TNS3 format, then len(w) and w.
/// The transform is not stored; the loader takes it as an argument.
void write_model(std::ostream& out, const TNNModel& model);
TNNModel read_model(std::istream& in, const OrthogonalTransform& t);
void save_model(const std::filesystem::path& path, const TNNModel& model);
TNNModel load_model(const std::filesystem::path& path, const OrthogonalTransform& t);

}  // namespace tnn
