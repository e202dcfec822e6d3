#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "tnn/model.hpp"
#include "tnn/tensor3.hpp"

namespace tnn {

struct Sample {
  Tensor3 x;  // d x 1 x c
  int y = 1;  // +1 or -1
};

/// Labelled t-vectors. B_x is the largest sample F-norm.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Sample> samples, std::size_t d, std::size_t c);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t dim() const { return d_; }
  std::size_t channels() const { return c_; }
  double input_bound() const { return bx_; }
  std::size_t positives() const;
  /// True when some example satisfies ||x||_F <= 1.
  bool has_unit_ball_example() const;

  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const { return samples_; }

  /// Samples [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

 private:
  std::vector<Sample> samples_;
  std::size_t d_ = 0;
  std::size_t c_ = 0;
  double bx_ = 0.0;
};

inline constexpr std::uint32_t idx_images_magic = 0x00000803;  // 2051, unsigned bytes
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;  // 2049
inline constexpr std::uint32_t idx_images_f64_magic = 0x00000E03;

/// Reads an IDX image/label pair, keeping the first `limit` samples whose
/// label is one of `classes` in file order. classes.first maps to +1 and
/// classes.second to -1. Each rows x cols image becomes a rows x 1 x cols
/// t-vector (rows are features, columns are channels). Unsigned-byte pixels are
/// scaled by 1/255; float64 images (type code 0x0E) are read verbatim.
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                   std::pair<int, int> classes = {3, 7},
                   std::optional<std::size_t> limit = std::nullopt);

/// Writes a dataset as float64 IDX images plus unsigned-byte labels, the
/// inverse of load_mnist for the same class pair.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels, std::pair<int, int> classes = {3, 7});

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t c = 0;
  std::size_t teacher_rank = 1;
  /// Hidden width of the one-layer teacher; 0 picks max(d, teacher_rank).
  std::size_t teacher_width = 0;
  /// Samples with |teacher(x)| <= min_margin are redrawn (ties always are).
  double min_margin = 0.0;
};

/// Teacher used by synth_dataset: one t-product layer of tubal rank
/// teacher_rank under the DCT, then a head whose output has zero mean under
/// isotropic Gaussian inputs and unit standard deviation on the unit sphere.
TNNModel synth_teacher(const SynthConfig& cfg);

/// Inputs are Gaussian directions normalised to ||x||_F = 1; labels are the
/// sign of synth_teacher's output. Deterministic in the config.
Dataset synth_dataset(const SynthConfig& cfg);
Dataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t c,
                      std::size_t teacher_rank);

}  // namespace tnn
