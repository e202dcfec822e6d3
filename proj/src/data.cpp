#include "tnn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "tnn/error.hpp"

namespace tnn {

Dataset::Dataset(std::vector<Sample> samples, std::size_t d, std::size_t c)
    : samples_(std::move(samples)), d_(d), c_(c) {
  for (const Sample& s : samples_) {
    if (s.x.rows() != d || s.x.cols() != 1 || s.x.channels() != c) {
      throw Error(ErrorKind::DimensionMismatch, "sample is not a d x 1 x c t-vector");
    }
    if (s.y != 1 && s.y != -1) throw Error(ErrorKind::InvalidInputs, "labels must be +1 or -1");
    const double norm = s.x.fro_norm();
    if (!std::isfinite(norm)) throw Error(ErrorKind::InvalidInputs, "non-finite sample");
    bx_ = std::max(bx_, norm);
  }
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(samples_.begin(), samples_.end(), [](const Sample& s) { return s.y > 0; }));
}

bool Dataset::has_unit_ball_example() const {
  return std::any_of(samples_.begin(), samples_.end(),
                     [](const Sample& s) { return s.x.fro_norm() <= 1.0; });
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, samples_.size());
  begin = std::min(begin, end);
  return Dataset(std::vector<Sample>(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                     samples_.begin() + static_cast<std::ptrdiff_t>(end)),
                 d_, c_);
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw Error(ErrorKind::TruncatedFile, what + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + p.string());
  return in;
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                   std::pair<int, int> classes, std::optional<std::size_t> limit) {
  auto img = open_in(images);
  auto lab = open_in(labels);

  const std::uint32_t img_magic = read_be32(img, "images");
  if (img_magic != idx_images_magic && img_magic != idx_images_f64_magic) {
    throw Error(ErrorKind::BadMagic, "images file: unexpected IDX magic " + std::to_string(img_magic));
  }
  const std::uint32_t lab_magic = read_be32(lab, "labels");
  if (lab_magic != idx_labels_magic) {
    throw Error(ErrorKind::BadMagic, "labels file: unexpected IDX magic " + std::to_string(lab_magic));
  }
  const std::uint32_t count = read_be32(img, "images");
  const std::uint32_t rows = read_be32(img, "images");
  const std::uint32_t cols = read_be32(img, "images");
  const std::uint32_t label_count = read_be32(lab, "labels");
  if (count != label_count) {
    throw Error(ErrorKind::DimensionMismatch, "image and label counts differ");
  }
  if (rows == 0 || cols == 0) throw Error(ErrorKind::DimensionMismatch, "empty image dimensions");

  const bool f64 = img_magic == idx_images_f64_magic;
  const std::size_t pixels = std::size_t{rows} * cols;
  std::vector<unsigned char> raw(pixels * (f64 ? 8 : 1));
  std::vector<Sample> samples;
  const std::size_t keep = limit.value_or(count);
  for (std::uint32_t n = 0; n < count && samples.size() < keep; ++n) {
    img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (img.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw Error(ErrorKind::TruncatedFile, "images file ended at sample " + std::to_string(n));
    }
    const int label = lab.get();
    if (label == std::char_traits<char>::eof()) {
      throw Error(ErrorKind::TruncatedFile, "labels file ended at sample " + std::to_string(n));
    }
    if (label != classes.first && label != classes.second) continue;

    Tensor3 x = Tensor3::tvector(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < cols; ++k) {
        const std::size_t p = i * cols + k;
        double v;
        if (f64) {
          std::uint64_t bits = 0;
          for (int b = 0; b < 8; ++b) bits = (bits << 8) | raw[p * 8 + static_cast<std::size_t>(b)];
          v = std::bit_cast<double>(bits);
        } else {
          v = static_cast<double>(raw[p]) / 255.0;
        }
        x(i, 0, k) = v;
      }
    }
    samples.push_back({std::move(x), label == classes.first ? 1 : -1});
  }
  return Dataset(std::move(samples), rows, cols);
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels, std::pair<int, int> classes) {
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw Error(ErrorKind::Io, "cannot open IDX output files");
  write_be32(img, idx_images_f64_magic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(data.dim()));
  write_be32(img, static_cast<std::uint32_t>(data.channels()));
  write_be32(lab, idx_labels_magic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (const Sample& s : data.samples()) {
    for (std::size_t i = 0; i < data.dim(); ++i) {
      for (std::size_t k = 0; k < data.channels(); ++k) {
        const auto bits = std::bit_cast<std::uint64_t>(s.x(i, 0, k));
        unsigned char b[8];
        for (int q = 0; q < 8; ++q) b[q] = static_cast<unsigned char>(bits >> (56 - 8 * q));
        img.write(reinterpret_cast<const char*>(b), 8);
      }
    }
    lab.put(static_cast<char>(s.y > 0 ? classes.first : classes.second));
  }
  if (!img || !lab) throw Error(ErrorKind::Io, "failed writing IDX files");
}

namespace {

Tensor3 unit_direction(std::mt19937_64& rng, std::size_t d, std::size_t c) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor3 x = Tensor3::tvector(d, c);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& v : x.data()) v = normal(rng);
    norm = x.fro_norm();
  }
  x *= 1.0 / norm;
  return x;
}

}  // namespace

TNNModel synth_teacher(const SynthConfig& cfg) {
  if (cfg.d == 0 || cfg.c == 0) throw Error(ErrorKind::DimensionMismatch, "d and c must be positive");
  const std::size_t width = cfg.teacher_width ? cfg.teacher_width : std::max(cfg.d, cfg.teacher_rank);
  if (cfg.teacher_rank == 0 || cfg.teacher_rank > std::min(width, cfg.d)) {
    throw Error(ErrorKind::RankOutOfRange, "teacher rank must lie in [1, min(width, d)]");
  }
  const auto t = OrthogonalTransform::dct(cfg.c);
  std::mt19937_64 rng(cfg.seed ^ 0x7465616368657221ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor3 left(width, cfg.teacher_rank, cfg.c), right(cfg.teacher_rank, cfg.d, cfg.c);
  for (double& v : left.data()) v = normal(rng);
  for (double& v : right.data()) v = normal(rng);
  TNNModel teacher;
  teacher.transform = t;
  teacher.layers.push_back(t_product(left, right, t));
  teacher.head.resize(static_cast<Eigen::Index>(width * cfg.c));
  for (Eigen::Index i = 0; i < teacher.head.size(); ++i) teacher.head(i) = normal(rng);

  // Under isotropic inputs E relu(z_j) is proportional to the norm of the
  // j-th row of the layer operator; removing that component from the head
  // centres the teacher output.
  Vector row_norm_sq = Vector::Zero(teacher.head.size());
  for (std::size_t i = 0; i < cfg.d; ++i) {
    for (std::size_t k = 0; k < cfg.c; ++k) {
      Tensor3 e = Tensor3::tvector(cfg.d, cfg.c);
      e(i, 0, k) = 1.0;
      const Tensor3 col = t_product(teacher.layers[0], e, t);
      for (std::size_t j = 0; j < col.size(); ++j) {
        row_norm_sq(static_cast<Eigen::Index>(j)) += col.data()[j] * col.data()[j];
      }
    }
  }
  const Vector v = row_norm_sq.cwiseSqrt();
  teacher.head -= (teacher.head.dot(v) / v.squaredNorm()) * v;

  std::mt19937_64 pilot(cfg.seed ^ 0x70696c6f74ULL);
  const PreparedModel prepared(teacher);
  double sum = 0.0, sq = 0.0;
  constexpr int pilot_n = 1000;
  for (int i = 0; i < pilot_n; ++i) {
    const double f = prepared.forward(unit_direction(pilot, cfg.d, cfg.c));
    sum += f;
    sq += f * f;
  }
  const double mean = sum / pilot_n;
  const double sd = std::sqrt(std::max(sq / pilot_n - mean * mean, 1e-300));
  teacher.head /= sd;
  teacher.validate();
  return teacher;
}

Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.min_margin < 0) throw Error(ErrorKind::InvalidInputs, "min_margin must be nonnegative");
  const TNNModel teacher = synth_teacher(cfg);
  const PreparedModel prepared(teacher);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Sample> samples;
  samples.reserve(cfg.n);
  const std::size_t max_draws = 1000 * std::max<std::size_t>(cfg.n, 1);
  std::size_t draws = 0;
  while (samples.size() < cfg.n) {
    if (++draws > max_draws) {
      throw Error(ErrorKind::InvalidInputs, "min_margin rejects almost every draw");
    }
    Tensor3 x = unit_direction(rng, cfg.d, cfg.c);
    const double f = prepared.forward(x);
    if (!(std::abs(f) > cfg.min_margin)) continue;
    samples.push_back({std::move(x), f > 0 ? 1 : -1});
  }
  return Dataset(std::move(samples), cfg.d, cfg.c);
}

Dataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t c,
                      std::size_t teacher_rank) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n = n;
  cfg.d = d;
  cfg.c = c;
  cfg.teacher_rank = teacher_rank;
  return synth_dataset(cfg);
}

}  // namespace tnn
