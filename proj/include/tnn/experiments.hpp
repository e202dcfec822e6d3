#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tnn/bounds.hpp"
#include "tnn/training.hpp"

namespace tnn {

inline constexpr std::string_view library_version = "1.0.0";

/// Flat key = value configuration. Values are kept as the text they were given
/// so a manifest replays exactly.
class Config {
 public:
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Comma-separated lists; an empty value is an empty list.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  /// `key = value` lines; '#' starts a comment. Later lines win.
  static Config parse(std::istream& in);
  static Config load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
};

const std::vector<std::string>& subcommands();

/// Every key the subcommand understands, with its default value.
Config default_config(std::string_view command);

/// defaults <- file <- overrides. Unknown keys raise InvalidInputs.
Config resolve_config(std::string_view command, const Config& file, const Config& overrides);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares line y = slope x + intercept.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct GapRun {
  std::size_t seed_index = 0;
  std::size_t n = 0;
  std::string rank_setting;
  std::size_t epochs = 0;
  double adv_risk_train = 0.0;
  double adv_risk_test = 0.0;
  double clean_risk_train = 0.0;
  double clean_risk_test = 0.0;
  double adv_gap() const { return adv_risk_test - adv_risk_train; }
  double clean_gap() const { return clean_risk_test - clean_risk_train; }
};

struct GapSeries {
  std::string rank_setting;
  std::vector<std::size_t> n;
  std::vector<double> mean_adv_gap;
  std::vector<double> mean_clean_gap;
  LinearFit fit;  // mean_adv_gap against 1/sqrt(N)
};

struct GapVsNResult {
  std::vector<GapRun> runs;
  std::vector<GapSeries> series;
};

struct LambdaRun {
  double lambda = 0.0;
  TrainResult result;
};

struct BoundsReport {
  BoundInputs inputs;
  GapBound standard;
  GapBound full;
  std::optional<GapBound> lowrank;
  std::optional<DecayBound> decay;
};

struct PropertyResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  std::string detail;
};

GapVsNResult cmd_gap_vs_n(const Config& cfg);
TrainResult cmd_implicit_bias(const Config& cfg);
std::vector<LambdaRun> cmd_nuclear_reg(const Config& cfg);
BoundsReport cmd_bounds(const Config& cfg);
CompressionCertificate cmd_compress(const Config& cfg);
/// Library property suite with fixed seeds.
std::vector<PropertyResult> cmd_verify(const Config& cfg);

/// Runs `command`, writes its CSV files and manifest.txt under out_dir and a
/// human-readable summary to `log`. Returns the process exit status.
int run_command(std::string_view command, const Config& cfg, const std::filesystem::path& out_dir,
                std::ostream& log);

/// Re-runs the command recorded in a manifest into out_dir.
int replay_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                    std::ostream& log);

/// Orthogonal transform named by "identity", "dct" or "custom:<path>" (a text
/// file of c*c whitespace-separated values in row-major order).
OrthogonalTransform parse_transform(std::string_view spec, std::size_t channels);

}  // namespace tnn
