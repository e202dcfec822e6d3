#include "tnn/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "tnn/error.hpp"
#include "tnn/format.hpp"
#include "tnn/tsvd.hpp"

namespace tnn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw Error(ErrorKind::InvalidInputs, "config key '" + key + "': '" + value + "' is not " + what);
}

template <class T>
T parse_number(const std::string& key, const std::string& text, const char* what) {
  T v{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) bad_value(key, text, what);
  return v;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix(splitmix(base) ^ (stream * 0xD1B54A32D192ED03ULL));
}

}  // namespace

// ---------------------------------------------------------------- Config

std::string Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::InvalidInputs, "missing config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const double v = parse_number<double>(key, get(key), "a number");
  if (!std::isfinite(v)) bad_value(key, get(key), "finite");
  return v;
}

std::size_t Config::get_size(const std::string& key) const {
  return parse_number<std::size_t>(key, get(key), "a non-negative integer");
}

std::uint64_t Config::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key), "a non-negative integer");
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const std::string v = get(key);
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(std::string_view(v).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : get_list(key)) out.push_back(parse_number<double>(key, s, "a number list"));
  return out;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const std::string& s : get_list(key)) {
    out.push_back(parse_number<std::size_t>(key, s, "an integer list"));
  }
  return out;
}

Config Config::parse(std::istream& in) {
  Config cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidInputs, "config line " + std::to_string(lineno) + " lacks '='");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::InvalidInputs, "config line " + std::to_string(lineno) + " has no key");
    cfg.set(key, trim(std::string_view(line).substr(eq + 1)));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  return parse(in);
}

void Config::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

// ---------------------------------------------------------------- defaults

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"gap-vs-n", "implicit-bias", "nuclear-reg",
                                                 "bounds",   "compress",      "verify"};
  return names;
}

namespace {

void put(Config& c, std::initializer_list<std::pair<const char*, const char*>> kv) {
  for (const auto& [k, v] : kv) c.set(k, v);
}

void put_data_keys(Config& c) {
  put(c, {{"data", "synth"},
          {"mnist_images", ""},
          {"mnist_labels", ""},
          {"teacher_rank", "2"},
          {"transform", "dct"}});
}

void put_attack_keys(Config& c) {
  put(c, {{"attack", "fgsm"}, {"rho", "0.25"}, {"attack_steps", "10"}, {"compat", "1"}, {"loss", "logistic"}});
}

void put_training_keys(Config& c) {
  put_data_keys(c);
  put_attack_keys(c);
  put(c, {{"optimizer", "sgd"}, {"batch", "80"}, {"init_scale", "1"}, {"log_every", "1"}});
}

}  // namespace

Config default_config(std::string_view command) {
  Config c;
  c.set("seed", "1");
  if (command == "gap-vs-n") {
    put_training_keys(c);
    put(c, {{"xi", "0.02"},
            {"lr", "0.1"},
            {"width", "32"},
            {"layers", "3"},
            {"dim", "8"},
            {"channels", "4"},
            {"min_margin", "0.5"},
            {"n_test", "2000"},
            {"n_sweep", "200,400,800,1600"},
            {"seeds", "3"},
            {"ranks", "4,full"},
            {"steps", "1000"},
            {"epochs", "0"}});
  } else if (command == "implicit-bias" || command == "nuclear-reg") {
    put_training_keys(c);
    put(c, {{"xi", "0.0784313725490196"},  // 20/255
            {"lr", "0.2"},
            {"epochs", "200"},
            {"width", "64"},
            {"layers", "2"},
            {"init_scale", "0.5"},
            {"dim", "4"},
            {"channels", "4"},
            {"min_margin", "1.5"},
            {"n_train", "800"},
            {"n_test", "1000"}});
    if (command == "nuclear-reg") c.set("lambda", "0,0.01");
  } else if (command == "bounds") {
    put(c, {{"n", "1000"},
            {"dim", "28"},
            {"channels", "28"},
            {"width", "28"},
            {"layers", "3"},
            {"layer_cap", "1"},
            {"head_cap", "1"},
            {"input_bound", "1"},
            {"xi", "0"},
            {"compat", "1"},
            {"loss", "logistic"},
            {"lipschitz", "auto"},
            {"range", "auto"},
            {"confidence", "1"},
            {"ranks", "4"},
            {"v0", "1"},
            {"alpha", "1"},
            {"c_full", "1"},
            {"c_lowrank", "1"},
            {"c_decay", "1"}});
  } else if (command == "compress") {
    put_data_keys(c);
    put_attack_keys(c);
    put(c, {{"xi", "0.02"},
            {"model", ""},
            {"width", "32"},
            {"layers", "3"},
            {"dim", "8"},
            {"channels", "4"},
            {"init_scale", "1"},
            {"ranks", "4"},
            {"n_test", "200"},
            {"min_margin", "0"}});
  } else if (command == "verify") {
    c.set("instances", "20");
  } else {
    throw Error(ErrorKind::InvalidInputs, "unknown subcommand '" + std::string(command) + "'");
  }
  return c;
}

Config resolve_config(std::string_view command, const Config& file, const Config& overrides) {
  Config out = default_config(command);
  for (const Config* src : {&file, &overrides}) {
    for (const auto& [k, v] : src->values()) {
      if (!out.has(k)) {
        throw Error(ErrorKind::InvalidInputs,
                    "key '" + k + "' is not used by '" + std::string(command) + "'");
      }
      out.set(k, v);
    }
  }
  return out;
}

// ---------------------------------------------------------------- helpers

OrthogonalTransform parse_transform(std::string_view spec, std::size_t channels) {
  if (spec == "identity") return OrthogonalTransform::identity(channels);
  if (spec == "dct") return OrthogonalTransform::dct(channels);
  if (spec.starts_with("custom:")) {
    const std::filesystem::path path(std::string(spec.substr(7)));
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open transform matrix " + path.string());
    Matrix m(channels, channels);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (!(in >> m(i, j))) {
          throw Error(ErrorKind::DimensionMismatch, "transform file needs " +
                                                        std::to_string(channels * channels) + " values");
        }
      }
    }
    double extra;
    if (in >> extra) throw Error(ErrorKind::DimensionMismatch, "transform file has extra values");
    return OrthogonalTransform::custom(m);
  }
  throw Error(ErrorKind::InvalidInputs, "transform must be identity, dct or custom:<path>");
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::InvalidInputs, "fit needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::InvalidInputs, "fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  return f;
}

namespace {

AttackConfig attack_from(const Config& cfg) {
  AttackConfig a;
  const auto kind = parse_attack(cfg.get("attack"));
  if (!kind) throw Error(ErrorKind::InvalidInputs, "attack must be fgm, fgsm, pgd2 or pgdinf");
  a.kind = *kind;
  a.xi = cfg.get_double("xi");
  a.rho = cfg.get_double("rho");
  a.steps = cfg.get_size("attack_steps");
  a.compat = cfg.get_double("compat");
  a.validate();
  return a;
}

LossSpec loss_from(const Config& cfg) {
  const std::string l = cfg.get("loss");
  if (l == "logistic") return LossSpec::logistic();
  if (l == "exponential") return LossSpec::exponential();
  throw Error(ErrorKind::InvalidInputs, "loss must be logistic or exponential");
}

/// Loads or generates n_total samples; the same source for train and test.
Dataset dataset_from(const Config& cfg, std::size_t n_total, std::uint64_t seed) {
  const std::string kind = cfg.get("data");
  if (kind == "mnist") {
    Dataset d = load_mnist(cfg.get("mnist_images"), cfg.get("mnist_labels"), {3, 7}, n_total);
    if (d.size() < n_total) {
      throw Error(ErrorKind::EmptyDataset, "MNIST files hold only " + std::to_string(d.size()) +
                                               " samples of classes 3 and 7");
    }
    return d;
  }
  if (kind != "synth") throw Error(ErrorKind::InvalidInputs, "data must be synth or mnist");
  SynthConfig sc;
  sc.seed = seed;
  sc.n = n_total;
  sc.d = cfg.get_size("dim");
  sc.c = cfg.get_size("channels");
  sc.teacher_rank = cfg.get_size("teacher_rank");
  sc.min_margin = cfg.get_double("min_margin");
  return synth_dataset(sc);
}

std::vector<std::size_t> widths_from(const Config& cfg, std::size_t d) {
  const std::size_t layers = cfg.get_size("layers");
  if (layers == 0) throw Error(ErrorKind::InvalidInputs, "layers must be positive");
  std::vector<std::size_t> w{d};
  for (std::size_t l = 0; l < layers; ++l) w.push_back(cfg.get_size("width"));
  return w;
}

TNNModel model_from(const Config& cfg, std::size_t d, const OrthogonalTransform& t, std::uint64_t seed) {
  TNNModel m = TNNModel::random(widths_from(cfg, d), t, seed);
  const double s = cfg.get_double("init_scale");
  return s == 1.0 ? m : scale_weights(m, s);
}

TrainConfig train_config_from(const Config& cfg, std::uint64_t seed) {
  TrainConfig tc;
  const std::string opt = cfg.get("optimizer");
  if (opt == "sgd") {
    tc.optimizer = OptimizerKind::sgd;
  } else if (opt == "gd") {
    tc.optimizer = OptimizerKind::gd;
  } else {
    throw Error(ErrorKind::InvalidInputs, "optimizer must be sgd or gd");
  }
  tc.batch_size = cfg.get_size("batch");
  tc.lr = cfg.get_double("lr");
  tc.epochs = cfg.get_size("epochs");
  tc.seed = seed;
  tc.attack = attack_from(cfg);
  tc.loss = loss_from(cfg);
  tc.log_every = cfg.get_size("log_every");
  return tc;
}

/// Per-layer ranks from a list that is either one value (broadcast) or one per
/// layer.
std::vector<std::size_t> layer_ranks(const std::vector<std::size_t>& given, std::size_t depth) {
  if (given.size() == 1) return std::vector<std::size_t>(depth, given.front());
  if (given.size() != depth) {
    throw Error(ErrorKind::InvalidInputs, "ranks needs one value or one per layer");
  }
  return given;
}

TrainResult run_training(const Config& cfg, double lambda) {
  const std::uint64_t seed = cfg.get_u64("seed");
  const std::size_t n_train = cfg.get_size("n_train");
  const std::size_t n_test = cfg.get_size("n_test");
  const Dataset all = dataset_from(cfg, n_train + n_test, derive_seed(seed, 1));
  const Dataset train_set = all.slice(0, n_train);
  const Dataset test_set = all.slice(n_train, n_train + n_test);
  const OrthogonalTransform t = parse_transform(cfg.get("transform"), all.channels());
  const TNNModel model = model_from(cfg, all.dim(), t, derive_seed(seed, 2));
  TrainConfig tc = train_config_from(cfg, derive_seed(seed, 3));
  if (lambda > 0.0) {
    tc.constraint = ConstraintKind::nuclear_prox;
    tc.lambda = lambda;
  } else if (lambda < 0.0) {
    throw Error(ErrorKind::InvalidInputs, "lambda must be non-negative");
  }
  return train(model, train_set, test_set, tc);
}

}  // namespace

// ---------------------------------------------------------------- commands

GapVsNResult cmd_gap_vs_n(const Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed");
  std::vector<std::size_t> sweep = cfg.get_sizes("n_sweep");
  if (sweep.empty()) throw Error(ErrorKind::InvalidInputs, "n_sweep is empty");
  const std::vector<std::string> settings = cfg.get_list("ranks");
  if (settings.empty()) throw Error(ErrorKind::InvalidInputs, "ranks is empty");
  const std::size_t seeds = cfg.get_size("seeds");
  if (seeds == 0) throw Error(ErrorKind::InvalidInputs, "seeds must be positive");
  const std::size_t n_test = cfg.get_size("n_test");
  const std::size_t steps = cfg.get_size("steps");
  const std::size_t fixed_epochs = cfg.get_size("epochs");
  const std::size_t n_max = *std::max_element(sweep.begin(), sweep.end());

  GapVsNResult res;
  for (std::size_t s = 0; s < seeds; ++s) {
    const Dataset pool = dataset_from(cfg, n_max + n_test, derive_seed(seed, 100 + s));
    const Dataset test_set = pool.slice(n_max, n_max + n_test);
    const OrthogonalTransform t = parse_transform(cfg.get("transform"), pool.channels());
    const TNNModel init = model_from(cfg, pool.dim(), t, derive_seed(seed, 200 + s));
    for (const std::string& setting : settings) {
      for (const std::size_t n : sweep) {
        TrainConfig tc = train_config_from(cfg, derive_seed(seed, 300 + s));
        if (fixed_epochs > 0) {
          tc.epochs = fixed_epochs;
        } else if (tc.optimizer == OptimizerKind::gd) {
          tc.epochs = steps;
        } else {
          // equal number of SGD steps for every N
          tc.epochs = std::max<std::size_t>(1, (steps * tc.batch_size + n / 2) / n);
        }
        tc.log_every = tc.epochs;
        if (setting != "full") {
          const std::size_t r = parse_number<std::size_t>("ranks", setting, "an integer or 'full'");
          tc.constraint = ConstraintKind::rank_projection;
          const auto w = init.widths();
          for (std::size_t l = 1; l < w.size(); ++l) tc.ranks.push_back(std::min({r, w[l], w[l - 1]}));
        }
        const TrainResult tr = train(init, pool.slice(0, n), test_set, tc);
        const TrainLogRecord& last = tr.log.back();
        GapRun run;
        run.seed_index = s;
        run.n = n;
        run.rank_setting = setting;
        run.epochs = last.epoch;
        run.adv_risk_train = last.adv_risk_train;
        run.adv_risk_test = last.adv_risk_test;
        run.clean_risk_train = last.clean_risk_train;
        run.clean_risk_test = last.clean_risk_test;
        res.runs.push_back(run);
      }
    }
  }
  for (const std::string& setting : settings) {
    GapSeries ser;
    ser.rank_setting = setting;
    std::vector<double> inv_root;
    for (const std::size_t n : sweep) {
      double adv = 0.0, clean = 0.0;
      for (const GapRun& r : res.runs) {
        if (r.rank_setting == setting && r.n == n) {
          adv += r.adv_gap();
          clean += r.clean_gap();
        }
      }
      ser.n.push_back(n);
      ser.mean_adv_gap.push_back(adv / static_cast<double>(seeds));
      ser.mean_clean_gap.push_back(clean / static_cast<double>(seeds));
      inv_root.push_back(1.0 / std::sqrt(static_cast<double>(n)));
    }
    if (sweep.size() >= 2) ser.fit = fit_line(inv_root, ser.mean_adv_gap);
    res.series.push_back(std::move(ser));
  }
  return res;
}

TrainResult cmd_implicit_bias(const Config& cfg) { return run_training(cfg, 0.0); }

std::vector<LambdaRun> cmd_nuclear_reg(const Config& cfg) {
  const std::vector<double> lambdas = cfg.get_doubles("lambda");
  if (lambdas.empty()) throw Error(ErrorKind::InvalidInputs, "lambda list is empty");
  std::vector<LambdaRun> runs;
  for (double l : lambdas) runs.push_back({l, run_training(cfg, l)});
  return runs;
}

BoundsReport cmd_bounds(const Config& cfg) {
  BoundsReport rep;
  BoundInputs& in = rep.inputs;
  in.n = cfg.get_size("n");
  in.channels = cfg.get_size("channels");
  in.widths = widths_from(cfg, cfg.get_size("dim"));
  const std::size_t depth = in.depth();
  const std::vector<double> caps = cfg.get_doubles("layer_cap");
  if (caps.size() == 1) {
    in.layer_caps.assign(depth, caps.front());
  } else if (caps.size() == depth) {
    in.layer_caps = caps;
  } else {
    throw Error(ErrorKind::InvalidInputs, "layer_cap needs one value or one per layer");
  }
  in.head_cap = cfg.get_double("head_cap");
  in.input_bound = cfg.get_double("input_bound");
  in.xi = cfg.get_double("xi");
  in.compat = cfg.get_double("compat");
  in.confidence = cfg.get_double("confidence");
  in.constants.full = cfg.get_double("c_full");
  in.constants.lowrank = cfg.get_double("c_lowrank");
  in.constants.decay = cfg.get_double("c_decay");
  const std::vector<std::size_t> ranks = cfg.get_sizes("ranks");
  if (!ranks.empty()) in.ranks = layer_ranks(ranks, depth);
  if (!cfg.get_list("alpha").empty()) in.decay = SpectralDecay{cfg.get_double("v0"), cfg.get_double("alpha")};
  const LossSpec loss = loss_from(cfg);
  in.use_loss(loss);
  if (cfg.get("lipschitz") != "auto") in.lipschitz = cfg.get_double("lipschitz");
  if (cfg.get("range") != "auto") in.range = cfg.get_double("range");
  in.validate();

  rep.standard = standard_gap_bound(in);
  rep.full = adv_gap_bound_full(in);
  if (!in.ranks.empty()) rep.lowrank = adv_gap_bound_lowrank(in);
  if (in.decay) rep.decay = adv_gap_bound_decay(in);
  return rep;
}

CompressionCertificate cmd_compress(const Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed");
  const Dataset data = dataset_from(cfg, cfg.get_size("n_test"), derive_seed(seed, 1));
  const OrthogonalTransform t = parse_transform(cfg.get("transform"), data.channels());
  const std::string path = cfg.get("model");
  const TNNModel model = path.empty() ? model_from(cfg, data.dim(), t, derive_seed(seed, 2))
                                      : load_model(path, t);
  if (model.input_dim() != data.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "model input width differs from the data");
  }
  const std::vector<std::size_t> ranks = layer_ranks(cfg.get_sizes("ranks"), model.depth());
  return compress_and_certify(model, ranks, data, loss_from(cfg), attack_from(cfg));
}

// ---------------------------------------------------------------- output

namespace {

std::string fmt(double v) { return format_double(v); }

class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }
  std::ofstream open(const std::string& name) {
    names_.push_back(name);
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir_ / name).string());
    return out;
  }
  void manifest(std::string_view command, const Config& cfg) {
    std::ofstream out(dir_ / "manifest.txt", std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write manifest");
    out << "# tnnctl run manifest\n";
    out << "subcommand = " << command << '\n';
    out << "version = " << library_version << '\n';
    out << "outputs = ";
    for (std::size_t i = 0; i < names_.size(); ++i) out << (i ? "," : "") << names_[i];
    out << '\n';
    cfg.write(out);
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
};

void write_gap(const GapVsNResult& r, OutputSet& os, std::ostream& log) {
  {
    auto out = os.open("gap_vs_n.csv");
    out << "seed_index,n,rank_setting,epochs,adv_risk_train,adv_risk_test,adv_gap,clean_gap\n";
    for (const GapRun& g : r.runs) {
      out << g.seed_index << ',' << g.n << ',' << g.rank_setting << ',' << g.epochs << ','
          << fmt(g.adv_risk_train) << ',' << fmt(g.adv_risk_test) << ',' << fmt(g.adv_gap()) << ','
          << fmt(g.clean_gap()) << '\n';
    }
  }
  {
    auto out = os.open("gap_vs_n_mean.csv");
    out << "rank_setting,n,mean_adv_gap,mean_clean_gap\n";
    for (const GapSeries& s : r.series) {
      for (std::size_t i = 0; i < s.n.size(); ++i) {
        out << s.rank_setting << ',' << s.n[i] << ',' << fmt(s.mean_adv_gap[i]) << ','
            << fmt(s.mean_clean_gap[i]) << '\n';
      }
    }
  }
  auto out = os.open("gap_vs_n_fit.csv");
  out << "rank_setting,slope,intercept,r2\n";
  log << std::left << std::setw(8) << "rank" << std::setw(8) << "N" << "mean adv gap\n";
  for (const GapSeries& s : r.series) {
    out << s.rank_setting << ',' << fmt(s.fit.slope) << ',' << fmt(s.fit.intercept) << ','
        << fmt(s.fit.r2) << '\n';
    for (std::size_t i = 0; i < s.n.size(); ++i) {
      log << std::setw(8) << s.rank_setting << std::setw(8) << s.n[i] << s.mean_adv_gap[i] << '\n';
    }
    log << "  fit against 1/sqrt(N): slope " << s.fit.slope << ", R^2 " << s.fit.r2 << '\n';
  }
}

void summarize_log(const TrainResult& r, std::ostream& log) {
  const TrainLogRecord& a = r.log.front();
  const TrainLogRecord& b = r.log.back();
  log << "epochs " << a.epoch << " -> " << b.epoch << (r.collapsed ? " (collapsed)" : "") << '\n';
  log << "  adv risk (train) " << a.adv_risk_train << " -> " << b.adv_risk_train << '\n';
  log << "  rho              " << a.rho << " -> " << b.rho << '\n';
  for (std::size_t l = 0; l < b.stable.size(); ++l) {
    log << "  layer " << l + 1 << " stable rank " << a.stable[l] << " -> " << b.stable[l] << ", F-norm "
        << a.fro[l] << " -> " << b.fro[l] << '\n';
  }
}

void write_bounds(const BoundsReport& r, OutputSet& os, std::ostream& log) {
  auto out = os.open("bounds.csv");
  out << "bound,complexity,confidence,value\n";
  auto row = [&](const char* name, const GapBound& b) {
    out << name << ',' << fmt(b.complexity) << ',' << fmt(b.confidence) << ',' << fmt(b.value) << '\n';
    log << std::left << std::setw(22) << name << std::setw(16) << b.complexity << std::setw(16)
        << b.confidence << b.value << '\n';
  };
  log << std::left << std::setw(22) << "bound" << std::setw(16) << "complexity" << std::setw(16)
      << "confidence" << "value\n";
  row("standard", r.standard);
  row("adv_full", r.full);
  if (r.lowrank) row("adv_lowrank", *r.lowrank);
  if (r.decay) {
    out << "adv_decay_ranks,,," << fmt(r.decay->rank_value) << '\n';
    out << "adv_decay_optimal,,," << fmt(r.decay->optimal_value) << '\n';
    log << std::setw(54) << "adv_decay_ranks" << r.decay->rank_value << '\n';
    log << std::setw(54) << "adv_decay_optimal" << r.decay->optimal_value << '\n';
    auto d = os.open("bounds_decay.csv");
    d << "quantity,layer,value\n";
    d << "r_hat,," << fmt(r.decay->r_hat) << '\n';
    d << "e1,," << fmt(r.decay->e1) << '\n';
    d << "e2,," << fmt(r.decay->e2) << '\n';
    for (std::size_t l = 0; l < r.decay->ranks.size(); ++l) {
      d << "rank," << l + 1 << ',' << r.decay->ranks[l] << '\n';
    }
    for (std::size_t l = 0; l < r.decay->optimal_ranks.size(); ++l) {
      d << "optimal_rank," << l + 1 << ',' << r.decay->optimal_ranks[l] << '\n';
    }
    log << "r_hat " << r.decay->r_hat << ", E1 " << r.decay->e1 << ", E2 " << r.decay->e2 << '\n';
  }
  log << "B_f = " << r.inputs.output_cap() << ", L_l = " << r.inputs.lipschitz << ", B = " << r.inputs.range
      << '\n';
}

void write_compress(const CompressionCertificate& c, const std::vector<std::size_t>& ranks, OutputSet& os,
                    std::ostream& log) {
  {
    auto out = os.open("compress.csv");
    out << "layer,rank,fro_distance,spectral_distance\n";
    for (std::size_t l = 0; l < c.layer_distance.size(); ++l) {
      out << l + 1 << ',' << ranks[l] << ',' << fmt(c.layer_distance[l]) << ','
          << fmt(c.layer_spectral_distance[l]) << '\n';
    }
  }
  auto out = os.open("compress_summary.csv");
  out << "quantity,value\n";
  out << "delta," << fmt(c.delta) << '\n';
  out << "input_radius," << fmt(c.input_radius) << '\n';
  out << "certificate," << fmt(c.certificate) << '\n';
  out << "spectral_certificate," << fmt(c.spectral_certificate) << '\n';
  out << "observed," << fmt(c.observed) << '\n';
  log << "delta " << c.delta << "\ncertificate " << c.certificate << "\nspectral certificate "
      << c.spectral_certificate << "\nobserved " << c.observed << '\n';
}

}  // namespace

int run_command(std::string_view command, const Config& cfg, const std::filesystem::path& out_dir,
                std::ostream& log) {
  OutputSet os(out_dir);
  int status = 0;
  if (command == "gap-vs-n") {
    write_gap(cmd_gap_vs_n(cfg), os, log);
  } else if (command == "implicit-bias") {
    const TrainResult r = cmd_implicit_bias(cfg);
    auto out = os.open("implicit_bias.csv");
    write_log_csv(out, r.log, r.model.depth());
    out.close();
    save_model(out_dir / "implicit_bias_model.tnnw", r.model);
    summarize_log(r, log);
  } else if (command == "nuclear-reg") {
    const std::vector<LambdaRun> runs = cmd_nuclear_reg(cfg);
    auto out = os.open("nuclear_reg.csv");
    out << "lambda,";
    write_log_header(out, runs.front().result.model.depth());
    out << '\n';
    for (const LambdaRun& r : runs) {
      for (const TrainLogRecord& rec : r.result.log) {
        out << fmt(r.lambda) << ',';
        write_log_row(out, rec);
        out << '\n';
      }
    }
    auto sum = os.open("nuclear_reg_summary.csv");
    sum << "lambda,collapsed,final_epoch,final_adv_risk_train";
    for (std::size_t l = 1; l <= runs.front().result.model.depth(); ++l) sum << ",stable_l" << l;
    sum << '\n';
    for (const LambdaRun& r : runs) {
      const TrainLogRecord& last = r.result.log.back();
      sum << fmt(r.lambda) << ',' << (r.result.collapsed ? 1 : 0) << ',' << last.epoch << ','
          << fmt(last.adv_risk_train);
      for (double s : last.stable) sum << ',' << fmt(s);
      sum << '\n';
      log << "lambda " << r.lambda << ": ";
      summarize_log(r.result, log);
    }
  } else if (command == "bounds") {
    write_bounds(cmd_bounds(cfg), os, log);
  } else if (command == "compress") {
    const CompressionCertificate c = cmd_compress(cfg);
    write_compress(c, layer_ranks(cfg.get_sizes("ranks"), c.compressed.depth()), os, log);
    if (c.observed > c.certificate) status = 1;
  } else if (command == "verify") {
    const std::vector<PropertyResult> props = cmd_verify(cfg);
    auto out = os.open("verify.csv");
    out << "property,passed,max_error\n";
    for (const PropertyResult& p : props) {
      out << p.name << ',' << (p.passed ? 1 : 0) << ',' << fmt(p.max_error) << '\n';
      log << (p.passed ? "PASS " : "FAIL ") << p.name;
      if (!p.detail.empty()) log << " (" << p.detail << ")";
      log << '\n';
      if (!p.passed) status = 1;
    }
  } else {
    throw Error(ErrorKind::InvalidInputs, "unknown subcommand '" + std::string(command) + "'");
  }
  os.manifest(command, cfg);
  return status;
}

int replay_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                    std::ostream& log) {
  Config m = Config::load(manifest);
  const std::string command = m.get("subcommand");
  if (m.has("version") && m.get("version") != library_version) {
    log << "warning: manifest written by version " << m.get("version") << '\n';
  }
  Config cfg;
  for (const auto& [k, v] : m.values()) {
    if (k != "subcommand" && k != "version" && k != "outputs") cfg.set(k, v);
  }
  return run_command(command, resolve_config(command, Config{}, cfg), out_dir, log);
}

}  // namespace tnn
