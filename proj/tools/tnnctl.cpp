// tnnctl: experiment harness for tensor neural networks.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tnn/error.hpp"
#include "tnn/experiments.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::map<std::string, std::string> values;  // flag-provided keys
  std::vector<std::string> sets;              // --set key=value
  bool synth = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_path, "key = value configuration file");
  app->add_option("--out", f.out_dir, "output directory (default runs/<subcommand>)");
  app->add_option("--set", f.sets, "extra key=value override; repeatable");
  const std::vector<std::pair<std::string, std::string>> keyed = {
      {"--seed", "seed"},         {"--transform", "transform"}, {"--attack", "attack"},
      {"--xi", "xi"},             {"--epochs", "epochs"},       {"--lr", "lr"},
      {"--batch", "batch"},       {"--width", "width"},         {"--layers", "layers"},
      {"--ranks", "ranks"},       {"--lambda", "lambda"},       {"--mnist-images", "mnist_images"},
      {"--mnist-labels", "mnist_labels"}};
  for (const auto& [flag, key] : keyed) {
    app->add_option_function<std::string>(flag, [&f, key](const std::string& v) { f.values[key] = v; },
                                           "sets config key '" + key + "'");
  }
  app->add_flag("--synth", f.synth, "use the synthetic teacher dataset");
}

tnn::Config overrides_from(const CommonFlags& f) {
  tnn::Config c;
  for (const auto& [k, v] : f.values) c.set(k, v);
  if (f.values.count("mnist_images") || f.values.count("mnist_labels")) c.set("data", "mnist");
  if (f.synth) c.set("data", "synth");
  for (const std::string& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw tnn::Error(tnn::ErrorKind::InvalidInputs, "--set expects key=value");
    c.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor neural network experiments, bounds and checks"};
  app.require_subcommand(1);

  std::map<std::string, CommonFlags> flags;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> help = {
      {"gap-vs-n", "adversarial generalization gap against training size"},
      {"implicit-bias", "adversarial training log of stable ranks, risk and norms"},
      {"nuclear-reg", "training with and without the tubal nuclear-norm proximal step"},
      {"bounds", "evaluate the generalization bounds for given inputs"},
      {"compress", "low-rank compression with its output-distance certificate"},
      {"verify", "run the library property suite"}};
  for (const std::string& name : tnn::subcommands()) {
    subs[name] = app.add_subcommand(name, help.at(name));
    add_common(subs[name], flags[name]);
  }
  std::string manifest, replay_out;
  CLI::App* replay = app.add_subcommand("replay", "re-run a command from its manifest");
  replay->add_option("--manifest", manifest, "manifest.txt written by an earlier run")->required();
  replay->add_option("--out", replay_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (replay->parsed()) return tnn::replay_manifest(manifest, replay_out, std::cout);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const CommonFlags& f = flags[name];
      const tnn::Config file = f.config_path.empty() ? tnn::Config{} : tnn::Config::load(f.config_path);
      const tnn::Config cfg = tnn::resolve_config(name, file, overrides_from(f));
      const std::string out = f.out_dir.empty() ? "runs/" + name : f.out_dir;
      const int status = tnn::run_command(name, cfg, out, std::cout);
      std::cout << "wrote " << out << "/manifest.txt\n";
      return status;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
