// slowfast: command-line front end of the experiment harness.
//
//   slowfast <subcommand> [--config PATH] [--seed U64] [--out DIR]
//            [--threads N] [--set key=value]...
//
// Subcommands: check, abar, mixing, weak-rate, strong-rate, expansion run a
// single experiment; `run` runs the experiments listed in the config.
// Exit codes: 0 success, 2 validation error, 3 simulation blow-up,
// 4 insufficient data for a rate fit.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slowfast/error.hpp"
#include "slowfast/harness.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitBlowUp = 3;
constexpr int kExitInsufficient = 4;

void print_summary(const slowfast::ResultManifest& m, const std::string& out) {
  for (const auto& f : m.files) std::cout << "wrote " << out << "/" << f.path << "\n";
  for (const auto& [name, fit] : m.fits) {
    std::cout << name << ": slope " << slowfast::format_double(fit.slope) << " [95% "
              << slowfast::format_double(fit.ci_low) << ", "
              << slowfast::format_double(fit.ci_high) << "], R^2 "
              << slowfast::format_double(fit.r_squared) << ", " << fit.points << " points, "
              << fit.excluded.size() << " excluded\n";
  }
  for (const auto& f : m.failures) {
    std::cerr << "failure in " << f.experiment << " (" << f.kind << "): " << f.message << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slow/fast jump-diffusion averaging experiments"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::string threads;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (key = value or JSON)");
    sub->add_option("--seed", seed, "Master seed (unsigned 64-bit)");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--threads", threads,
                    "Worker threads (speed only; default $SLOWFAST_THREADS or all cores)");
    sub->add_option("--set", overrides, "Override a config key: key=value")->take_all();
  };

  std::vector<CLI::App*> subs;
  for (const auto& name : slowfast::experiment_names()) {
    subs.push_back(app.add_subcommand(name, "Run the " + name + " experiment"));
  }
  subs.push_back(app.add_subcommand("run", "Run the experiments listed in the config"));
  for (auto* s : subs) add_common(s);

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    slowfast::ConfigTable table;
    if (!config_path.empty()) table = slowfast::load_config_file(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw slowfast::ValidationError(o, "--set expects key=value");
      table[o.substr(0, eq)] = o.substr(eq + 1);
    }
    if (!seed.empty()) table["seed"] = seed;
    if (!out_dir.empty()) table["output"] = out_dir;
    if (!threads.empty()) table["threads"] = threads;
    if (command != "run") table["experiments"] = command;

    const slowfast::ExperimentConfig config = slowfast::resolve_config(table);
    const slowfast::ResultManifest manifest = slowfast::run_experiment(config);
    print_summary(manifest, config.output.string());
    if (manifest.has_failure("blow-up")) return kExitBlowUp;
    if (manifest.has_failure("insufficient-data")) return kExitInsufficient;
    if (manifest.has_failure("invalid-input")) return kExitValidation;
    return 0;
  } catch (const slowfast::ValidationError& e) {
    std::cerr << "validation error in '" << e.field() << "': " << e.what() << "\n";
    return kExitValidation;
  } catch (const slowfast::BlowUpError& e) {
    std::cerr << e.what() << "\n";
    return kExitBlowUp;
  } catch (const slowfast::InsufficientDataError& e) {
    std::cerr << e.what() << "\n";
    return kExitInsufficient;
  } catch (const slowfast::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
