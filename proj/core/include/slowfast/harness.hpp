#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slowfast/ergodic.hpp"
#include "slowfast/error.hpp"
#include "slowfast/expansion.hpp"

namespace slowfast {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Flat dotted key -> raw value table, the common form of both config
/// syntaxes.
using ConfigTable = std::map<std::string, std::string>;

/// Parses `key = value` lines; `#` starts a comment, `[section]` headers
/// prefix following keys with `section.`.
ConfigTable parse_config_text(const std::string& text);

/// Parses a JSON object; nested objects become dotted keys and arrays
/// comma-separated lists.
ConfigTable parse_config_json(const std::string& text);

/// Reads a config file, JSON when it starts with '{', key-value otherwise.
ConfigTable load_config_file(const std::filesystem::path& path);

struct AbarExperiment {
  AbarSettings settings{AbarMethod::kTimeAverage, 10.0, 100.0, 256, 0.01, {}, 32};
  std::vector<std::vector<double>> points{{0.0}, {1.0}};
};

struct MixingExperiment {
  std::vector<double> x{0.0};
  std::vector<double> y1{-2.0};
  std::vector<double> y2{2.0};
  double horizon = 10.0;
  std::size_t n_paths = 100;
  double dt = 0.01;
};

struct ExpansionExperiment {
  U1Settings u1{};
  std::size_t n0 = 20000;
};

struct ExperimentConfig {
  std::string model = "jump_ou";
  std::map<std::string, double> model_params;
  std::uint64_t seed = 12345;
  std::vector<std::string> experiments{"weak-rate"};
  std::vector<double> epsilons{0.125, 0.0625, 0.03125, 0.015625};
  double T = 1.0;
  std::optional<double> dt;   // default dt_factor * min(epsilons)
  double dt_factor = 0.1;
  std::string observable = "tanh";
  std::vector<double> x0{0.0};
  std::vector<double> y0{0.5};
  std::size_t n0 = 10000;
  bool grow_n = true;
  bool coupled = true;
  AbarExperiment abar;
  MixingExperiment mixing;
  ExpansionExperiment expansion;
  std::size_t path_dump = 0;  // coupled sample paths written as CSV
  std::filesystem::path output = "results";
  std::size_t threads = 0;    // 0: environment / hardware default
};

/// Known experiment names, also the CLI subcommands.
const std::vector<std::string>& experiment_names();

/// Resolves a table into a config, applying defaults. Throws
/// ValidationError naming the offending key (unknown keys included).
ExperimentConfig resolve_config(const ConfigTable& table);

/// Every field of a resolved config as a table (the manifest echo).
ConfigTable config_table(const ExperimentConfig& config);

/// Checks invariants: epsilons distinct in (0, 1], T > 0, dimensions,
/// writable output directory. Throws ValidationError.
void validate_config(const ExperimentConfig& config);

struct ManifestFile {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
  std::string operation;
  ConfigTable parameters;
};

struct FailureRecord {
  std::string experiment;
  std::string kind;  // "blow-up", "insufficient-data", "invalid-input"
  std::string message;
  std::optional<double> time;
  std::optional<std::size_t> sample;
};

struct FitSummary {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t points = 0;
  std::vector<ExcludedPoint> excluded;
};

struct ResultManifest {
  std::string artifact_version = kArtifactVersion;
  ConfigTable config;
  std::vector<ManifestFile> files;
  std::map<std::string, double> timings;  // seconds per experiment
  std::map<std::string, FitSummary> fits;
  std::vector<FailureRecord> failures;

  bool has_failure(const std::string& kind) const;
};

/// Runs every configured experiment in order and persists CSV, JSON and
/// gnuplot .dat files plus manifest.json under config.output. Files are
/// written as `<name>.partial` and renamed when complete. A blow-up or an
/// unfittable sweep ends that experiment with a failure record; the
/// manifest is still written.
ResultManifest run_experiment(const ExperimentConfig& config);

/// Shortest decimal that reads back to the same double.
std::string format_double(double value);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace slowfast
