#pragma once

// Experiment configuration, orchestration and report emission.
//
// A run reads one JSON config, dispatches to the verification routines and
// writes into the output directory:
//   report.jsonl   header line, one line per row, summary line
//   summary.csv    the rows' scalar fields
//   tail_curve.csv u, empirical, cp99, bound (chaining, empirical, mle)
//   stream*.csv    simulated streams (simulate)
//   run_info.json  wall-clock and worker count, kept out of report.jsonl so
//                  reports stay byte-identical across runs
// See docs/config.md for the schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mpp {

inline constexpr const char* kVersion = "mppverify 0.1.0";

enum class ExitCode : int { pass = 0, fail = 1, config_error = 2, internal_error = 3 };

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::optional<unsigned> workers;
  /// Empty: nothing is written.
  std::filesystem::path out;
};

struct RunResult {
  bool pass = false;
  std::vector<nlohmann::ordered_json> rows;
  /// Full report.jsonl content.
  std::string report;
  std::string summary_csv;
  std::string tail_csv;
  double wall_seconds = 0.0;
};

/// Experiment kinds accepted as commands.
const std::vector<std::string>& experiment_kinds();

/// Parses a config file; ConfigError on unreadable or malformed input.
nlohmann::json load_config(const std::filesystem::path& path);

/// Runs `kind` on `config`. The config's own "kind", when present, must
/// match. Throws ConfigError for invalid configs.
RunResult run_experiment(const std::string& kind, const nlohmann::json& config, const RunOptions& options);

/// Seed of case `index` under the master seed.
std::uint64_t case_seed(std::uint64_t master_seed, std::uint64_t index);

}  // namespace mpp
