// mppverify <kind> --config PATH [--seed U64] [--replicates N] [--out DIR]
//           [--format json|csv] [--workers N]
//
// Exit status: 0 all rows pass, 1 some row fails or is unconditioned,
// 2 bad config or input, 3 internal error.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mpp/error.hpp"
#include "mpp/harness.hpp"

namespace {

int code(mpp::ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verification harness for point-process Bernstein bounds", "mppverify"};
  app.set_version_flag("--version", mpp::kVersion);
  app.require_subcommand(1, 1);

  std::string config, format = "json", out;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  unsigned workers = 0;
  for (const auto& kind : mpp::experiment_kinds()) {
    auto* sub = app.add_subcommand(kind, "run a " + kind + " experiment");
    sub->add_option("--config", config, "JSON experiment config")->required();
    sub->add_option("--seed", seed, "override master_seed");
    sub->add_option("--replicates", replicates, "override replicates")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory (default: current directory)");
    sub->add_option("--format", format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : code(mpp::ExitCode::config_error);
  }

  const std::string kind = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();
  mpp::RunOptions options;
  if (sub->count("--seed")) options.seed = seed;
  if (sub->count("--replicates")) options.replicates = replicates;
  if (sub->count("--workers")) options.workers = workers;
  options.out = out.empty() ? std::filesystem::current_path() : std::filesystem::path(out);

  try {
    const auto result = mpp::run_experiment(kind, mpp::load_config(config), options);
    std::cout << (format == "csv" ? result.summary_csv : result.report);
    std::cerr << kind << ": " << (result.pass ? "PASS" : "FAIL") << " (" << result.rows.size() << " rows, "
              << result.wall_seconds << " s)\n";
    return code(result.pass ? mpp::ExitCode::pass : mpp::ExitCode::fail);
  } catch (const mpp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return code(mpp::ExitCode::config_error);
  } catch (const mpp::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return code(mpp::ExitCode::config_error);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return code(mpp::ExitCode::internal_error);
  }
}
