// prooflab command line: experiment orchestration over the library.
//
// Subcommands: gen, sample, train, search, verify, separate, probe.
// Common flags: --config PATH, --seed U64, --out DIR, --trials N.
// Exit codes: 0 success, 1 usage error, 2 invariant-suite violation.
// Thread count is controlled only by OMP_NUM_THREADS.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "prooflab/config.hpp"
#include "prooflab/experiments.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  long long trials = 0;
  bool trials_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Config file (key = value lines)");
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--seed", flags.seed, "Master seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--trials", flags.trials, "Trial count")->each([&](const std::string&) {
    flags.trials_set = true;
  });
}

int run(const std::string& experiment, const CommonFlags& flags) {
  prooflab::Config cfg;
  if (!flags.config_path.empty()) cfg = prooflab::Config::load(flags.config_path);
  // The subcommand names the default experiment; an explicit config key wins,
  // which is how the sampler-exactness and estimate-params suites are reached
  // (they run under `verify`).
  if (!cfg.has("experiment")) cfg.set("experiment", experiment);
  if (flags.seed_set) cfg.set("seed", std::to_string(flags.seed));
  if (flags.trials_set) cfg.set("trials", std::to_string(flags.trials));
  if (!flags.out_dir.empty()) cfg.set("out", flags.out_dir);

  prooflab::ExperimentResult result = prooflab::run_experiment(cfg);
  std::string out = cfg.get_string("out", "prooflab-out");
  prooflab::write_result(result, out);
  std::cout << cfg.get_string("experiment", experiment) << ": wrote "
            << result.csv_files.size() << " file(s) to " << out
            << (result.exit_code == 0 ? "" : "  [VIOLATIONS]") << "\n";
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prooflab: synthetic proof-distribution laboratory"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* experiment;
    const char* help;
  };
  const Sub subs[] = {
      {"gen", "gen", "Sample proof DAGs; write DAG files and depth statistics"},
      {"sample", "sample", "Emit traces (reference, q-labeled, Doob or SMC)"},
      {"train", "train", "Fit a tabular policy by ERM on labeled traces"},
      {"search", "search", "Top-k backtracking search report over seeded instances"},
      {"verify", "verify-bounds", "Run the invariant suites (margin, Bellman, ELBO, risk)"},
      {"separate", "separation", "Flat vs hierarchical sample-complexity separation"},
      {"probe", "generalization-probe", "Excess-risk decay of ERM over a sample-size grid"},
  };

  CommonFlags flags[std::size(subs)];
  std::string chosen;
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmd, flags[i]);
    cmd->callback([&, i] { chosen = subs[i].name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // every command-line problem is a usage error
  }

  try {
    for (std::size_t i = 0; i < std::size(subs); ++i) {
      if (chosen == subs[i].name) return run(subs[i].experiment, flags[i]);
    }
  } catch (const prooflab::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
