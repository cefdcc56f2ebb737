#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prooflab/config.hpp"
#include "prooflab/dag.hpp"
#include "prooflab/parallel.hpp"

namespace prooflab {

inline constexpr const char* kVersion = "prooflab 0.1.0";

// Outcome of one experiment run. CSV bodies are deterministic functions of
// (config, seed); wall-clock information lives only in the JSON summary.
struct ExperimentResult {
  int exit_code = 0;  // 0 ok, 2 invariant violation
  std::vector<std::pair<std::string, std::string>> csv_files;  // filename -> body
  std::string json_summary;
};

// Dispatches on the `experiment` key: verify-bounds, sampler-exactness,
// estimate-params, generalization-probe, separation, gen, sample, train,
// search. Unknown names or unknown config keys raise ParseError.
ExperimentResult run_experiment(const Config& cfg);

ExperimentResult run_verify_bounds(const Config& cfg);
ExperimentResult run_sampler_exactness(const Config& cfg);
ExperimentResult run_estimate_params(const Config& cfg);
ExperimentResult run_generalization_probe(const Config& cfg);
ExperimentResult run_separation(const Config& cfg);
ExperimentResult run_gen(const Config& cfg);
ExperimentResult run_sample(const Config& cfg);
ExperimentResult run_train(const Config& cfg);
ExperimentResult run_search_report(const Config& cfg);

// Creates `out_dir` and writes every CSV plus summary.json.
void write_result(const ExperimentResult& result, const std::string& out_dir);

// GenParams block from `gen.*` keys (defaults where absent).
GenParams gen_params_from_config(const Config& cfg);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};
WilsonInterval wilson_interval(long long wins, long long trials, double z = 1.96);

ExecMode exec_mode_from_config(const Config& cfg);

}  // namespace prooflab
