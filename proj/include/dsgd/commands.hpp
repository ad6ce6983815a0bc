#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dsgd/config.hpp"
#include "dsgd/theory.hpp"

namespace dsgd {

/// Stable exit codes shared by every subcommand.
enum ExitCode : int { exit_ok = 0, exit_config_error = 1, exit_numeric_error = 2 };

struct CommandOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  bool quiet = false;
};

/// Runs every seed of the config, writing per-seed traces
/// (trace_seed<S>.csv), run_meta.json and summary.json under the output
/// directory. Partial traces are flushed when a run aborts on a numeric
/// failure (exit code 2).
int cmd_train(const std::string& config_path, const CommandOverrides& overrides,
              std::ostream& out, std::ostream& err);

/// Cross-product sweep over the config's axes; one summary row per cell in
/// sweep.csv, rows sorted by a canonical key. A cell whose step size falls
/// outside the bound-validity region reports step_size_too_large; other cells
/// are unaffected.
int cmd_sweep(const std::string& config_path, const CommandOverrides& overrides,
              std::ostream& out, std::ostream& err);

struct SpectrumOptions {
  TopologySpec topology;
  int decay_k_max = 100;           // mixing-decay check horizon
  std::vector<int> ring_fit;       // when nonempty: ring asymptote fit over these n
};
int cmd_spectrum(const SpectrumOptions& options, std::ostream& out, std::ostream& err);

struct BoundsOptions {
  TheoryInputs inputs;
  bool tuned_gamma = false;             // derive gamma from (L, sigma, K, n)
  std::optional<std::string> csv_path;  // also emit name,value rows
};
int cmd_bounds(const BoundsOptions& options, std::ostream& out, std::ostream& err);

struct CommcostOptions {
  NetworkModel base;
  int nodes = 2;
  std::vector<double> bandwidths;
  std::vector<double> latencies;
  std::optional<std::string> out_path;  // CSV destination; stdout when absent
};
int cmd_commcost(const CommcostOptions& options, std::ostream& out, std::ostream& err);

}  // namespace dsgd
