#include "dsgd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dsgd/engine.hpp"
#include "dsgd/errors.hpp"

namespace dsgd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct SeedStats {
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> values;
};

SeedStats stats(std::vector<double> values) {
  SeedStats s;
  s.values = std::move(values);
  const std::size_t n = s.values.size();
  if (n == 0) return s;
  double sum = 0.0;
  for (double v : s.values) sum += v;
  s.mean = sum / n;
  if (n > 1) {
    double var = 0.0;
    for (double v : s.values) var += (v - s.mean) * (v - s.mean);
    var /= (n - 1);
    s.se = std::sqrt(var / n);
  }
  return s;
}

json stats_json(const SeedStats& s) {
  json j;
  j["mean"] = s.mean;
  j["se"] = s.se;
  j["per_seed"] = s.values;
  return j;
}

double final_consensus(const TrainState& state) {
  const std::vector<double> avg = state.average_column();
  double m = 0.0;
  for (int i = 0; i < state.nodes; ++i) {
    const auto col = state.column(i);
    for (int c = 0; c < state.dim; ++c) {
      const double d = avg[c] - col[c];
      m += d * d;
    }
  }
  return m / state.nodes;
}

struct SeedResult {
  std::uint64_t seed;
  bool failed = false;
  long long error_iteration = -1;
  int error_node = -1;
  std::string error;
  double final_loss = 0.0;
  double final_running_eps = 0.0;
  double final_consensus_m = 0.0;
  double gamma_initial = 0.0;
  double iteration_time_s = 0.0;
  std::vector<std::pair<long long, double>> loss_curve;  // (k, loss)
};

SeedResult run_one_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir) {
  MaterializedRun run = materialize(config, seed);
  SeedResult r;
  r.seed = seed;
  RunOutcome outcome = run_training_checked(run.spec);
  write_trace_csv(outcome.trace, (dir / ("trace_seed" + std::to_string(seed) + ".csv")).string());
  r.gamma_initial = outcome.trace.gamma_initial;
  r.iteration_time_s = outcome.trace.iteration_time_s;
  if (outcome.failed) {
    r.failed = true;
    r.error_iteration = outcome.error_iteration;
    r.error_node = outcome.error_node;
    r.error = outcome.error;
    return r;
  }
  r.final_loss = run.problem->loss(outcome.trace.final_model);
  r.final_running_eps =
      outcome.trace.records.empty() ? 0.0 : outcome.trace.records.back().running_eps;
  r.final_consensus_m = final_consensus(outcome.trace.final_state);
  r.loss_curve.reserve(outcome.trace.records.size());
  for (const auto& rec : outcome.trace.records) r.loss_curve.emplace_back(rec.k, rec.loss_avg);
  return r;
}

/// First k where the seed-mean loss curve crosses the threshold from above.
std::optional<long long> iterations_to_threshold(const std::vector<SeedResult>& seeds,
                                                 double threshold) {
  if (seeds.empty() || seeds.front().loss_curve.empty()) return std::nullopt;
  const std::size_t len = seeds.front().loss_curve.size();
  for (const auto& s : seeds)
    if (s.loss_curve.size() != len) return std::nullopt;
  for (std::size_t t = 0; t < len; ++t) {
    double mean = 0.0;
    for (const auto& s : seeds) mean += s.loss_curve[t].second;
    mean /= seeds.size();
    if (mean <= threshold) return seeds.front().loss_curve[t].first;
  }
  return std::nullopt;
}

json summarize_seeds(const RunConfig& config, const std::vector<SeedResult>& results) {
  std::vector<double> losses, epss, cons;
  for (const auto& r : results) {
    losses.push_back(r.final_loss);
    epss.push_back(r.final_running_eps);
    cons.push_back(r.final_consensus_m);
  }
  json summary;
  summary["iterations"] = config.iterations;
  summary["seeds"] = config.seeds;
  summary["final_loss"] = stats_json(stats(std::move(losses)));
  summary["final_running_eps"] = stats_json(stats(std::move(epss)));
  summary["final_consensus_m"] = stats_json(stats(std::move(cons)));
  if (config.loss_threshold) {
    summary["loss_threshold"] = *config.loss_threshold;
    const auto it = iterations_to_threshold(results, *config.loss_threshold);
    summary["iterations_to_threshold"] = it ? json(*it) : json(nullptr);
  }
  return summary;
}

json resolved_json(const RunConfig& config, const std::vector<SeedResult>& results) {
  json r;
  if (!results.empty()) {
    r["gamma_initial"] = results.front().gamma_initial;
    r["iteration_time_s"] = results.front().iteration_time_s;
  }
  r["order"] = config.order;
  r["overlap"] = config.overlap;
  r["parallel_gradients"] = config.parallel_gradients;
  r["metric_every"] = config.metric_every;
  r["start_override"] = config.start_override ? json(*config.start_override) : json(nullptr);
  r["output_model"] = "average";  // column average of the final iterates
  if (config.algorithm == "eamsgd") {
    const int nodes = build_topology(config.topology).size();
    r["eamsgd_alpha"] = eamsgd_alpha_from_beta(config.eamsgd.beta, nodes);
    r["eamsgd_tau"] = config.eamsgd.tau;
  }
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

RunConfig apply_overrides(RunConfig config, const CommandOverrides& overrides) {
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
  if (overrides.seeds) {
    if (overrides.seeds->empty()) throw ConfigError("seeds override must be nonempty");
    config.seeds = *overrides.seeds;
  }
  return config;
}

int train_into(const RunConfig& config, const fs::path& dir, std::ostream& out, bool quiet,
               json* summary_out) {
  fs::create_directories(dir);

  if (config.export_dataset && config.problem.family == "logistic") {
    MaterializedRun run = materialize(config, config.seeds.front());
    if (auto* logistic = dynamic_cast<const LogisticProblem*>(run.problem.get()))
      logistic->export_csv(*config.export_dataset);
  }

  std::vector<SeedResult> results;
  for (std::uint64_t seed : config.seeds) {
    results.push_back(run_one_seed(config, seed, dir));
    const SeedResult& r = results.back();
    if (r.failed) {
      json meta;
      meta["config"] = json::parse(serialize_config(config));
      meta["resolved"] = resolved_json(config, results);
      meta["error"] = {{"seed", r.seed},
                       {"iteration", r.error_iteration},
                       {"node", r.error_node},
                       {"what", r.error}};
      write_text(dir / "run_meta.json", meta.dump(2) + "\n");
      if (!quiet)
        out << "numeric failure (seed " << r.seed << ", iteration " << r.error_iteration
            << ", node " << r.error_node << "): " << r.error << "\n";
      return exit_numeric_error;
    }
  }

  json summary = summarize_seeds(config, results);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  json meta;
  meta["config"] = json::parse(serialize_config(config));
  meta["resolved"] = resolved_json(config, results);
  write_text(dir / "run_meta.json", meta.dump(2) + "\n");
  if (summary_out) *summary_out = std::move(summary);
  if (!quiet)
    out << "wrote " << results.size() << " trace(s) to " << dir.string() << "\n";
  return exit_ok;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int cmd_train(const std::string& config_path, const CommandOverrides& overrides,
              std::ostream& out, std::ostream& err) {
  try {
    const RunConfig config = apply_overrides(load_config(config_path), overrides);
    return train_into(config, config.out_dir, out, overrides.quiet, nullptr);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_numeric_error;
  }
}

namespace {

struct SweepCell {
  RunConfig config;           // fully overridden per-cell config
  std::string key;            // canonical sort key
  std::string status = "ok";
  std::string bound_status = "n/a";
  double gamma_resolved = 0.0;
  json summary;
};

std::string cell_dir_name(const std::string& key) {
  std::string name = key;
  for (char& ch : name) {
    if (ch == '=' ) ch = '-';
    if (ch == ',') ch = '_';
  }
  return name;
}

/// Bound-validity annotation for decentralized cells with exact constants:
/// a step size outside the region where the closed-form bounds evaluate is
/// reported, the cell itself still runs.
void annotate_bound_status(SweepCell& cell) {
  if (cell.config.iterations < 1) return;
  MaterializedRun run = materialize(cell.config, cell.config.seeds.front());
  cell.gamma_resolved =
      run.spec.stepsize.initial(*run.problem, cell.config.iterations, run.topology->size());
  if (cell.config.algorithm != "dpsgd") return;
  const auto sigma_sq = run.problem->sigma_sq();
  if (!sigma_sq) return;  // no exact constants, nothing to check
  const double rho = run.topology->rho();
  if (!(rho < 1.0)) return;  // non-mixing topology: bounds do not apply
  TheoryInputs in;
  in.lipschitz = run.problem->lipschitz();
  in.sigma_sq = *sigma_sq;
  in.zeta_sq = run.problem->zeta_sq().value_or(0.0);
  in.rho = rho;
  in.nodes = run.topology->size();
  in.iterations = cell.config.iterations;
  in.gamma = cell.gamma_resolved;
  const auto fs = run.problem->f_star();
  std::vector<double> zero(run.problem->dim(), 0.0);
  in.f0_minus_fstar = fs ? std::max(0.0, run.problem->loss(zero) - *fs) : 0.0;
  try {
    bound_constants(in);
    cell.bound_status = "ok";
  } catch (const StepSizeTooLarge&) {
    cell.bound_status = "step_size_too_large";
  }
}

}  // namespace

int cmd_sweep(const std::string& config_path, const CommandOverrides& overrides,
              std::ostream& out, std::ostream& err) {
  try {
    const RunConfig base = apply_overrides(load_config(config_path), overrides);
    if (!base.sweep) throw ConfigError("sweep command needs a sweep section in the config");
    SweepAxes axes = *base.sweep;
    if (axes.empty()) throw ConfigError("sweep axes are empty");
    if (axes.nodes.empty()) axes.nodes = {base.topology.n};
    if (axes.algorithms.empty()) axes.algorithms = {base.algorithm};
    if (axes.gammas.empty()) axes.gammas = {base.gamma};
    if (axes.topologies.empty()) axes.topologies = {base.topology.kind};
    if (axes.bandwidths.empty())
      axes.bandwidths = {base.network ? base.network->bandwidth : NetworkModel{}.bandwidth};
    if (axes.latencies.empty())
      axes.latencies = {base.network ? base.network->latency : NetworkModel{}.latency};

    std::vector<SweepCell> cells;
    for (int n : axes.nodes)
      for (const auto& alg : axes.algorithms)
        for (double gamma : axes.gammas)
          for (const auto& topo : axes.topologies)
            for (double bw : axes.bandwidths)
              for (double lat : axes.latencies) {
                SweepCell cell;
                cell.config = base;
                cell.config.sweep.reset();
                cell.config.topology.kind = topo;
                cell.config.topology.n = n;
                cell.config.algorithm = alg;
                cell.config.gamma = gamma;
                if (!cell.config.network) cell.config.network = NetworkModel{};
                cell.config.network->bandwidth = bw;
                cell.config.network->latency = lat;
                char key[256];
                std::snprintf(key, sizeof key, "alg=%s,bw=%g,gamma=%g,lat=%g,n=%04d,topo=%s",
                              alg.c_str(), bw, gamma, lat, n, topo.c_str());
                cell.key = key;
                cells.push_back(std::move(cell));
              }
    std::sort(cells.begin(), cells.end(),
              [](const SweepCell& a, const SweepCell& b) { return a.key < b.key; });

    const fs::path root = base.out_dir;
    fs::create_directories(root / "cells");
    for (auto& cell : cells) {
      try {
        annotate_bound_status(cell);
      } catch (const std::exception& e) {
        cell.status = std::string("config_error: ") + e.what();
      }
      if (cell.status != "ok") continue;
      const fs::path dir = root / "cells" / cell_dir_name(cell.key);
      cell.config.out_dir = dir.string();
      try {
        const int rc = train_into(cell.config, dir, out, /*quiet=*/true, &cell.summary);
        if (rc == exit_numeric_error) cell.status = "numeric_error";
      } catch (const std::invalid_argument& e) {
        cell.status = std::string("config_error: ") + e.what();
      }
    }

    std::ostringstream csv;
    csv << "n,algorithm,gamma,topology,bandwidth,latency,status,bound_status,final_loss_mean,"
           "final_loss_se,final_running_eps_mean,final_consensus_mean,iterations_to_threshold\n";
    for (const auto& cell : cells) {
      csv << cell.config.topology.n << ',' << cell.config.algorithm << ','
          << format_double(cell.gamma_resolved > 0.0 ? cell.gamma_resolved : cell.config.gamma)
          << ',' << cell.config.topology.kind << ','
          << format_double(cell.config.network->bandwidth) << ','
          << format_double(cell.config.network->latency) << ',' << cell.status << ','
          << cell.bound_status << ',';
      if (cell.status == "ok") {
        csv << format_double(cell.summary["final_loss"]["mean"].get<double>()) << ','
            << format_double(cell.summary["final_loss"]["se"].get<double>()) << ','
            << format_double(cell.summary["final_running_eps"]["mean"].get<double>()) << ','
            << format_double(cell.summary["final_consensus_m"]["mean"].get<double>()) << ',';
        if (cell.summary.contains("iterations_to_threshold") &&
            !cell.summary["iterations_to_threshold"].is_null())
          csv << cell.summary["iterations_to_threshold"].get<long long>();
      } else {
        csv << ",,,,";
      }
      csv << '\n';
    }
    write_text(root / "sweep.csv", csv.str());

    json meta;
    meta["config"] = json::parse(serialize_config(base));
    write_text(root / "run_meta.json", meta.dump(2) + "\n");
    if (!overrides.quiet)
      out << "wrote " << cells.size() << " sweep cell(s) to " << (root / "sweep.csv").string()
          << "\n";
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_numeric_error;
  }
}

int cmd_spectrum(const SpectrumOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const WeightMatrix w = build_topology(options.topology);
    const auto& eig = w.eigenvalues();
    out << "n = " << w.size() << "\n";
    out << "lambda_max = " << format_double(eig.front()) << "\n";
    if (w.size() > 1) out << "lambda_2 = " << format_double(eig[1]) << "\n";
    out << "lambda_min = " << format_double(eig.back()) << "\n";
    out << "rho = " << format_double(w.rho()) << "\n";
    out << "1 - sqrt(rho) = " << format_double(1.0 - std::sqrt(w.rho())) << "\n";
    if (auto warning = w.spectral_warning())
      out << "warning: mixing assumption violated: " << *warning << "\n";

    bool decay_ok = true;
    for (int i = 0; i < w.size() && decay_ok; ++i) {
      const auto curve = mixing_decay_curve(w, options.decay_k_max, i);
      for (const auto& point : curve)
        if (point.lhs > point.bound + 1e-12) {
          decay_ok = false;
          break;
        }
    }
    out << "mixing decay check (k <= " << options.decay_k_max << "): "
        << (decay_ok ? "PASS" : "FAIL") << "\n";

    if (!options.ring_fit.empty()) {
      const RingRhoFit fit = ring_rho_asymptotic_fit(options.ring_fit);
      out << "ring asymptote fit: (1 - rho) * n^2 ~ c\n";
      out << "  fitted c = " << format_double(fit.fitted_c) << "\n";
      out << "  taylor c (8*pi^2/3) = " << format_double(fit.taylor_c) << "\n";
      out << "  doubled taylor c (16*pi^2/3) = " << format_double(fit.doubled_taylor_c) << "\n";
    }
    return exit_ok;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_numeric_error;
  }
}

int cmd_bounds(const BoundsOptions& options, std::ostream& out, std::ostream& err) {
  try {
    TheoryInputs in = options.inputs;
    const double sigma = std::sqrt(in.sigma_sq);
    if (options.tuned_gamma)
      in.gamma = tuned_stepsize(in.lipschitz, sigma, in.iterations, in.nodes);
    validate_inputs(in);

    std::vector<std::pair<std::string, std::string>> rows;
    rows.emplace_back("gamma", format_double(in.gamma));
    try {
      const BoundConstants c = bound_constants(in);
      rows.emplace_back("d1", format_double(c.d1));
      rows.emplace_back("d2", format_double(c.d2));
      rows.emplace_back("rate_bound", format_double(convergence_bound(in)));
    } catch (const StepSizeTooLarge& e) {
      rows.emplace_back("d1", "step_size_too_large");
      rows.emplace_back("d2", "step_size_too_large");
      rows.emplace_back("rate_bound",
                        "step_size_too_large (gamma_max = " + format_double(e.gamma_max) + ")");
    }
    rows.emplace_back("tuned_rate_bound",
                      format_double(tuned_convergence_bound(in.lipschitz, sigma, in.iterations,
                                                            in.nodes, in.f0_minus_fstar)));
    try {
      const IterationThresholds t = min_iterations_for_tuned_rate(
          in.lipschitz, sigma, std::sqrt(in.zeta_sq), in.rho, in.nodes, in.f0_minus_fstar);
      rows.emplace_back("k_min_noise_dominance", format_double(t.noise_dominance));
      rows.emplace_back("k_min_step_validity", format_double(t.step_validity));
    } catch (const NotApplicable&) {
      rows.emplace_back("k_min_noise_dominance", "not_applicable (zero gradient noise)");
      rows.emplace_back("k_min_step_validity", "not_applicable (zero gradient noise)");
    }
    try {
      rows.emplace_back("consensus_bound", format_double(consensus_bound(in)));
    } catch (const StepSizeTooLarge& e) {
      rows.emplace_back("consensus_bound",
                        "step_size_too_large (gamma_max = " + format_double(e.gamma_max) + ")");
    }

    out << "inputs: L=" << format_double(in.lipschitz) << " sigma_sq=" << format_double(in.sigma_sq)
        << " zeta_sq=" << format_double(in.zeta_sq) << " rho=" << format_double(in.rho)
        << " n=" << in.nodes << " K=" << in.iterations
        << " f0_minus_fstar=" << format_double(in.f0_minus_fstar) << "\n";
    for (const auto& [name, value] : rows) out << name << " = " << value << "\n";

    if (options.csv_path) {
      std::ostringstream csv;
      csv << "name,value\n";
      for (const auto& [name, value] : rows) csv << name << ',' << value << '\n';
      write_text(*options.csv_path, csv.str());
    }
    return exit_ok;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_numeric_error;
  }
}

int cmd_commcost(const CommcostOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (options.bandwidths.empty() || options.latencies.empty())
      throw std::invalid_argument("commcost: bandwidth and latency ranges must be nonempty");
    const CrossoverReport report =
        crossover_report(options.base, options.bandwidths, options.latencies, options.nodes);
    const std::string csv = crossover_csv(report);
    if (options.out_path)
      write_text(*options.out_path, csv);
    else
      out << csv;
    for (const auto& flag : report.flags) {
      if (flag.decentralized_5x)
        out << "# decentralized >= 5x faster than best centralized at bandwidth="
            << format_double(flag.bandwidth) << " latency=" << format_double(flag.latency) << "\n";
      if (flag.all_within_20pct)
        out << "# all patterns within 20% of compute time at bandwidth="
            << format_double(flag.bandwidth) << " latency=" << format_double(flag.latency) << "\n";
    }
    return exit_ok;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_numeric_error;
  }
}

}  // namespace dsgd
