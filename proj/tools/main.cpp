#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsgd/commands.hpp"

namespace {

dsgd::CommandOverrides make_overrides(const std::string& out_dir,
                                      const std::vector<std::uint64_t>& seeds, bool quiet) {
  dsgd::CommandOverrides o;
  if (!out_dir.empty()) o.out_dir = out_dir;
  if (!seeds.empty()) o.seeds = seeds;
  o.quiet = quiet;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and analysis toolkit for decentralized and centralized parallel SGD"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::uint64_t> seeds;
  bool quiet = false;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
    cmd->add_option("--seeds", seeds, "seed list (overrides config)")->delimiter(',');
    cmd->add_flag("--quiet", quiet, "suppress progress output");
  };

  CLI::App* train = app.add_subcommand("train", "run every seed of a config, write traces");
  add_run_flags(train);
  CLI::App* sweep = app.add_subcommand("sweep", "cross-product sweep with one row per cell");
  add_run_flags(sweep);

  CLI::App* spectrum = app.add_subcommand("spectrum", "spectral report for a topology");
  std::string topo_kind = "ring", matrix_path;
  int topo_n = 8, k_max = 100;
  std::vector<int> ring_fit;
  spectrum->add_option("--topology", topo_kind, "ring | complete | identity");
  spectrum->add_option("--n", topo_n, "node count");
  spectrum->add_option("--matrix", matrix_path, "plain-text matrix file");
  spectrum->add_option("--k-max", k_max, "mixing-decay check horizon");
  spectrum->add_option("--ring-fit", ring_fit, "fit (1-rho)n^2 over these ring sizes")
      ->delimiter(',');

  CLI::App* bounds = app.add_subcommand("bounds", "closed-form bound table for given inputs");
  dsgd::TheoryInputs inputs;
  bool tuned = false;
  std::string bounds_csv, bounds_topo;
  bounds->add_option("--L", inputs.lipschitz, "smoothness constant");
  bounds->add_option("--sigma-sq", inputs.sigma_sq, "gradient noise variance");
  bounds->add_option("--zeta-sq", inputs.zeta_sq, "cross-node heterogeneity");
  bounds->add_option("--rho", inputs.rho, "spectral-gap quantity");
  bounds->add_option("--topology", bounds_topo, "derive rho from ring | complete of size --nodes");
  bounds->add_option("--nodes", inputs.nodes, "node count");
  bounds->add_option("--iterations", inputs.iterations, "iteration budget K");
  bounds->add_option("--gamma", inputs.gamma, "step size");
  bounds->add_flag("--tuned", tuned, "use the noise-adapted step size");
  bounds->add_option("--f0-minus-fstar", inputs.f0_minus_fstar, "objective gap at the start");
  bounds->add_option("--csv", bounds_csv, "also write name,value rows to this file");

  CLI::App* commcost = app.add_subcommand("commcost", "crossover grid of the wall-clock model");
  dsgd::CommcostOptions cc;
  std::string cc_out;
  commcost->add_option("--bandwidths", cc.bandwidths, "bytes/s grid")->delimiter(',')->required();
  commcost->add_option("--latencies", cc.latencies, "seconds grid")->delimiter(',')->required();
  commcost->add_option("--msg-size", cc.base.msg_size, "message bytes");
  commcost->add_option("--compute", cc.base.compute_time, "seconds per local gradient");
  commcost->add_option("--n", cc.nodes, "node count");
  commcost->add_option("--deg", cc.base.degree, "decentralized degree");
  commcost->add_option("--tau", cc.base.tau, "easgd exchange period");
  commcost->add_flag("--overlap", cc.base.overlap, "hide decentralized comm under compute");
  commcost->add_option("--out", cc_out, "CSV destination (stdout when absent)");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed())
    return dsgd::cmd_train(config_path, make_overrides(out_dir, seeds, quiet), std::cout,
                           std::cerr);
  if (sweep->parsed())
    return dsgd::cmd_sweep(config_path, make_overrides(out_dir, seeds, quiet), std::cout,
                           std::cerr);
  if (spectrum->parsed()) {
    dsgd::SpectrumOptions opts;
    if (!matrix_path.empty()) {
      opts.topology.kind = "file";
      opts.topology.path = matrix_path;
    } else {
      opts.topology.kind = topo_kind;
      opts.topology.n = topo_n;
    }
    opts.decay_k_max = k_max;
    opts.ring_fit = ring_fit;
    return dsgd::cmd_spectrum(opts, std::cout, std::cerr);
  }
  if (bounds->parsed()) {
    dsgd::BoundsOptions opts;
    if (!bounds_topo.empty()) {
      dsgd::TopologySpec t;
      t.kind = bounds_topo;
      t.n = inputs.nodes;
      inputs.rho = dsgd::build_topology(t).rho();
    }
    opts.inputs = inputs;
    opts.tuned_gamma = tuned;
    if (!bounds_csv.empty()) opts.csv_path = bounds_csv;
    return dsgd::cmd_bounds(opts, std::cout, std::cerr);
  }
  if (commcost->parsed()) {
    if (!cc_out.empty()) cc.out_path = cc_out;
    return dsgd::cmd_commcost(cc, std::cout, std::cerr);
  }
  return 1;
}
