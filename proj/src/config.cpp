#include "dsgd/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dsgd {

using nlohmann::json;

namespace {

Algorithm parse_algorithm(const std::string& s) {
  if (s == "dpsgd") return Algorithm::dpsgd;
  if (s == "cpsgd") return Algorithm::cpsgd;
  if (s == "allreduce") return Algorithm::allreduce;
  if (s == "eamsgd") return Algorithm::eamsgd;
  throw ConfigError("unknown algorithm: " + s);
}

MixOrder parse_order(const std::string& s) {
  if (s == "average_then_update") return MixOrder::average_then_update;
  if (s == "update_then_average") return MixOrder::update_then_average;
  throw ConfigError("unknown order: " + s);
}

DataStrategy parse_strategy(const std::string& s) {
  if (s == "shared") return DataStrategy::shared;
  if (s == "partitioned") return DataStrategy::partitioned;
  throw ConfigError("unknown strategy: " + s);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

json topology_to_json(const TopologySpec& t) {
  json j;
  j["kind"] = t.kind;
  if (t.kind == "file") {
    j["path"] = t.path;
  } else if (t.kind == "custom") {
    j["entries"] = t.entries;
  } else {
    j["n"] = t.n;
  }
  return j;
}

TopologySpec topology_from_json(const json& j) {
  TopologySpec t;
  t.kind = get_or<std::string>(j, "kind", "ring");
  t.n = get_or<int>(j, "n", 1);
  t.path = get_or<std::string>(j, "path", "");
  if (j.contains("entries")) t.entries = j.at("entries").get<std::vector<std::vector<double>>>();
  if (t.kind != "ring" && t.kind != "complete" && t.kind != "identity" && t.kind != "file" &&
      t.kind != "custom")
    throw ConfigError("unknown topology kind: " + t.kind);
  if (t.kind == "file" && t.path.empty()) throw ConfigError("topology file kind needs a path");
  if (t.kind == "custom" && t.entries.empty())
    throw ConfigError("custom topology needs entries");
  return t;
}

json problem_to_json(const ProblemSpec& p) {
  json j;
  j["family"] = p.family;
  j["dim"] = p.dim;
  j["strategy"] = p.strategy;
  if (p.family == "quadratic") {
    j["spread"] = p.spread;
    j["noise_sigma"] = p.noise_sigma;
    j["center"] = p.center;
  } else {
    j["samples_per_node"] = p.samples_per_node;
    j["data_seed"] = p.data_seed;
  }
  return j;
}

ProblemSpec problem_from_json(const json& j) {
  ProblemSpec p;
  p.family = get_or<std::string>(j, "family", "quadratic");
  if (p.family != "quadratic" && p.family != "logistic")
    throw ConfigError("unknown problem family: " + p.family);
  p.dim = get_or<int>(j, "dim", 1);
  p.spread = get_or<double>(j, "spread", 0.0);
  p.noise_sigma = get_or<double>(j, "noise_sigma", 0.0);
  p.center = get_or<double>(j, "center", 0.0);
  p.samples_per_node = get_or<int>(j, "samples_per_node", 100);
  p.data_seed = get_or<std::uint64_t>(j, "data_seed", 1);
  p.strategy = get_or<std::string>(j, "strategy", "partitioned");
  parse_strategy(p.strategy);
  return p;
}

json network_to_json(const NetworkModel& m) {
  json j;
  j["bandwidth"] = m.bandwidth;
  j["latency"] = m.latency;
  j["msg_size"] = m.msg_size;
  j["compute_time"] = m.compute_time;
  return j;
}

NetworkModel network_from_json(const json& j) {
  NetworkModel m;
  m.bandwidth = get_or<double>(j, "bandwidth", m.bandwidth);
  m.latency = get_or<double>(j, "latency", m.latency);
  m.msg_size = get_or<double>(j, "msg_size", m.msg_size);
  m.compute_time = get_or<double>(j, "compute_time", m.compute_time);
  return m;
}

}  // namespace

namespace {
RunConfig parse_config_json(const json& j);
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    return parse_config_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

namespace {
RunConfig parse_config_json(const json& j) {
  RunConfig c;
  c.schema_version = get_or<int>(j, "schema_version", 1);
  if (c.schema_version != 1)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
  c.algorithm = get_or<std::string>(j, "algorithm", "dpsgd");
  parse_algorithm(c.algorithm);
  if (j.contains("topology")) c.topology = topology_from_json(j.at("topology"));
  if (j.contains("problem")) c.problem = problem_from_json(j.at("problem"));
  c.iterations = get_or<long long>(j, "iterations", 0);
  if (c.iterations < 0) throw ConfigError("iterations must be >= 0");

  if (j.contains("stepsize")) {
    const json& s = j.at("stepsize");
    c.stepsize_kind = get_or<std::string>(s, "kind", "constant");
    c.gamma = get_or<double>(s, "gamma", 0.1);
    c.drop_at = get_or<long long>(s, "drop_at", -1);
    c.drop_factor = get_or<double>(s, "drop_factor", 10.0);
    if (c.stepsize_kind != "constant" && c.stepsize_kind != "tuned" && c.stepsize_kind != "drop")
      throw ConfigError("unknown stepsize kind: " + c.stepsize_kind);
  }

  if (j.contains("seeds")) {
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("seeds must be nonempty");
  }
  c.batch = get_or<int>(j, "batch", 1);
  if (c.batch < 1) throw ConfigError("batch must be >= 1");
  c.order = get_or<std::string>(j, "order", "average_then_update");
  parse_order(c.order);
  c.overlap = get_or<bool>(j, "overlap", false);
  c.parallel_gradients = get_or<bool>(j, "parallel_gradients", false);
  c.metric_every = get_or<int>(j, "metric_every", c.problem.family == "logistic" ? 10 : 1);
  if (c.metric_every < 1) throw ConfigError("metric_every must be >= 1");
  if (j.contains("loss_threshold")) c.loss_threshold = j.at("loss_threshold").get<double>();
  if (j.contains("start_override")) {
    c.start_override = j.at("start_override").get<std::vector<double>>();
    if (static_cast<int>(c.start_override->size()) != c.problem.dim)
      throw ConfigError("start_override must have problem.dim entries");
  }

  if (j.contains("eamsgd")) {
    const json& e = j.at("eamsgd");
    c.eamsgd.beta = get_or<double>(e, "beta", 0.9);
    c.eamsgd.tau = get_or<int>(e, "tau", 1);
    c.eamsgd.momentum = get_or<double>(e, "momentum", 0.9);
    if (c.eamsgd.tau < 1) throw ConfigError("eamsgd tau must be >= 1");
  }
  if (j.contains("network")) c.network = network_from_json(j.at("network"));
  c.out_dir = get_or<std::string>(j, "out", "out");
  if (j.contains("export_dataset"))
    c.export_dataset = j.at("export_dataset").get<std::string>();

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    SweepAxes axes;
    if (s.contains("nodes")) axes.nodes = s.at("nodes").get<std::vector<int>>();
    if (s.contains("algorithm"))
      axes.algorithms = s.at("algorithm").get<std::vector<std::string>>();
    if (s.contains("gamma")) axes.gammas = s.at("gamma").get<std::vector<double>>();
    if (s.contains("topology"))
      axes.topologies = s.at("topology").get<std::vector<std::string>>();
    if (s.contains("bandwidth")) axes.bandwidths = s.at("bandwidth").get<std::vector<double>>();
    if (s.contains("latency")) axes.latencies = s.at("latency").get<std::vector<double>>();
    if (axes.empty()) throw ConfigError("sweep present but every axis is empty");
    for (const auto& a : axes.algorithms) parse_algorithm(a);
    c.sweep = std::move(axes);
  }

  // cross-field validation
  if (c.topology.kind == "file" && !std::filesystem::exists(c.topology.path))
    throw ConfigError("topology file does not exist: " + c.topology.path);
  return c;
}
}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["algorithm"] = c.algorithm;
  j["topology"] = topology_to_json(c.topology);
  j["problem"] = problem_to_json(c.problem);
  j["iterations"] = c.iterations;
  json s;
  s["kind"] = c.stepsize_kind;
  s["gamma"] = c.gamma;
  if (c.stepsize_kind == "drop") {
    s["drop_at"] = c.drop_at;
    s["drop_factor"] = c.drop_factor;
  }
  j["stepsize"] = s;
  j["seeds"] = c.seeds;
  j["batch"] = c.batch;
  j["order"] = c.order;
  j["overlap"] = c.overlap;
  j["parallel_gradients"] = c.parallel_gradients;
  j["metric_every"] = c.metric_every;
  if (c.loss_threshold) j["loss_threshold"] = *c.loss_threshold;
  if (c.start_override) j["start_override"] = *c.start_override;
  if (c.algorithm == "eamsgd") {
    json e;
    e["beta"] = c.eamsgd.beta;
    e["tau"] = c.eamsgd.tau;
    e["momentum"] = c.eamsgd.momentum;
    j["eamsgd"] = e;
  }
  if (c.network) j["network"] = network_to_json(*c.network);
  j["out"] = c.out_dir;
  if (c.export_dataset) j["export_dataset"] = *c.export_dataset;
  if (c.sweep) {
    json s2;
    if (!c.sweep->nodes.empty()) s2["nodes"] = c.sweep->nodes;
    if (!c.sweep->algorithms.empty()) s2["algorithm"] = c.sweep->algorithms;
    if (!c.sweep->gammas.empty()) s2["gamma"] = c.sweep->gammas;
    if (!c.sweep->topologies.empty()) s2["topology"] = c.sweep->topologies;
    if (!c.sweep->bandwidths.empty()) s2["bandwidth"] = c.sweep->bandwidths;
    if (!c.sweep->latencies.empty()) s2["latency"] = c.sweep->latencies;
    j["sweep"] = s2;
  }
  return j.dump(2);
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

WeightMatrix build_topology(const TopologySpec& t) {
  if (t.kind == "ring") return WeightMatrix::ring(t.n);
  if (t.kind == "complete") return WeightMatrix::complete(t.n);
  if (t.kind == "identity") return WeightMatrix::identity(t.n);
  if (t.kind == "file") return WeightMatrix::load_text(t.path);
  if (t.kind == "custom") return WeightMatrix::from_entries(t.entries);
  throw ConfigError("unknown topology kind: " + t.kind);
}

std::unique_ptr<Problem> build_problem(const ProblemSpec& p, int nodes) {
  const DataStrategy strategy = parse_strategy(p.strategy);
  if (p.family == "quadratic")
    return std::make_unique<QuadraticProblem>(p.dim, nodes, p.spread, p.noise_sigma, strategy,
                                              p.center);
  return std::make_unique<LogisticProblem>(p.samples_per_node, p.dim, nodes, p.data_seed,
                                           strategy);
}

MaterializedRun materialize(const RunConfig& c, std::uint64_t seed) {
  MaterializedRun run;
  run.topology = build_topology(c.topology);
  const int nodes = run.topology->size();
  run.problem = build_problem(c.problem, nodes);

  RunSpec& spec = run.spec;
  spec.algorithm = parse_algorithm(c.algorithm);
  spec.topology = run.topology;
  spec.problem = run.problem.get();
  spec.iterations = c.iterations;
  if (c.stepsize_kind == "constant") spec.stepsize.kind = StepsizeSchedule::Kind::constant;
  if (c.stepsize_kind == "tuned") spec.stepsize.kind = StepsizeSchedule::Kind::tuned;
  if (c.stepsize_kind == "drop") spec.stepsize.kind = StepsizeSchedule::Kind::drop;
  spec.stepsize.gamma = c.gamma;
  spec.stepsize.drop_at = c.drop_at;
  spec.stepsize.drop_factor = c.drop_factor;
  spec.seed = seed;
  spec.batch = c.batch;
  spec.order = parse_order(c.order);
  spec.overlap = c.overlap;
  spec.metric_every = c.metric_every;
  spec.parallel_gradients = c.parallel_gradients;
  spec.start_override = c.start_override;
  spec.network = c.network;
  spec.eamsgd = c.eamsgd;
  return run;
}

}  // namespace dsgd
