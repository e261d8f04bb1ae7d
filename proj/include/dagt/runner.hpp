#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dagt/algorithms.hpp"
#include "dagt/errors.hpp"
#include "dagt/metrics.hpp"
#include "dagt/problems.hpp"
#include "dagt/theory.hpp"
#include "dagt/topology.hpp"

namespace dagt {

struct GraphConfig {
  std::string type = "erdos_renyi";  // erdos_renyi | path | complete
  int n = 16;
  double p = 0.7;
  std::uint64_t seed = 1;
};

struct ProblemConfig {
  std::string type = "huber";  // huber | quadratic | logistic_gm
  int d = 10;
  double varsigma = 1.0;
  TruncGaussianSpec noise;
  double sigma = 0.0;  // quadratic gradient noise
  double eig_min = 0.05;
  double eig_max = 1.0;
  double heterogeneity = 1.0;
  std::string dataset;
  int classes = 0;  // 0 = infer from labels
};

struct AlgoConfig {
  std::string id;
  AlgoParams params;
};

struct RunConfig {
  long iterations = 1000;
  std::vector<std::uint64_t> seeds = {1};
  int batch_size = 32;
  int snapshot_cadence = 0;
};

struct OutputConfig {
  std::string directory = "out";
  bool emit_summary = true;
};

struct ExperimentConfig {
  GraphConfig graph;
  ProblemConfig problem;
  std::vector<AlgoConfig> algorithms;
  RunConfig run;
  OutputConfig output;
  double omega = 1.0;
  std::string digest;  // content hash of the canonical config text
};

namespace detail {

inline std::string hash_digest(const std::string& text) {
  std::uint64_t h = fnv1a64(text);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline void expect_keys(const nlohmann::json& obj, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw ParseError("config: '" + where + "' must be an object");
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ParseError("config: unknown key '" + where + "." + item.key() +
                       "'");
    }
  }
}

template <typename T>
T fetch(const nlohmann::json& obj, const std::string& where, const char* key,
        T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config: bad value for '" + where + "." + key +
                     "': " + e.what());
  }
}

template <typename T>
T require(const nlohmann::json& obj, const std::string& where,
          const char* key) {
  if (!obj.contains(key)) {
    throw ParseError("config: missing required key '" + where + "." + key +
                     "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config: bad value for '" + where + "." + key +
                     "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config_json(const nlohmann::json& root) {
  detail::expect_keys(root, "",
                      {"graph", "problem", "algorithms", "run", "output",
                       "omega"});
  ExperimentConfig cfg;
  cfg.digest = detail::hash_digest(root.dump());

  const auto& graph = root.contains("graph") ? root.at("graph")
                                             : nlohmann::json::object();
  detail::expect_keys(graph, "graph", {"type", "n", "p", "seed"});
  cfg.graph.type = detail::fetch<std::string>(graph, "graph", "type",
                                              cfg.graph.type);
  cfg.graph.n = detail::fetch<int>(graph, "graph", "n", cfg.graph.n);
  cfg.graph.p = detail::fetch<double>(graph, "graph", "p", cfg.graph.p);
  cfg.graph.seed = detail::fetch<std::uint64_t>(graph, "graph", "seed",
                                                cfg.graph.seed);
  if (cfg.graph.type != "erdos_renyi" && cfg.graph.type != "path" &&
      cfg.graph.type != "complete") {
    throw ValidationError("config: graph.type must be erdos_renyi, path or "
                          "complete");
  }
  if (cfg.graph.n < 1) throw ValidationError("config: graph.n must be >= 1");

  if (!root.contains("problem")) {
    throw ParseError("config: missing required key 'problem'");
  }
  const auto& problem = root.at("problem");
  detail::expect_keys(problem, "problem",
                      {"type", "d", "varsigma", "noise", "sigma", "eig_min",
                       "eig_max", "heterogeneity", "dataset", "classes"});
  cfg.problem.type = detail::require<std::string>(problem, "problem", "type");
  if (cfg.problem.type == "huber") {
    cfg.problem.d = detail::require<int>(problem, "problem", "d");
    cfg.problem.varsigma = detail::fetch<double>(problem, "problem",
                                                 "varsigma", 1.0);
    if (problem.contains("noise")) {
      const auto& noise = problem.at("noise");
      detail::expect_keys(noise, "problem.noise", {"variance", "threshold"});
      cfg.problem.noise.variance = detail::fetch<double>(
          noise, "problem.noise", "variance", cfg.problem.noise.variance);
      cfg.problem.noise.threshold = detail::fetch<double>(
          noise, "problem.noise", "threshold", cfg.problem.noise.threshold);
    }
    if (!(cfg.problem.varsigma > 0.0)) {
      throw ValidationError("config: problem.varsigma must be > 0");
    }
    if (!(cfg.problem.noise.variance >= 0.0) ||
        !(cfg.problem.noise.threshold > 0.0)) {
      throw ValidationError(
          "config: noise needs variance >= 0 and threshold > 0");
    }
  } else if (cfg.problem.type == "quadratic") {
    cfg.problem.d = detail::require<int>(problem, "problem", "d");
    cfg.problem.sigma = detail::fetch<double>(problem, "problem", "sigma", 0.0);
    cfg.problem.eig_min = detail::fetch<double>(problem, "problem", "eig_min",
                                                cfg.problem.eig_min);
    cfg.problem.eig_max = detail::fetch<double>(problem, "problem", "eig_max",
                                                cfg.problem.eig_max);
    cfg.problem.heterogeneity = detail::fetch<double>(
        problem, "problem", "heterogeneity", cfg.problem.heterogeneity);
    if (!(cfg.problem.sigma >= 0.0)) {
      throw ValidationError("config: problem.sigma must be >= 0");
    }
    if (!(cfg.problem.eig_min > 0.0 &&
          cfg.problem.eig_max >= cfg.problem.eig_min)) {
      throw ValidationError("config: need 0 < eig_min <= eig_max");
    }
  } else if (cfg.problem.type == "logistic_gm") {
    cfg.problem.dataset =
        detail::require<std::string>(problem, "problem", "dataset");
    cfg.problem.classes = detail::fetch<int>(problem, "problem", "classes", 0);
  } else {
    throw ValidationError(
        "config: problem.type must be huber, quadratic or logistic_gm");
  }
  if (cfg.problem.type != "logistic_gm" && cfg.problem.d < 1) {
    throw ValidationError("config: problem.d must be >= 1");
  }

  if (!root.contains("algorithms") || !root.at("algorithms").is_array() ||
      root.at("algorithms").empty()) {
    throw ParseError("config: 'algorithms' must be a nonempty array");
  }
  for (std::size_t k = 0; k < root.at("algorithms").size(); ++k) {
    const auto& entry = root.at("algorithms").at(k);
    const std::string where = "algorithms[" + std::to_string(k) + "]";
    detail::expect_keys(entry, where,
                        {"id", "alpha", "beta1", "beta2", "v_min", "v_max",
                         "clip_init"});
    AlgoConfig algo;
    algo.id = detail::require<std::string>(entry, where, "id");
    method_from_id(algo.id);  // rejects unknown ids
    algo.params.alpha = detail::fetch<double>(entry, where, "alpha",
                                              algo.params.alpha);
    algo.params.beta1 = detail::fetch<double>(entry, where, "beta1",
                                              algo.params.beta1);
    algo.params.beta2 = detail::fetch<double>(entry, where, "beta2",
                                              algo.params.beta2);
    algo.params.v_min = detail::fetch<double>(entry, where, "v_min",
                                              algo.params.v_min);
    algo.params.v_max = detail::fetch<double>(entry, where, "v_max",
                                              algo.params.v_max);
    algo.params.clip_init = detail::fetch<bool>(entry, where, "clip_init",
                                                algo.params.clip_init);
    try {
      algo.params.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("config: " + where + ": " + e.what());
    }
    for (const auto& existing : cfg.algorithms) {
      if (existing.id == algo.id) {
        throw ValidationError("config: duplicate algorithm id '" + algo.id +
                              "'");
      }
    }
    cfg.algorithms.push_back(std::move(algo));
  }

  const auto& run = root.contains("run") ? root.at("run")
                                         : nlohmann::json::object();
  detail::expect_keys(run, "run",
                      {"iterations", "seeds", "batch_size",
                       "snapshot_cadence"});
  cfg.run.iterations = detail::fetch<long>(run, "run", "iterations",
                                           cfg.run.iterations);
  cfg.run.seeds = detail::fetch<std::vector<std::uint64_t>>(run, "run",
                                                            "seeds",
                                                            cfg.run.seeds);
  cfg.run.batch_size = detail::fetch<int>(run, "run", "batch_size",
                                          cfg.run.batch_size);
  cfg.run.snapshot_cadence = detail::fetch<int>(run, "run",
                                                "snapshot_cadence",
                                                cfg.run.snapshot_cadence);
  if (cfg.run.iterations < 0) {
    throw ValidationError("config: run.iterations must be >= 0");
  }
  if (cfg.run.seeds.empty()) {
    throw ValidationError("config: run.seeds must be nonempty");
  }
  if (cfg.run.batch_size < 1) {
    throw ValidationError("config: run.batch_size must be >= 1");
  }
  if (cfg.run.snapshot_cadence < 0) {
    throw ValidationError("config: run.snapshot_cadence must be >= 0");
  }

  const auto& output = root.contains("output") ? root.at("output")
                                               : nlohmann::json::object();
  detail::expect_keys(output, "output", {"directory", "emit_summary"});
  cfg.output.directory = detail::fetch<std::string>(output, "output",
                                                    "directory",
                                                    cfg.output.directory);
  cfg.output.emit_summary = detail::fetch<bool>(output, "output",
                                                "emit_summary",
                                                cfg.output.emit_summary);

  cfg.omega = detail::fetch<double>(root, "", "omega", cfg.omega);
  if (!(cfg.omega > 0.0)) throw ValidationError("config: omega must be > 0");
  return cfg;
}

// Overrides use dotted paths, e.g. run.iterations=500 or
// algorithms.0.alpha=0.02. Values parse as JSON when possible and fall back
// to strings.
inline void apply_override(nlohmann::json& root, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParseError("override '" + spec + "' must look like key=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &root;
  std::size_t start = 0;
  std::vector<std::string> tokens;
  for (;;) {
    std::size_t dot = path.find('.', start);
    tokens.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t k = 0; k + 1 < tokens.size(); ++k) {
    const std::string& tok = tokens[k];
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(tok);
      } catch (...) {
        throw ParseError("override '" + spec + "': '" + tok +
                         "' is not an array index");
      }
      if (index >= node->size()) {
        throw ParseError("override '" + spec + "': index out of range");
      }
      node = &(*node)[index];
    } else {
      node = &(*node)[tok];
    }
  }
  if (node->is_array()) {
    std::size_t index = 0;
    try {
      index = std::stoul(tokens.back());
    } catch (...) {
      throw ParseError("override '" + spec + "': '" + tokens.back() +
                       "' is not an array index");
    }
    if (index >= node->size()) {
      throw ParseError("override '" + spec + "': index out of range");
    }
    (*node)[index] = value;
  } else {
    (*node)[tokens.back()] = value;
  }
}

inline ExperimentConfig parse_config(const std::string& path,
                                     const std::vector<std::string>&
                                         overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  for (const auto& spec : overrides) apply_override(root, spec);
  return parse_config_json(root);
}

inline MixingMatrix build_graph_matrix(const GraphConfig& gc) {
  Graph g;
  if (gc.type == "erdos_renyi") {
    g = generate_erdos_renyi(gc.n, gc.p, gc.seed);
  } else if (gc.type == "path") {
    g = make_path_graph(gc.n);
  } else if (gc.type == "complete") {
    g = make_complete_graph(gc.n);
  } else {
    throw ValidationError("unknown graph type '" + gc.type + "'");
  }
  return metropolis_weights(g);
}

inline std::unique_ptr<Problem> build_problem(const ProblemConfig& pc, int n,
                                              int batch_size,
                                              std::uint64_t run_seed) {
  if (pc.type == "huber") {
    return std::make_unique<HuberRegressionInstance>(
        make_huber_instance(n, pc.d, pc.varsigma, pc.noise, run_seed));
  }
  if (pc.type == "quadratic") {
    return std::make_unique<QuadraticInstance>(
        make_quadratic_instance(n, pc.d, run_seed, pc.eig_min, pc.eig_max,
                                pc.heterogeneity, pc.sigma));
  }
  if (pc.type == "logistic_gm") {
    Dataset data = load_dataset_csv(pc.dataset, pc.classes);
    return std::make_unique<LogisticGMInstance>(partition_even(data, n),
                                                batch_size);
  }
  throw ValidationError("unknown problem type '" + pc.type + "'");
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct AggregateSeries {
  static constexpr std::array<const char*, 7> metric_names = {
      "loss",        "grad_norm_sq", "consensus_x", "consensus_s",
      "consensus_m", "consensus_v",  "gap"};
  struct Stat {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
  };
  std::vector<long> t;
  std::array<std::vector<Stat>, 7> metrics;
};

inline AggregateSeries aggregate_histories(
    const std::vector<RunHistory>& histories) {
  if (histories.empty()) throw ValidationError("nothing to aggregate");
  const std::size_t rows = histories[0].records.size();
  for (const auto& h : histories) {
    if (h.records.size() != rows) {
      throw DimensionMismatch("histories have different lengths");
    }
  }
  AggregateSeries agg;
  agg.t.resize(rows);
  for (auto& col : agg.metrics) col.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    agg.t[r] = histories[0].records[r].t;
    std::array<double, 7> sum{};
    std::array<double, 7> lo{};
    std::array<double, 7> hi{};
    for (std::size_t h = 0; h < histories.size(); ++h) {
      const auto& rec = histories[h].records[r];
      if (rec.t != agg.t[r]) {
        throw DimensionMismatch("histories are not aligned");
      }
      const std::array<double, 7>vals = {
          rec.loss,        rec.grad_norm_sq, rec.consensus_x, rec.consensus_s,
          rec.consensus_m, rec.consensus_v,  rec.gap};
      for (std::size_t c = 0; c < 7; ++c) {
        sum[c] += vals[c];
        if (h == 0 || vals[c] < lo[c]) lo[c] = vals[c];
        if (h == 0 || vals[c] > hi[c]) hi[c] = vals[c];
      }
    }
    for (std::size_t c = 0; c < 7; ++c) {
      agg.metrics[c][r] = {sum[c] / static_cast<double>(histories.size()),
                           lo[c], hi[c]};
    }
  }
  return agg;
}

inline void write_aggregate_csv(const AggregateSeries& agg,
                                const std::string& digest,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# config=" << (digest.empty() ? "none" : digest) << "\n";
  out << "t";
  for (const char* name : AggregateSeries::metric_names) {
    out << "," << name << "_mean," << name << "_min," << name << "_max";
  }
  out << "\n";
  for (std::size_t r = 0; r < agg.t.size(); ++r) {
    out << agg.t[r];
    for (std::size_t c = 0; c < 7; ++c) {
      const auto& stat = agg.metrics[c][r];
      out << "," << format_sci(stat.mean) << "," << format_sci(stat.min)
          << "," << format_sci(stat.max);
    }
    out << "\n";
  }
}

struct RunFailure {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string message;
  bool divergence = false;
};

struct ExperimentResult {
  std::string output_directory;
  std::map<std::string, AggregateSeries> aggregates;
  std::map<std::string, std::vector<RunHistory>> histories;
  std::vector<RunFailure> failures;
  nlohmann::json summary;
  double rho_a = 0.0;
};

// Runs every (algorithm, seed) pair, writes per-run history CSVs, per
// algorithm aggregate CSVs and a summary JSON. A failing pair is recorded
// and does not abort the remaining runs.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.output_directory = cfg.output.directory;
  std::filesystem::create_directories(cfg.output.directory);

  MixingMatrix mix = build_graph_matrix(cfg.graph);
  result.rho_a = mix.rho_a;

  // The logistic instance is data-defined, hence identical across seeds.
  std::unique_ptr<Problem> shared_problem;
  if (cfg.problem.type == "logistic_gm") {
    shared_problem = build_problem(cfg.problem, cfg.graph.n,
                                   cfg.run.batch_size, 0);
  }

  nlohmann::json summary;
  summary["config_digest"] = cfg.digest;
  summary["graph"] = {{"type", cfg.graph.type},
                      {"n", cfg.graph.n},
                      {"rho_a", mix.rho_a}};

  for (const auto& algo : cfg.algorithms) {
    Method method = method_from_id(algo.id);
    std::vector<RunHistory> histories;
    nlohmann::json failures_json = nlohmann::json::array();
    for (std::uint64_t seed : cfg.run.seeds) {
      const Problem* problem = shared_problem.get();
      std::unique_ptr<Problem> owned;
      if (!problem) {
        owned = build_problem(cfg.problem, cfg.graph.n, cfg.run.batch_size,
                              seed);
        problem = owned.get();
      }
      RunOptions options;
      options.snapshot_cadence = cfg.run.snapshot_cadence;
      try {
        RunHistory history = run(method, *problem, mix, algo.params,
                                 cfg.run.iterations, seed, options);
        history.config_digest = cfg.digest;
        std::string file = cfg.output.directory + "/history_" + algo.id +
                           "_" + std::to_string(seed) + ".csv";
        write_history_csv(history, file);
        histories.push_back(std::move(history));
      } catch (const NonFiniteState& e) {
        result.failures.push_back({algo.id, seed, e.what(), true});
        failures_json.push_back({{"seed", seed},
                                 {"error", e.what()},
                                 {"divergence", true}});
      } catch (const Error& e) {
        result.failures.push_back({algo.id, seed, e.what(), false});
        failures_json.push_back({{"seed", seed},
                                 {"error", e.what()},
                                 {"divergence", false}});
      }
    }

    nlohmann::json algo_summary;
    algo_summary["failures"] = failures_json;
    algo_summary["completed_seeds"] = histories.size();
    if (!histories.empty()) {
      AggregateSeries agg = aggregate_histories(histories);
      write_aggregate_csv(agg, cfg.digest,
                          cfg.output.directory + "/aggregate_" + algo.id +
                              ".csv");
      double final_gap = 0.0;
      double final_loss = 0.0;
      for (const auto& h : histories) {
        final_gap += h.records.back().gap;
        final_loss += h.records.back().loss;
      }
      final_gap /= static_cast<double>(histories.size());
      final_loss /= static_cast<double>(histories.size());
      algo_summary["final_gap_mean"] = final_gap;
      algo_summary["final_loss_mean"] = final_loss;

      // Feasibility check against the constants of the first completed run.
      const Problem* problem = shared_problem.get();
      std::unique_ptr<Problem> owned;
      if (!problem) {
        owned = build_problem(cfg.problem, cfg.graph.n, cfg.run.batch_size,
                              histories.front().seed);
        problem = owned.get();
      }
      TheoryConstants tc;
      tc.L = problem->smoothness();
      tc.G = problem->gradient_bound();
      tc.sigma = problem->noise_bound();
      tc.rho_a = mix.rho_a;
      tc.v_min = algo.params.v_min;
      tc.v_max = algo.params.v_max;
      tc.alpha = algo.params.alpha;
      tc.beta1 = algo.params.beta1;
      tc.beta2 = algo.params.beta2;
      tc.omega = cfg.omega;
      tc.n = cfg.graph.n;
      const auto& first = histories.front().records.front();
      tc.delta1 = first.consensus_x;
      tc.delta2 = first.consensus_v;
      tc.delta3 = first.consensus_s;
      FeasibilityReport feas = stepsize_feasible(tc);
      algo_summary["feasibility"] = {
          {"feasible", feas.feasible},
          {"alpha_max", feas.alpha_max},
          {"beta1_max", feas.beta1_max},
          {"omega_best", feas.omega_best},
          {"alpha_max_at_omega_best", feas.alpha_max_at_omega_best}};
      const NConstants nc = compute_n(tc);
      const auto [n3p, n4p] = compute_n34_prime(tc);
      algo_summary["constants"] = {{"L", tc.L},
                                   {"G", tc.G},
                                   {"sigma", tc.sigma},
                                   {"mu", mu_constant(tc)},
                                   {"n1", nc.n1},
                                   {"n2", nc.n2},
                                   {"n3", nc.n3},
                                   {"n4", nc.n4},
                                   {"n2_prime", compute_n2_prime(tc)},
                                   {"n3_prime", n3p},
                                   {"n4_prime", n4p}};
      result.aggregates.emplace(algo.id, std::move(agg));
    }
    summary["algorithms"][algo.id] = std::move(algo_summary);
    result.histories.emplace(algo.id, std::move(histories));
  }

  result.summary = std::move(summary);
  if (cfg.output.emit_summary) {
    std::ofstream out(cfg.output.directory + "/summary.json");
    if (!out) throw Error("cannot write summary.json");
    out << result.summary.dump(2) << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

struct VerifyReport {
  bool pass = false;
  double rho_a = 0.0;
  RelationReport relations;
  ConsensusBoundReport bounds;
  FeasibilityReport feasibility;
  double relation_tolerance = 1e-9;
};

// Short instrumented run of the adaptive tracking method checking the exact
// averaging identities and the summed consensus bounds.
inline VerifyReport verify_suite(const ExperimentConfig& cfg,
                                 std::ostream& out) {
  const AlgoConfig* algo = nullptr;
  for (const auto& entry : cfg.algorithms) {
    if (entry.id == "gt-adaptive") {
      algo = &entry;
      break;
    }
  }
  if (!algo) {
    throw ValidationError(
        "verification needs a gt-adaptive entry in config.algorithms");
  }

  MixingMatrix mix = build_graph_matrix(cfg.graph);
  const std::uint64_t seed = cfg.run.seeds.front();
  std::unique_ptr<Problem> problem =
      build_problem(cfg.problem, cfg.graph.n, cfg.run.batch_size, seed);

  constexpr long verify_iterations = 200;
  RunOptions options;
  options.snapshot_cadence = 1;
  RunHistory history = run(Method::GtAdaptive, *problem, mix, algo->params,
                           verify_iterations, seed, options);

  VerifyReport report;
  report.rho_a = mix.rho_a;
  report.relations = verify_basic_relations(history, algo->params.alpha,
                                            algo->params.beta1);

  // G must dominate every sampled gradient norm for the adaptive bound.
  double max_g = problem->gradient_bound();
  for (const auto& snap : history.snapshots) {
    for (Eigen::Index i = 0; i < snap.g.rows(); ++i) {
      max_g = std::max(max_g, snap.g.row(i).norm());
    }
  }
  ConsensusBoundInputs inputs;
  inputs.alpha = algo->params.alpha;
  inputs.beta2 = algo->params.beta2;
  inputs.v_min = algo->params.v_min;
  inputs.grad_bound = max_g;
  inputs.rho_a = mix.rho_a;
  report.bounds = verify_consensus_bounds(history, inputs);

  TheoryConstants tc;
  tc.L = problem->smoothness();
  tc.G = max_g;
  tc.sigma = problem->noise_bound();
  tc.rho_a = mix.rho_a;
  tc.v_min = algo->params.v_min;
  tc.v_max = algo->params.v_max;
  tc.alpha = algo->params.alpha;
  tc.beta1 = algo->params.beta1;
  tc.beta2 = algo->params.beta2;
  tc.omega = cfg.omega;
  tc.n = cfg.graph.n;
  const auto& first = history.records.front();
  tc.delta1 = first.consensus_x;
  tc.delta2 = first.consensus_v;
  tc.delta3 = first.consensus_s;
  report.feasibility = stepsize_feasible(tc);

  const double rel = report.relations.max_violation();
  const double bound = report.bounds.max_violation();
  report.pass = rel <= report.relation_tolerance &&
                bound <= report.relation_tolerance;

  out << "verification over " << verify_iterations
      << " iterations (seed " << seed << ")\n";
  out << "  rho_a                      = " << format_full(report.rho_a)
      << "\n";
  out << "  identity a (tracking mean) = " << format_sci(report.relations.a)
      << "\n";
  out << "  identity b (mean descent)  = " << format_sci(report.relations.b)
      << "\n";
  out << "  identity c (z increment)   = " << format_sci(report.relations.c)
      << "\n";
  out << "  identity d (z offset)      = " << format_sci(report.relations.d)
      << "\n";
  out << "  momentum bound             = "
      << format_sci(report.bounds.momentum.lhs) << " <= "
      << format_sci(report.bounds.momentum.rhs) << "\n";
  out << "  iterate bound              = "
      << format_sci(report.bounds.iterate.lhs) << " <= "
      << format_sci(report.bounds.iterate.rhs) << "\n";
  out << "  adaptive bound             = "
      << format_sci(report.bounds.adaptive.lhs) << " <= "
      << format_sci(report.bounds.adaptive.rhs) << "\n";
  out << "  feasible stepsize interval = (0, "
      << format_full(report.feasibility.alpha_max) << ")\n";
  out << "  alpha " << format_full(tc.alpha)
      << (report.feasibility.feasible ? " is feasible" : " is NOT feasible")
      << ", beta1_max = " << format_full(report.feasibility.beta1_max)
      << "\n";
  out << (report.pass ? "verification PASSED" : "verification FAILED")
      << " (tolerance " << format_sci(report.relation_tolerance) << ")\n";
  return report;
}

}  // namespace dagt
