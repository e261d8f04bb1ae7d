#include <cstdio>
#include <exception>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dagt/runner.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_internal = 1;
constexpr int exit_config = 2;
constexpr int exit_verification = 3;
constexpr int exit_divergence = 4;

struct ConstantsBundle {
  dagt::TheoryConstants inputs;
  dagt::MConstants m;
  dagt::NConstants n;
  double mu = 0.0;
  double n2_prime = 0.0;
  double n3_prime = 0.0;
  double n4_prime = 0.0;
  dagt::FeasibilityReport feasibility;
  bool have_gap_bound = false;
  double gap_bound = 0.0;
  double f_init_minus_fstar = 0.0;
  double horizon = 0.0;
};

// Builds the constants for the gt-adaptive entry of the config, measuring
// the initial residuals from the configured initial iterates.
ConstantsBundle collect_constants(const dagt::ExperimentConfig& cfg) {
  const dagt::AlgoConfig* algo = nullptr;
  for (const auto& entry : cfg.algorithms) {
    if (entry.id == "gt-adaptive") algo = &entry;
  }
  if (!algo) {
    throw dagt::ValidationError(
        "constants needs a gt-adaptive entry in config.algorithms");
  }

  dagt::MixingMatrix mix = dagt::build_graph_matrix(cfg.graph);
  const std::uint64_t seed = cfg.run.seeds.front();
  std::unique_ptr<dagt::Problem> problem =
      dagt::build_problem(cfg.problem, cfg.graph.n, cfg.run.batch_size, seed);

  // Initial state only; supplies f(x_bar_1) and the initial residuals.
  dagt::RunHistory init = dagt::run(dagt::Method::GtAdaptive, *problem, mix,
                                    algo->params, 0, seed);
  const dagt::IterationRecord& first = init.records.front();

  ConstantsBundle bundle;
  bundle.inputs.L = problem->smoothness();
  bundle.inputs.G = problem->gradient_bound();
  bundle.inputs.sigma = problem->noise_bound();
  bundle.inputs.rho_a = mix.rho_a;
  bundle.inputs.v_min = algo->params.v_min;
  bundle.inputs.v_max = algo->params.v_max;
  bundle.inputs.alpha = algo->params.alpha;
  bundle.inputs.beta1 = algo->params.beta1;
  bundle.inputs.beta2 = algo->params.beta2;
  bundle.inputs.omega = cfg.omega;
  bundle.inputs.n = cfg.graph.n;
  bundle.inputs.delta1 = first.consensus_x;
  bundle.inputs.delta2 = first.consensus_v;
  bundle.inputs.delta3 = first.consensus_s;

  bundle.m = dagt::compute_m(bundle.inputs);
  bundle.n = dagt::compute_n(bundle.inputs);
  bundle.mu = dagt::mu_constant(bundle.inputs);
  bundle.n2_prime = dagt::compute_n2_prime(bundle.inputs);
  std::tie(bundle.n3_prime, bundle.n4_prime) =
      dagt::compute_n34_prime(bundle.inputs);
  bundle.feasibility = dagt::stepsize_feasible(bundle.inputs);

  // The explicit gap bound needs the initial suboptimality, known in closed
  // form for the quadratic (solver) and Huber (zero at the planted point)
  // instances.
  double f_star = 0.0;
  bool known_optimum = false;
  if (const auto* quad =
          dynamic_cast<const dagt::QuadraticInstance*>(problem.get())) {
    f_star = quad->optimum_value();
    known_optimum = true;
  } else if (dynamic_cast<const dagt::HuberRegressionInstance*>(
                 problem.get()) != nullptr) {
    f_star = 0.0;
    known_optimum = true;
  }
  if (known_optimum && cfg.run.iterations >= 1) {
    bundle.horizon = static_cast<double>(cfg.run.iterations);
    bundle.f_init_minus_fstar = std::max(0.0, first.loss - f_star);
    try {
      bundle.gap_bound = dagt::predicted_gap_bound(
          bundle.inputs, bundle.horizon, bundle.f_init_minus_fstar);
      bundle.have_gap_bound = true;
    } catch (const dagt::InfeasibleConfig&) {
      bundle.have_gap_bound = false;
    }
  }
  return bundle;
}

void print_constants(const ConstantsBundle& b, std::ostream& out) {
  auto line = [&](const char* key, double value) {
    out << key << " = " << dagt::format_full(value) << "\n";
  };
  line("L", b.inputs.L);
  line("G", b.inputs.G);
  line("sigma", b.inputs.sigma);
  line("rho_a", b.inputs.rho_a);
  out << "n = " << b.inputs.n << "\n";
  line("alpha", b.inputs.alpha);
  line("beta1", b.inputs.beta1);
  line("beta2", b.inputs.beta2);
  line("v_min", b.inputs.v_min);
  line("v_max", b.inputs.v_max);
  line("omega", b.inputs.omega);
  line("delta1", b.inputs.delta1);
  line("delta2", b.inputs.delta2);
  line("delta3", b.inputs.delta3);
  line("M1", b.m.m1);
  line("M2", b.m.m2);
  line("M3", b.m.m3);
  line("M4", b.m.m4);
  line("M5", b.m.m5);
  line("M6", b.m.m6);
  line("N1", b.n.n1);
  line("N2", b.n.n2);
  line("N3", b.n.n3);
  line("N4", b.n.n4);
  line("mu", b.mu);
  line("N2_prime", b.n2_prime);
  line("N3_prime", b.n3_prime);
  line("N4_prime", b.n4_prime);
  line("alpha_max", b.feasibility.alpha_max);
  line("beta1_max", b.feasibility.beta1_max);
  line("omega_best", b.feasibility.omega_best);
  line("alpha_max_at_omega_best", b.feasibility.alpha_max_at_omega_best);
  out << "feasible = " << (b.feasibility.feasible ? "true" : "false") << "\n";
  out << "feasible_alpha_interval = (0, "
      << dagt::format_full(b.feasibility.alpha_max) << ")\n";
  if (b.have_gap_bound) {
    line("horizon", b.horizon);
    line("f_init_minus_fstar", b.f_init_minus_fstar);
    line("predicted_gap_bound", b.gap_bound);
  }
}

nlohmann::json constants_json(const ConstantsBundle& b) {
  nlohmann::json j;
  j["inputs"] = {{"L", b.inputs.L},       {"G", b.inputs.G},
                 {"sigma", b.inputs.sigma}, {"rho_a", b.inputs.rho_a},
                 {"n", b.inputs.n},       {"alpha", b.inputs.alpha},
                 {"beta1", b.inputs.beta1}, {"beta2", b.inputs.beta2},
                 {"v_min", b.inputs.v_min}, {"v_max", b.inputs.v_max},
                 {"omega", b.inputs.omega}, {"delta1", b.inputs.delta1},
                 {"delta2", b.inputs.delta2}, {"delta3", b.inputs.delta3}};
  j["M"] = {{"M1", b.m.m1}, {"M2", b.m.m2}, {"M3", b.m.m3},
            {"M4", b.m.m4}, {"M5", b.m.m5}, {"M6", b.m.m6}};
  j["N"] = {{"N1", b.n.n1}, {"N2", b.n.n2}, {"N3", b.n.n3}, {"N4", b.n.n4}};
  j["mu"] = b.mu;
  j["N2_prime"] = b.n2_prime;
  j["N3_prime"] = b.n3_prime;
  j["N4_prime"] = b.n4_prime;
  j["feasibility"] = {
      {"feasible", b.feasibility.feasible},
      {"alpha_max", b.feasibility.alpha_max},
      {"beta1_max", b.feasibility.beta1_max},
      {"omega_best", b.feasibility.omega_best},
      {"alpha_max_at_omega_best", b.feasibility.alpha_max_at_omega_best}};
  if (b.have_gap_bound) {
    j["predicted_gap_bound"] = {{"horizon", b.horizon},
                                {"f_init_minus_fstar", b.f_init_minus_fstar},
                                {"value", b.gap_bound}};
  }
  return j;
}

int command_run(const std::string& config, const std::string& out_dir,
                const std::vector<std::string>& overrides) {
  dagt::ExperimentConfig cfg = dagt::parse_config(config, overrides);
  if (!out_dir.empty()) cfg.output.directory = out_dir;
  dagt::ExperimentResult result = dagt::run_experiment(cfg);

  bool diverged = false;
  for (const auto& failure : result.failures) {
    std::cerr << "run failed: " << failure.algorithm << " seed "
              << failure.seed << ": " << failure.message << "\n";
    diverged = diverged || failure.divergence;
  }
  for (const auto& algo : cfg.algorithms) {
    const auto& entry = result.summary.at("algorithms").at(algo.id);
    std::cout << algo.id << ": ";
    if (entry.contains("final_gap_mean")) {
      std::cout << "final gap "
                << dagt::format_sci(entry.at("final_gap_mean").get<double>())
                << ", final loss "
                << dagt::format_sci(entry.at("final_loss_mean").get<double>());
    } else {
      std::cout << "no completed seeds";
    }
    std::cout << "\n";
  }
  std::cout << "outputs written to " << result.output_directory << "\n";
  if (diverged) return exit_divergence;
  if (!result.failures.empty()) return exit_internal;
  return exit_ok;
}

int command_verify(const std::string& config,
                   const std::vector<std::string>& overrides) {
  dagt::ExperimentConfig cfg = dagt::parse_config(config, overrides);
  dagt::VerifyReport report = dagt::verify_suite(cfg, std::cout);
  return report.pass ? exit_ok : exit_verification;
}

int command_constants(const std::string& config,
                      const std::vector<std::string>& overrides) {
  dagt::ExperimentConfig cfg = dagt::parse_config(config, overrides);
  ConstantsBundle bundle = collect_constants(cfg);
  print_constants(bundle, std::cout);
  std::cout << "\n" << constants_json(bundle).dump(2) << "\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed adaptive gradient tracking experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  std::vector<std::string> overrides;

  CLI::App* run_cmd = app.add_subcommand("run", "run an experiment config");
  run_cmd->add_option("config", config, "experiment config (JSON)")
      ->required();
  run_cmd->add_option("--out", out_dir, "override the output directory");
  run_cmd->add_option("--override", overrides,
                      "config override key=value (repeatable)");

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "check the runtime invariants");
  verify_cmd->add_option("config", config, "experiment config (JSON)")
      ->required();
  verify_cmd->add_option("--override", overrides,
                         "config override key=value (repeatable)");

  CLI::App* constants_cmd = app.add_subcommand(
      "constants", "print analysis constants and the feasible stepsize");
  constants_cmd->add_option("config", config, "experiment config (JSON)")
      ->required();
  constants_cmd->add_option("--override", overrides,
                            "config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (run_cmd->parsed()) return command_run(config, out_dir, overrides);
    if (verify_cmd->parsed()) return command_verify(config, overrides);
    return command_constants(config, overrides);
  } catch (const dagt::NonFiniteState& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return exit_divergence;
  } catch (const dagt::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const dagt::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const dagt::InfeasibleConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const dagt::LabelOutOfRange& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const dagt::EmptyLocalDataset& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const dagt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_internal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_internal;
  }
}
