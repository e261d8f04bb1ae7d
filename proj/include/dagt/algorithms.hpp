#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dagt/errors.hpp"
#include "dagt/metrics.hpp"
#include "dagt/problems.hpp"
#include "dagt/rng.hpp"
#include "dagt/topology.hpp"

namespace dagt {

struct AlgoParams {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double v_min = 1e-8;
  double v_max = 100.0;
  // Clip the second moment already at initialization. Disabling this keeps
  // the raw squared gradient as the initial second moment.
  bool clip_init = true;

  void validate() const {
    if (!(alpha > 0.0)) throw ValidationError("alpha must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) {
      throw ValidationError("beta1 must lie in (0, 1)");
    }
    if (!(beta2 > 0.0 && beta2 < 1.0)) {
      throw ValidationError("beta2 must lie in (0, 1)");
    }
    if (!(v_max >= 1.0 && 1.0 >= v_min && v_min > 0.0)) {
      throw ValidationError("clip bounds must satisfy v_max >= 1 >= v_min > 0");
    }
  }
};

enum class Method {
  GtAdaptive,
  Dsgd,
  Gt,
  MomentumDsgd,
  AdaptiveDiminishing,
};

inline std::string method_id(Method m) {
  switch (m) {
    case Method::GtAdaptive: return "gt-adaptive";
    case Method::Dsgd: return "dsgd";
    case Method::Gt: return "gt";
    case Method::MomentumDsgd: return "momentum-dsgd";
    case Method::AdaptiveDiminishing: return "adaptive-diminishing";
  }
  throw InternalError("unknown method");
}

inline Method method_from_id(const std::string& id) {
  if (id == "gt-adaptive") return Method::GtAdaptive;
  if (id == "dsgd") return Method::Dsgd;
  if (id == "gt") return Method::Gt;
  if (id == "momentum-dsgd") return Method::MomentumDsgd;
  if (id == "adaptive-diminishing") return Method::AdaptiveDiminishing;
  throw ValidationError("unknown algorithm id '" + id + "'");
}

// Stacked per-node state; row i belongs to node i. Unused fields of the
// simpler baselines stay zero.
struct NetworkState {
  long t = 1;
  Eigen::MatrixXd x, m, v, s, g;

  int nodes() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }

  bool all_finite() const {
    return x.allFinite() && m.allFinite() && v.allFinite() && s.allFinite() &&
           g.allFinite();
  }
};

inline Eigen::MatrixXd clip_elementwise(const Eigen::MatrixXd& m, double lo,
                                        double hi) {
  if (!(hi >= lo)) throw ValidationError("clip needs hi >= lo");
  return m.cwiseMax(lo).cwiseMin(hi);
}

inline Eigen::VectorXd clip_elementwise(const Eigen::VectorXd& v, double lo,
                                        double hi) {
  if (!(hi >= lo)) throw ValidationError("clip needs hi >= lo");
  return v.cwiseMax(lo).cwiseMin(hi);
}

namespace detail {

inline Eigen::MatrixXd sample_gradients(const Problem& problem,
                                        const Eigen::MatrixXd& x,
                                        std::vector<Stream>& rngs) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (int i = 0; i < static_cast<int>(x.rows()); ++i) {
    g.row(i) = problem
                   .stochastic_grad(i, x.row(i).transpose(),
                                    rngs[static_cast<std::size_t>(i)])
                   .transpose();
  }
  return g;
}

inline void check_state_shape(const Problem& problem, const Eigen::MatrixXd& x,
                              std::size_t rng_count) {
  if (x.rows() != problem.node_count() || x.cols() != problem.dim()) {
    throw DimensionMismatch("state must be node_count x dim");
  }
  if (rng_count != static_cast<std::size_t>(problem.node_count())) {
    throw DimensionMismatch("need one gradient stream per node");
  }
}

inline void check_sizes(const Problem& problem, const Eigen::MatrixXd& x,
                        const MixingMatrix& mix, std::size_t rng_count) {
  check_state_shape(problem, x, rng_count);
  if (mix.n != problem.node_count() || mix.w.rows() != mix.n ||
      mix.w.cols() != mix.n) {
    throw DimensionMismatch("mixing matrix size does not match node count");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Adaptive gradient tracking
// ---------------------------------------------------------------------------

inline NetworkState gt_adaptive_init(const Problem& problem,
                                     const AlgoParams& params,
                                     const Eigen::MatrixXd& x_init,
                                     std::vector<Stream>& rngs) {
  params.validate();
  detail::check_state_shape(problem, x_init, rngs.size());
  NetworkState state;
  state.t = 1;
  state.x = x_init;
  state.g = detail::sample_gradients(problem, state.x, rngs);
  state.s = state.g;
  state.m = Eigen::MatrixXd::Zero(x_init.rows(), x_init.cols());
  Eigen::MatrixXd sq = state.s.cwiseProduct(state.s);
  state.v = params.clip_init ? clip_elementwise(sq, params.v_min, params.v_max)
                             : sq;
  return state;
}

// One synchronous round: momentum and clipped second moment from the current
// tracking estimate, consensus step on x, fresh gradients at the new
// iterates, then the tracking update. All nodes use pre-update neighbor
// values.
inline void gt_adaptive_step(NetworkState& state, const MixingMatrix& mix,
                             const Problem& problem, const AlgoParams& params,
                             std::vector<Stream>& rngs) {
  detail::check_sizes(problem, state.x, mix, rngs.size());
  Eigen::MatrixXd m_next = params.beta1 * state.m + (1.0 - params.beta1) * state.s;
  Eigen::MatrixXd v_next = clip_elementwise(
      Eigen::MatrixXd(params.beta2 * state.v +
                      (1.0 - params.beta2) * state.s.cwiseProduct(state.s)),
      params.v_min, params.v_max);
  Eigen::MatrixXd x_next =
      mix.w * state.x -
      params.alpha * v_next.array().rsqrt().matrix().cwiseProduct(m_next);
  Eigen::MatrixXd g_next = detail::sample_gradients(problem, x_next, rngs);
  Eigen::MatrixXd s_next = mix.w * state.s + g_next - state.g;

  state.m = std::move(m_next);
  state.v = std::move(v_next);
  state.x = std::move(x_next);
  state.g = std::move(g_next);
  state.s = std::move(s_next);
  state.t += 1;
  if (!state.all_finite()) {
    throw NonFiniteState("state became non-finite at iteration " +
                             std::to_string(state.t),
                         state.t);
  }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

inline NetworkState baseline_init(Method method, const Problem& problem,
                                  const AlgoParams& params,
                                  const Eigen::MatrixXd& x_init,
                                  std::vector<Stream>& rngs) {
  params.validate();
  detail::check_state_shape(problem, x_init, rngs.size());
  NetworkState state;
  state.t = 1;
  state.x = x_init;
  state.g = detail::sample_gradients(problem, state.x, rngs);
  state.m = Eigen::MatrixXd::Zero(x_init.rows(), x_init.cols());
  state.s = Eigen::MatrixXd::Zero(x_init.rows(), x_init.cols());
  state.v = Eigen::MatrixXd::Zero(x_init.rows(), x_init.cols());
  switch (method) {
    case Method::Gt:
      state.s = state.g;
      break;
    case Method::AdaptiveDiminishing: {
      Eigen::MatrixXd sq = state.g.cwiseProduct(state.g);
      state.v = params.clip_init
                    ? clip_elementwise(sq, params.v_min, params.v_max)
                    : sq;
      break;
    }
    default:
      break;
  }
  return state;
}

inline void dsgd_step(NetworkState& state, const MixingMatrix& mix,
                      const Problem& problem, double alpha,
                      std::vector<Stream>& rngs) {
  detail::check_sizes(problem, state.x, mix, rngs.size());
  Eigen::MatrixXd x_next = mix.w * state.x - alpha * state.g;
  state.g = detail::sample_gradients(problem, x_next, rngs);
  state.x = std::move(x_next);
  state.t += 1;
  if (!state.all_finite()) {
    throw NonFiniteState("state became non-finite at iteration " +
                             std::to_string(state.t),
                         state.t);
  }
}

inline void gt_step(NetworkState& state, const MixingMatrix& mix,
                    const Problem& problem, double alpha,
                    std::vector<Stream>& rngs) {
  detail::check_sizes(problem, state.x, mix, rngs.size());
  Eigen::MatrixXd x_next = mix.w * state.x - alpha * state.s;
  Eigen::MatrixXd g_next = detail::sample_gradients(problem, x_next, rngs);
  Eigen::MatrixXd s_next = mix.w * state.s + g_next - state.g;
  state.x = std::move(x_next);
  state.g = std::move(g_next);
  state.s = std::move(s_next);
  state.t += 1;
  if (!state.all_finite()) {
    throw NonFiniteState("state became non-finite at iteration " +
                             std::to_string(state.t),
                         state.t);
  }
}

inline void momentum_dsgd_step(NetworkState& state, const MixingMatrix& mix,
                               const Problem& problem, double alpha,
                               double beta1, std::vector<Stream>& rngs) {
  detail::check_sizes(problem, state.x, mix, rngs.size());
  Eigen::MatrixXd m_next = beta1 * state.m + (1.0 - beta1) * state.g;
  Eigen::MatrixXd x_next = mix.w * state.x - alpha * m_next;
  state.g = detail::sample_gradients(problem, x_next, rngs);
  state.m = std::move(m_next);
  state.x = std::move(x_next);
  state.t += 1;
  if (!state.all_finite()) {
    throw NonFiniteState("state became non-finite at iteration " +
                             std::to_string(state.t),
                         state.t);
  }
}

// Decaying stepsize used by the non-tracking adaptive baseline.
inline double diminishing_stepsize(double alpha, double t) {
  return 100.0 * alpha / (100.0 + std::sqrt(t));
}

// Adaptive momentum baseline without tracking: the raw local gradient plays
// the role of the tracking estimate and the stepsize decays.
inline void adaptive_diminishing_step(NetworkState& state,
                                      const MixingMatrix& mix,
                                      const Problem& problem,
                                      const AlgoParams& params,
                                      std::vector<Stream>& rngs) {
  detail::check_sizes(problem, state.x, mix, rngs.size());
  double alpha_t =
      diminishing_stepsize(params.alpha, static_cast<double>(state.t));
  Eigen::MatrixXd m_next = params.beta1 * state.m + (1.0 - params.beta1) * state.g;
  Eigen::MatrixXd v_next = clip_elementwise(
      Eigen::MatrixXd(params.beta2 * state.v +
                      (1.0 - params.beta2) * state.g.cwiseProduct(state.g)),
      params.v_min, params.v_max);
  Eigen::MatrixXd x_next =
      mix.w * state.x -
      alpha_t * v_next.array().rsqrt().matrix().cwiseProduct(m_next);
  state.g = detail::sample_gradients(problem, x_next, rngs);
  state.m = std::move(m_next);
  state.v = std::move(v_next);
  state.x = std::move(x_next);
  state.t += 1;
  if (!state.all_finite()) {
    throw NonFiniteState("state became non-finite at iteration " +
                             std::to_string(state.t),
                         state.t);
  }
}

// ---------------------------------------------------------------------------
// Unified driver
// ---------------------------------------------------------------------------

inline NetworkState method_init(Method method, const Problem& problem,
                                const AlgoParams& params,
                                const Eigen::MatrixXd& x_init,
                                std::vector<Stream>& rngs) {
  if (method == Method::GtAdaptive) {
    return gt_adaptive_init(problem, params, x_init, rngs);
  }
  return baseline_init(method, problem, params, x_init, rngs);
}

inline void method_step(Method method, NetworkState& state,
                        const MixingMatrix& mix, const Problem& problem,
                        const AlgoParams& params, std::vector<Stream>& rngs) {
  switch (method) {
    case Method::GtAdaptive:
      gt_adaptive_step(state, mix, problem, params, rngs);
      return;
    case Method::Dsgd:
      dsgd_step(state, mix, problem, params.alpha, rngs);
      return;
    case Method::Gt:
      gt_step(state, mix, problem, params.alpha, rngs);
      return;
    case Method::MomentumDsgd:
      momentum_dsgd_step(state, mix, problem, params.alpha, params.beta1, rngs);
      return;
    case Method::AdaptiveDiminishing:
      adaptive_diminishing_step(state, mix, problem, params, rngs);
      return;
  }
  throw InternalError("unknown method");
}

struct RunOptions {
  // Record a full state snapshot every `snapshot_cadence` iterations
  // (0 disables; 1 keeps every iteration including the initial state).
  int snapshot_cadence = 0;
  // Initial iterates; defaults to per-node uniform draws on [-1, 1]^d.
  std::optional<Eigen::MatrixXd> x_init;
};

// Runs `iterations` synchronous rounds and records the metric row for the
// initial state and for every round (t = 1 .. iterations + 1). All
// randomness derives from `seed`, so a repeated call reproduces the history
// bit for bit.
inline RunHistory run(Method method, const Problem& problem,
                      const MixingMatrix& mix, const AlgoParams& params,
                      long iterations, std::uint64_t seed,
                      const RunOptions& options = {}) {
  if (iterations < 0) throw ValidationError("iteration count must be >= 0");
  const int n = problem.node_count();
  const int d = problem.dim();

  std::vector<Stream> rngs;
  rngs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rngs.push_back(make_stream(seed, static_cast<std::uint64_t>(i), "grad"));
  }

  Eigen::MatrixXd x_init;
  if (options.x_init.has_value()) {
    x_init = *options.x_init;
  } else {
    x_init.resize(n, d);
    for (int i = 0; i < n; ++i) {
      Stream init_rng = make_stream(seed, static_cast<std::uint64_t>(i), "xinit");
      for (int j = 0; j < d; ++j) x_init(i, j) = init_rng.uniform(-1.0, 1.0);
    }
  }

  RunHistory history;
  history.algorithm = method_id(method);
  history.seed = seed;
  history.snapshot_cadence = options.snapshot_cadence;
  history.records.reserve(static_cast<std::size_t>(iterations) + 1);

  NetworkState state = method_init(method, problem, params, x_init, rngs);
  auto record = [&](const NetworkState& st) {
    history.records.push_back(
        make_record(st.t, st.x, st.m, st.v, st.s, problem));
    if (options.snapshot_cadence > 0 &&
        (st.t - 1) % options.snapshot_cadence == 0) {
      history.snapshots.push_back({st.t, st.x, st.m, st.v, st.s, st.g});
    }
  };
  record(state);
  for (long step = 0; step < iterations; ++step) {
    method_step(method, state, mix, problem, params, rngs);
    record(state);
  }
  return history;
}

}  // namespace dagt
