#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "dagt/errors.hpp"
#include "dagt/io.hpp"
#include "dagt/problems.hpp"

namespace dagt {

// Per-iteration scalar summary. `t` starts at 1 with the initial state.
struct IterationRecord {
  long t = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double consensus_x = 0.0;
  double consensus_s = 0.0;
  double consensus_m = 0.0;
  double consensus_v = 0.0;
  double gap = 0.0;
};

// Full network state at one iteration; rows are nodes.
struct StateSnapshot {
  long t = 0;
  Eigen::MatrixXd x, m, v, s, g;
};

struct RunHistory {
  std::string algorithm;
  std::string config_digest;
  std::uint64_t seed = 0;
  int snapshot_cadence = 0;
  std::vector<IterationRecord> records;
  std::vector<StateSnapshot> snapshots;
};

inline Eigen::VectorXd mean_row(const Eigen::MatrixXd& rows) {
  return rows.colwise().mean().transpose();
}

// Sum over nodes of the squared distance to the network average.
inline double consensus_error(const Eigen::MatrixXd& rows) {
  Eigen::RowVectorXd mean = rows.colwise().mean();
  return (rows.rowwise() - mean).squaredNorm();
}

// |grad f(x_bar)|^2 + (1/n) sum_i |x_i - x_bar|^2, evaluated with
// deterministic gradients.
inline double optimality_gap(const Eigen::MatrixXd& x, const Problem& problem) {
  if (x.rows() != problem.node_count() || x.cols() != problem.dim()) {
    throw DimensionMismatch("state shape does not match the problem");
  }
  Eigen::VectorXd x_bar = mean_row(x);
  double grad_sq = problem.global_grad(x_bar).squaredNorm();
  return grad_sq + consensus_error(x) / static_cast<double>(x.rows());
}

inline IterationRecord make_record(long t, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& m,
                                   const Eigen::MatrixXd& v,
                                   const Eigen::MatrixXd& s,
                                   const Problem& problem) {
  IterationRecord rec;
  rec.t = t;
  Eigen::VectorXd x_bar = mean_row(x);
  rec.loss = problem.global_loss(x_bar);
  rec.grad_norm_sq = problem.global_grad(x_bar).squaredNorm();
  rec.consensus_x = consensus_error(x);
  rec.consensus_s = consensus_error(s);
  rec.consensus_m = consensus_error(m);
  rec.consensus_v = consensus_error(v);
  rec.gap = rec.grad_norm_sq + rec.consensus_x / static_cast<double>(x.rows());
  return rec;
}

// Momentum-corrected averaged sequence: z_1 = x_1 and for t >= 2
// z_t = (x_t - beta1 x_{t-1}) / (1 - beta1), row-wise.
inline Eigen::MatrixXd z_sequence(long t, const Eigen::MatrixXd& x_t,
                                  const Eigen::MatrixXd* x_prev, double beta1) {
  if (t < 1) throw ValidationError("iteration counter must be >= 1");
  if (t == 1) return x_t;
  if (x_prev == nullptr) {
    throw MissingPrevious("z sequence at t >= 2 needs the previous iterate");
  }
  if (x_prev->rows() != x_t.rows() || x_prev->cols() != x_t.cols()) {
    throw DimensionMismatch("consecutive iterates have different shapes");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw ValidationError("beta1 must lie in [0, 1)");
  }
  return (x_t - beta1 * *x_prev) / (1.0 - beta1);
}

// ---------------------------------------------------------------------------
// Exact averaging identities of the adaptive tracking recursion
// ---------------------------------------------------------------------------

// Max-norm violations of the four identities that hold algebraically for
// every realization:
//   a: mean(s_t) = mean(g_t)
//   b: the average iterate moves by the average preconditioned momentum
//   c: the z-average increment matches its two-term expansion
//   d: z_bar - x_bar equals the momentum correction term
struct RelationReport {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double max_violation() const { return std::max(std::max(a, b), std::max(c, d)); }
};

namespace detail {

inline void require_dense_snapshots(const RunHistory& history) {
  if (history.snapshot_cadence != 1 || history.snapshots.empty()) {
    throw SnapshotMissing(
        "verification needs snapshots recorded at every iteration");
  }
}

inline Eigen::MatrixXd inv_sqrt(const Eigen::MatrixXd& v) {
  if (v.minCoeff() <= 0.0) {
    throw ValidationError("second-moment entries must be positive");
  }
  return v.array().rsqrt().matrix();
}

// Average over nodes of a (elementwise) b, as a d-vector.
inline Eigen::VectorXd mean_product(const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b) {
  return mean_row(a.cwiseProduct(b));
}

}  // namespace detail

inline RelationReport verify_basic_relations(const RunHistory& history,
                                             double alpha, double beta1) {
  detail::require_dense_snapshots(history);
  const auto& snaps = history.snapshots;
  RelationReport report;

  auto z_bar = [&](std::size_t k) -> Eigen::VectorXd {
    Eigen::VectorXd x_bar = mean_row(snaps[k].x);
    if (k == 0) return x_bar;
    Eigen::VectorXd x_prev = mean_row(snaps[k - 1].x);
    return (x_bar - beta1 * x_prev) / (1.0 - beta1);
  };

  for (std::size_t k = 0; k < snaps.size(); ++k) {
    Eigen::VectorXd a_gap = mean_row(snaps[k].s) - mean_row(snaps[k].g);
    report.a = std::max(report.a, a_gap.cwiseAbs().maxCoeff());

    Eigen::MatrixXd w = detail::inv_sqrt(snaps[k].v);
    Eigen::VectorXd d_gap =
        (z_bar(k) - mean_row(snaps[k].x)) +
        (beta1 / (1.0 - beta1)) * alpha *
            detail::mean_product(w, snaps[k].m);
    report.d = std::max(report.d, d_gap.cwiseAbs().maxCoeff());

    if (k + 1 < snaps.size()) {
      Eigen::MatrixXd w_next = detail::inv_sqrt(snaps[k + 1].v);
      Eigen::MatrixXd drift =
          beta1 * snaps[k].m + (1.0 - beta1) * snaps[k].s;
      Eigen::VectorXd b_gap = mean_row(snaps[k + 1].x) -
                              mean_row(snaps[k].x) +
                              alpha * detail::mean_product(w_next, drift);
      report.b = std::max(report.b, b_gap.cwiseAbs().maxCoeff());

      Eigen::VectorXd c_gap =
          (z_bar(k + 1) - z_bar(k)) +
          (beta1 / (1.0 - beta1)) * alpha *
              detail::mean_product(w_next - w, snaps[k].m) +
          alpha * detail::mean_product(w_next, snaps[k].s);
      report.c = std::max(report.c, c_gap.cwiseAbs().maxCoeff());
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Summed consensus bounds
// ---------------------------------------------------------------------------

// Path-wise bounds tying the summed consensus errors of m, x and v to the
// summed consensus error of the tracking estimate s. Each holds for every
// realization of the recursion; `violation` is max(0, lhs - rhs).
struct ConsensusBoundReport {
  struct Item {
    double lhs = 0.0;
    double rhs = 0.0;
    double violation() const { return std::max(0.0, lhs - rhs); }
  };
  Item momentum;  // sum |m - m_bar|^2 <= 4 sum |s - s_bar|^2
  Item iterate;   // sum |x - x_bar|^2 vs tracking error plus initial residual
  Item adaptive;  // sum |v - v_bar|^2 vs tracking error plus initial residual
  double max_violation() const {
    return std::max(momentum.violation(),
                    std::max(iterate.violation(), adaptive.violation()));
  }
};

struct ConsensusBoundInputs {
  double alpha = 0.0;
  double beta2 = 0.0;
  double v_min = 0.0;
  double grad_bound = 0.0;  // uniform bound G on sampled gradient norms
  double rho_a = 0.0;
};

inline ConsensusBoundReport verify_consensus_bounds(
    const RunHistory& history, const ConsensusBoundInputs& in) {
  detail::require_dense_snapshots(history);
  if (!(in.rho_a >= 0.0 && in.rho_a < 1.0)) {
    throw ValidationError("contraction factor must lie in [0, 1)");
  }
  if (!(in.v_min > 0.0) || !(in.beta2 > 0.0 && in.beta2 < 1.0)) {
    throw ValidationError("need v_min > 0 and beta2 in (0, 1)");
  }
  double sum_s = 0.0;
  double sum_m = 0.0;
  double sum_x = 0.0;
  double sum_v = 0.0;
  for (const auto& snap : history.snapshots) {
    sum_s += consensus_error(snap.s);
    sum_m += consensus_error(snap.m);
    sum_x += consensus_error(snap.x);
    sum_v += consensus_error(snap.v);
  }
  const double delta1 = consensus_error(history.snapshots.front().x);
  const double delta2 = consensus_error(history.snapshots.front().v);
  const double one_minus_rho_sq = 1.0 - in.rho_a * in.rho_a;

  ConsensusBoundReport report;
  report.momentum.lhs = sum_m;
  report.momentum.rhs = 4.0 * sum_s;

  report.iterate.lhs = sum_x;
  report.iterate.rhs =
      40.0 * in.alpha * in.alpha / in.v_min /
          (one_minus_rho_sq * one_minus_rho_sq) * sum_s +
      2.0 / one_minus_rho_sq * delta1;

  report.adaptive.lhs = sum_v;
  report.adaptive.rhs = 36.0 * in.grad_bound * in.grad_bound /
                            ((1.0 - in.rho_a) * (1.0 - in.rho_a)) * sum_s +
                        2.0 / (1.0 - in.beta2 * in.beta2) * delta2;
  return report;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr const char* history_csv_header =
    "seed,t,loss,grad_norm_sq,consensus_x,consensus_s,consensus_m,consensus_v,"
    "gap";

inline void write_history_csv(const RunHistory& history, std::ostream& out) {
  out << "# config=" << (history.config_digest.empty() ? "none"
                                                       : history.config_digest)
      << "\n";
  out << history_csv_header << "\n";
  for (const auto& r : history.records) {
    out << history.seed << "," << r.t << "," << format_sci(r.loss) << ","
        << format_sci(r.grad_norm_sq) << "," << format_sci(r.consensus_x)
        << "," << format_sci(r.consensus_s) << "," << format_sci(r.consensus_m)
        << "," << format_sci(r.consensus_v) << "," << format_sci(r.gap)
        << "\n";
  }
}

inline void write_history_csv(const RunHistory& history,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_history_csv(history, out);
}

inline RunHistory read_history_csv(std::istream& in,
                                   const std::string& source = "history") {
  RunHistory history;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# config=", 0) == 0) {
      history.config_digest = line.substr(9);
      continue;
    }
    if (!header_seen) {
      if (line != history_csv_header) {
        throw ParseError(source + ": unexpected header '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_doubles(line, source, lineno);
    if (fields.size() != 9) {
      throw ParseError(source + ": row " + std::to_string(lineno) +
                       ": expected 9 fields");
    }
    history.seed = static_cast<std::uint64_t>(fields[0]);
    IterationRecord rec;
    rec.t = static_cast<long>(fields[1]);
    rec.loss = fields[2];
    rec.grad_norm_sq = fields[3];
    rec.consensus_x = fields[4];
    rec.consensus_s = fields[5];
    rec.consensus_m = fields[6];
    rec.consensus_v = fields[7];
    rec.gap = fields[8];
    history.records.push_back(rec);
  }
  if (!header_seen) throw ParseError(source + ": missing header");
  return history;
}

// Snapshot dump: five n x d blocks labeled x, m, v, s, g.
inline void write_snapshot_csv(const StateSnapshot& snap, std::ostream& out) {
  auto block = [&](const char* name, const Eigen::MatrixXd& m) {
    out << "# block=" << name << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j > 0) out << ",";
        out << format_full(m(i, j));
      }
      out << "\n";
    }
  };
  out << "# snapshot t=" << snap.t << " n=" << snap.x.rows()
      << " d=" << snap.x.cols() << "\n";
  block("x", snap.x);
  block("m", snap.m);
  block("v", snap.v);
  block("s", snap.s);
  block("g", snap.g);
}

inline StateSnapshot read_snapshot_csv(std::istream& in,
                                       const std::string& source = "snapshot") {
  StateSnapshot snap;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# snapshot t=", 0) != 0) {
    throw ParseError(source + ": missing snapshot header");
  }
  long t = 0;
  long n = 0;
  long d = 0;
  if (std::sscanf(line.c_str(), "# snapshot t=%ld n=%ld d=%ld", &t, &n, &d) !=
          3 ||
      n < 1 || d < 1) {
    throw ParseError(source + ": bad snapshot header '" + line + "'");
  }
  snap.t = t;
  auto read_block = [&](const char* name) {
    if (!std::getline(in, line) || line != std::string("# block=") + name) {
      throw ParseError(source + ": expected block '" + std::string(name) + "'");
    }
    Eigen::MatrixXd m(n, d);
    for (long i = 0; i < n; ++i) {
      if (!std::getline(in, line)) {
        throw ParseError(source + ": truncated block '" + std::string(name) +
                         "'");
      }
      auto values = split_doubles(line, source, static_cast<std::size_t>(i));
      if (static_cast<long>(values.size()) != d) {
        throw ParseError(source + ": bad row width in block '" +
                         std::string(name) + "'");
      }
      for (long j = 0; j < d; ++j) m(i, j) = values[static_cast<std::size_t>(j)];
    }
    return m;
  };
  snap.x = read_block("x");
  snap.m = read_block("m");
  snap.v = read_block("v");
  snap.s = read_block("s");
  snap.g = read_block("g");
  return snap;
}

}  // namespace dagt
