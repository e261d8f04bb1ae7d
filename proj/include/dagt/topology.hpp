#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "dagt/errors.hpp"
#include "dagt/io.hpp"
#include "dagt/rng.hpp"

namespace dagt {

// Undirected simple graph on nodes 0..n-1. Edges are stored once with i < j.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
};

inline std::vector<int> node_degrees(const Graph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.n), 0);
  for (const auto& [i, j] : g.edges) {
    deg[static_cast<std::size_t>(i)]++;
    deg[static_cast<std::size_t>(j)]++;
  }
  return deg;
}

inline bool is_connected(const Graph& g) {
  if (g.n <= 0) return false;
  if (g.n == 1) return true;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.n));
  for (const auto& [i, j] : g.edges) {
    adj[static_cast<std::size_t>(i)].push_back(j);
    adj[static_cast<std::size_t>(j)].push_back(i);
  }
  std::vector<char> seen(static_cast<std::size_t>(g.n), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        reached++;
        frontier.push(v);
      }
    }
  }
  return reached == g.n;
}

inline Graph make_path_graph(int n) {
  if (n < 1) throw ValidationError("path graph requires n >= 1");
  Graph g;
  g.n = n;
  for (int i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  return g;
}

inline Graph make_complete_graph(int n) {
  if (n < 1) throw ValidationError("complete graph requires n >= 1");
  Graph g;
  g.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g.edges.emplace_back(i, j);
  return g;
}

// Samples G(n, p) and redraws (advancing the seed) until connected.
// Gives up after 1000 attempts.
inline Graph generate_erdos_renyi(int n, double p, std::uint64_t seed) {
  if (n < 2) throw ValidationError("erdos-renyi graph requires n >= 2");
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("erdos-renyi edge probability must be in (0, 1]");
  }
  constexpr int max_attempts = 1000;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Stream rng(derive_seed(seed + static_cast<std::uint64_t>(attempt),
                           "erdos-renyi"));
    Graph g;
    g.n = n;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (rng.uniform() < p) g.edges.emplace_back(i, j);
      }
    }
    if (is_connected(g)) return g;
  }
  throw ConnectivityFailure(
      "no connected graph within 1000 redraws (n=" + std::to_string(n) +
      ", p=" + format_full(p) + ")");
}

namespace detail {

// Deterministic unit start vector for the power iteration.
inline Eigen::VectorXd power_start(int n) {
  Eigen::VectorXd v(n);
  std::uint64_t state = 0x8a5cd789635d2dffull;
  for (int i = 0; i < n; ++i) {
    v[i] = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 - 0.5;
  }
  double norm = v.norm();
  if (norm == 0.0) v.setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  else v /= norm;
  return v;
}

// Spectral radius of the squared action x -> B(Bx), so eigenvalue sign
// symmetry cannot stall convergence. Relative tolerance 1e-10 on the
// Rayleigh quotient, at most 1e5 iterations.
inline double power_spectral_radius(const Eigen::MatrixXd& b) {
  const int n = static_cast<int>(b.rows());
  Eigen::VectorXd x = power_start(n);
  double rayleigh_prev = -1.0;
  constexpr int max_iters = 100000;
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::VectorXd y = b * (b * x);
    double rayleigh = x.dot(y);  // equals |Bx|^2 for unit x
    double norm = y.norm();
    if (norm == 0.0) return 0.0;
    x = y / norm;
    if (std::abs(rayleigh - rayleigh_prev) <=
        1e-10 * std::max(std::abs(rayleigh), 1e-30)) {
      return std::sqrt(std::max(rayleigh, 0.0));
    }
    rayleigh_prev = rayleigh;
  }
  throw ToleranceFailure(
      "power iteration did not converge to 1e-10 within 1e5 iterations");
}

}  // namespace detail

// Largest |eigenvalue| of a symmetric matrix. Dense solve up to n = 64,
// power iteration beyond.
inline double symmetric_spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("matrix must be square");
  if (m.rows() <= 64) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) {
      throw ToleranceFailure("dense symmetric eigensolver failed");
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
  }
  return detail::power_spectral_radius(m);
}

// rho(A - (1/n) 1 1'), the consensus contraction factor of a doubly
// stochastic mixing matrix.
inline double spectral_deviation(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  Eigen::MatrixXd shifted =
      a - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  return symmetric_spectral_radius(shifted);
}

// Symmetric doubly stochastic mixing weights with cached contraction factor.
struct MixingMatrix {
  int n = 0;
  Eigen::MatrixXd w;
  double rho_a = 0.0;
};

// Metropolis rule: w_ij = 1/(1 + max(deg_i, deg_j)) on edges, diagonal
// absorbs the remainder. Symmetric and doubly stochastic by construction.
inline MixingMatrix metropolis_weights(const Graph& g) {
  if (g.n < 1) throw ValidationError("graph must have at least one node");
  if (!is_connected(g)) {
    throw ValidationError("metropolis weights require a connected graph");
  }
  const auto deg = node_degrees(g);
  MixingMatrix mix;
  mix.n = g.n;
  mix.w = Eigen::MatrixXd::Zero(g.n, g.n);
  for (const auto& [i, j] : g.edges) {
    double wij = 1.0 / (1.0 + static_cast<double>(std::max(
                                  deg[static_cast<std::size_t>(i)],
                                  deg[static_cast<std::size_t>(j)])));
    mix.w(i, j) = wij;
    mix.w(j, i) = wij;
  }
  for (int i = 0; i < g.n; ++i) {
    mix.w(i, i) = 1.0 - mix.w.row(i).sum();
  }
  mix.rho_a = spectral_deviation(mix.w);
  return mix;
}

inline double spectral_deviation(const MixingMatrix& mix) {
  return spectral_deviation(mix.w);
}

inline bool check_doubly_stochastic(const Eigen::MatrixXd& a,
                                    double tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  const auto n = a.rows();
  if (a.minCoeff() < -tol) return false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(a.row(i).sum() - 1.0) > tol) return false;
    if (std::abs(a.col(i).sum() - 1.0) > tol) return false;
  }
  return true;
}

// rho(A - I) <= 2 holds for every doubly stochastic A; exceeding it
// indicates a malformed matrix.
inline bool check_shift_contraction(const Eigen::MatrixXd& a,
                                    double tol = 1e-12) {
  Eigen::MatrixXd shifted =
      a - Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return symmetric_spectral_radius(shifted) <= 2.0 + tol;
}

// Edge-list text format: first line the node count, then one "i j" pair
// per line, 0-based.
inline void save_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << g.n << "\n";
  for (const auto& [i, j] : g.edges) out << i << " " << j << "\n";
}

inline Graph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  Graph g;
  if (!(in >> g.n) || g.n < 1) {
    throw ParseError("edge list '" + path + "': bad node count");
  }
  int i = 0;
  int j = 0;
  while (in >> i >> j) {
    if (i < 0 || j < 0 || i >= g.n || j >= g.n || i == j) {
      throw ParseError("edge list '" + path + "': bad edge " +
                       std::to_string(i) + " " + std::to_string(j));
    }
    if (i > j) std::swap(i, j);
    g.edges.emplace_back(i, j);
  }
  return g;
}

// Full-precision CSV, one matrix row per line.
inline void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ",";
      out << format_full(m(i, j));
    }
    out << "\n";
  }
}

inline Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_doubles(line, path, rows.size() + 1));
  }
  if (rows.empty()) throw ParseError("matrix csv '" + path + "' is empty");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw ParseError("matrix csv '" + path + "': ragged row " +
                       std::to_string(i + 1));
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  return m;
}

}  // namespace dagt
