#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "dagt/errors.hpp"
#include "dagt/io.hpp"
#include "dagt/rng.hpp"

namespace dagt {

// A distributed objective f(x) = (1/n) sum_i f_i(x). Nodes see their own
// f_i through deterministic and stochastic gradient oracles.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual int node_count() const = 0;
  virtual int dim() const = 0;

  virtual double local_loss(int node, const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd local_grad(int node, const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd stochastic_grad(int node, const Eigen::VectorXd& x,
                                          Stream& rng) const = 0;

  // Smoothness constant of the local losses (upper bound).
  virtual double smoothness() const = 0;
  // Uniform bound on stochastic gradient norms; exact for the robust
  // regression losses, a documented heuristic otherwise.
  virtual double gradient_bound() const = 0;
  // Upper bound on the gradient noise standard deviation.
  virtual double noise_bound() const = 0;

  // One-line manifest so a run is reproducible from config alone.
  virtual std::string describe() const = 0;

  double global_loss(const Eigen::VectorXd& x) const {
    double total = 0.0;
    for (int i = 0; i < node_count(); ++i) total += local_loss(i, x);
    return total / static_cast<double>(node_count());
  }

  Eigen::VectorXd global_grad(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    for (int i = 0; i < node_count(); ++i) g += local_grad(i, x);
    return g / static_cast<double>(node_count());
  }

 protected:
  void check_dim(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) {
      throw DimensionMismatch("point has dimension " +
                              std::to_string(x.size()) + ", expected " +
                              std::to_string(dim()));
    }
  }
  void check_node(int node) const {
    if (node < 0 || node >= node_count()) {
      throw ValidationError("node index " + std::to_string(node) +
                            " out of range");
    }
  }
};

// ---------------------------------------------------------------------------
// Huber robust regression
// ---------------------------------------------------------------------------

inline double huber_value(double z, double varsigma) {
  double a = std::abs(z);
  if (a <= varsigma) return 0.5 * z * z;
  return varsigma * (a - 0.5 * varsigma);
}

// Derivative of the Huber function: the residual clipped to [-varsigma, varsigma].
inline double huber_psi(double z, double varsigma) {
  return std::clamp(z, -varsigma, varsigma);
}

// Zero-mean Gaussian truncated to [-threshold, threshold]; `variance` is the
// variance of the untruncated normal. Rejection sampling with a hard cap.
struct TruncGaussianSpec {
  double variance = 0.04;
  double threshold = 0.1;
};

inline double sample_truncated_gaussian(const TruncGaussianSpec& spec,
                                        Stream& rng) {
  if (!(spec.variance >= 0.0)) {
    throw ValidationError("truncated gaussian variance must be >= 0");
  }
  if (!(spec.threshold > 0.0)) {
    throw ValidationError("truncated gaussian threshold must be > 0");
  }
  const double stddev = std::sqrt(spec.variance);
  constexpr long cap = 1000000;
  for (long attempt = 0; attempt < cap; ++attempt) {
    double draw = rng.normal(0.0, stddev);
    if (std::abs(draw) <= spec.threshold) return draw;
  }
  throw InternalError("truncated gaussian rejection cap of 1e6 reached");
}

// f_i(x) = sum_j H(theta_i - Phi_i x)_j with symmetric PSD Phi_i and targets
// theta_i = Phi_i x* observed under bounded noise. Stochastic gradients
// resample the target noise on every query.
class HuberRegressionInstance : public Problem {
 public:
  HuberRegressionInstance(std::vector<Eigen::MatrixXd> phi,
                          Eigen::VectorXd x_star, double varsigma,
                          TruncGaussianSpec noise, std::string manifest)
      : phi_(std::move(phi)),
        x_star_(std::move(x_star)),
        varsigma_(varsigma),
        noise_(noise),
        manifest_(std::move(manifest)) {
    if (phi_.empty()) throw ValidationError("instance needs at least one node");
    if (!(varsigma_ > 0.0)) {
      throw ValidationError("huber width must be positive");
    }
    d_ = static_cast<int>(x_star_.size());
    max_phi_norm_ = 0.0;
    for (const auto& phi : phi_) {
      if (phi.rows() != d_ || phi.cols() != d_) {
        throw DimensionMismatch("regressor matrix has wrong shape");
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(phi);
      max_phi_norm_ =
          std::max(max_phi_norm_, solver.eigenvalues().cwiseAbs().maxCoeff());
      targets_.push_back(phi * x_star_);
    }
  }

  int node_count() const override { return static_cast<int>(phi_.size()); }
  int dim() const override { return d_; }

  // Deterministic oracles evaluate at the noise-free targets.
  double local_loss(int node, const Eigen::VectorXd& x) const override {
    check_node(node);
    check_dim(x);
    Eigen::VectorXd r = targets_[static_cast<std::size_t>(node)] -
                        phi_[static_cast<std::size_t>(node)] * x;
    double total = 0.0;
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      total += huber_value(r[j], varsigma_);
    }
    return total;
  }

  Eigen::VectorXd local_grad(int node, const Eigen::VectorXd& x) const override {
    check_node(node);
    check_dim(x);
    return grad_at_target(node, x, targets_[static_cast<std::size_t>(node)]);
  }

  // Gradient for an explicit (possibly noisy) target vector.
  Eigen::VectorXd grad_at_target(int node, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& theta) const {
    const auto& phi = phi_[static_cast<std::size_t>(node)];
    Eigen::VectorXd r = theta - phi * x;
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      r[j] = huber_psi(r[j], varsigma_);
    }
    return -phi.transpose() * r;
  }

  Eigen::VectorXd stochastic_grad(int node, const Eigen::VectorXd& x,
                                  Stream& rng) const override {
    check_node(node);
    check_dim(x);
    Eigen::VectorXd theta = targets_[static_cast<std::size_t>(node)];
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      theta[j] += sample_truncated_gaussian(noise_, rng);
    }
    return grad_at_target(node, x, theta);
  }

  double smoothness() const override { return max_phi_norm_ * max_phi_norm_; }

  // |Phi' psi(r)| <= |Phi| * sqrt(d) * varsigma holds for every sample.
  double gradient_bound() const override {
    return varsigma_ * std::sqrt(static_cast<double>(d_)) * max_phi_norm_;
  }

  // psi is 1-Lipschitz, so the noise perturbs the gradient by at most
  // |Phi| * |eta| <= |Phi| * sqrt(d) * threshold.
  double noise_bound() const override {
    return max_phi_norm_ * std::sqrt(static_cast<double>(d_)) *
           noise_.threshold;
  }

  std::string describe() const override { return manifest_; }

  const Eigen::VectorXd& x_star() const { return x_star_; }
  const Eigen::MatrixXd& regressor(int node) const {
    return phi_[static_cast<std::size_t>(node)];
  }
  const Eigen::VectorXd& target(int node) const {
    return targets_[static_cast<std::size_t>(node)];
  }
  double varsigma() const { return varsigma_; }
  const TruncGaussianSpec& noise_spec() const { return noise_; }

 private:
  std::vector<Eigen::MatrixXd> phi_;
  std::vector<Eigen::VectorXd> targets_;
  Eigen::VectorXd x_star_;
  double varsigma_;
  TruncGaussianSpec noise_;
  std::string manifest_;
  int d_ = 0;
  double max_phi_norm_ = 0.0;
};

namespace detail {

// Random symmetric matrix with eigenvalues drawn uniformly from
// [eig_lo, eig_hi]; the eigenbasis comes from a QR factorization of a
// Gaussian matrix.
inline Eigen::MatrixXd random_psd_matrix(int d, double eig_lo, double eig_hi,
                                         Stream& rng) {
  Eigen::MatrixXd gauss(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd eigs(d);
  for (int i = 0; i < d; ++i) eigs[i] = rng.uniform(eig_lo, eig_hi);
  Eigen::MatrixXd m = q * eigs.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

}  // namespace detail

// Seeded factory: x* uniform on [-1, 1]^d, regressors with spectra in
// [0.05, 1] so the instances are ill conditioned but bounded.
inline HuberRegressionInstance make_huber_instance(int n, int d,
                                                   double varsigma,
                                                   TruncGaussianSpec noise,
                                                   std::uint64_t seed) {
  if (n < 1 || d < 1) throw ValidationError("need n >= 1 and d >= 1");
  Stream rng(derive_seed(seed, "huber-instance"));
  Eigen::VectorXd x_star(d);
  for (int j = 0; j < d; ++j) x_star[j] = rng.uniform(-1.0, 1.0);
  std::vector<Eigen::MatrixXd> phi;
  phi.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    phi.push_back(detail::random_psd_matrix(d, 0.05, 1.0, rng));
  }
  std::string manifest = "huber n=" + std::to_string(n) +
                         " d=" + std::to_string(d) +
                         " varsigma=" + format_full(varsigma) +
                         " noise_variance=" + format_full(noise.variance) +
                         " noise_threshold=" + format_full(noise.threshold) +
                         " seed=" + std::to_string(seed);
  return HuberRegressionInstance(std::move(phi), std::move(x_star), varsigma,
                                 noise, std::move(manifest));
}

// ---------------------------------------------------------------------------
// Multiclass logistic regression with a Geman-McClure regularizer
// ---------------------------------------------------------------------------

// h(W) = sum of 0.01 w^2 / (1 + w^2) over the entries of W.
inline double geman_mcclure_value(const Eigen::MatrixXd& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double v = w(i, j);
      total += 0.01 * v * v / (1.0 + v * v);
    }
  }
  return total;
}

inline Eigen::MatrixXd geman_mcclure_grad(const Eigen::MatrixXd& w) {
  Eigen::MatrixXd g(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double v = w(i, j);
      double denom = 1.0 + v * v;
      g(i, j) = 0.02 * v / (denom * denom);
    }
  }
  return g;
}

struct Dataset {
  Eigen::MatrixXd features;  // one sample per row
  std::vector<int> labels;
  int classes = 0;

  int sample_count() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

// CSV rows are feature values followed by an integer class label in [0, c).
// When `classes` is not given it is inferred as max label + 1.
inline Dataset load_dataset_csv(const std::string& path, int classes = 0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto values = split_doubles(line, path, lineno);
    if (values.size() < 2) {
      throw ParseError(path + ": row " + std::to_string(lineno) +
                       ": need at least one feature and a label");
    }
    if (!rows.empty() && values.size() != rows[0].size()) {
      throw ParseError(path + ": row " + std::to_string(lineno) +
                       ": inconsistent column count");
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  Dataset data;
  const std::size_t cols = rows[0].size();
  data.features.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(cols - 1));
  data.labels.reserve(rows.size());
  int max_label = -1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double raw = rows[r][cols - 1];
    double rounded = std::nearbyint(raw);
    if (std::abs(raw - rounded) > 1e-9 || rounded < 0.0) {
      throw LabelOutOfRange(path + ": row " + std::to_string(r + 1) +
                            ": label must be a nonnegative integer");
    }
    int label = static_cast<int>(rounded);
    if (classes > 0 && label >= classes) {
      throw LabelOutOfRange(path + ": row " + std::to_string(r + 1) +
                            ": label " + std::to_string(label) +
                            " >= class count " + std::to_string(classes));
    }
    max_label = std::max(max_label, label);
    data.labels.push_back(label);
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      data.features(static_cast<Eigen::Index>(r),
                    static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  data.classes = classes > 0 ? classes : max_label + 1;
  if (data.classes < 2) {
    throw ValidationError(path + ": need at least two classes");
  }
  return data;
}

// Round-robin split: sample k goes to node k mod n. Every node must end up
// with at least one sample.
inline std::vector<Dataset> partition_even(const Dataset& data, int n) {
  if (n < 1) throw ValidationError("need n >= 1 nodes");
  if (data.sample_count() < n) {
    throw EmptyLocalDataset("dataset has " +
                            std::to_string(data.sample_count()) +
                            " samples for " + std::to_string(n) + " nodes");
  }
  std::vector<Dataset> parts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int count = (data.sample_count() - i + n - 1) / n;
    parts[static_cast<std::size_t>(i)].features.resize(count,
                                                       data.feature_dim());
    parts[static_cast<std::size_t>(i)].classes = data.classes;
  }
  std::vector<int> filled(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < data.sample_count(); ++k) {
    int node = k % n;
    auto& part = parts[static_cast<std::size_t>(node)];
    part.features.row(filled[static_cast<std::size_t>(node)]++) =
        data.features.row(k);
    part.labels.push_back(data.labels[static_cast<std::size_t>(k)]);
  }
  return parts;
}

// f_i(W) = mean cross-entropy over the local samples + h(W). The decision
// variable is W (classes x feature_dim) flattened row major.
class LogisticGMInstance : public Problem {
 public:
  LogisticGMInstance(std::vector<Dataset> parts, int batch_size)
      : parts_(std::move(parts)), batch_size_(batch_size) {
    if (parts_.empty()) throw ValidationError("instance needs >= 1 node");
    if (batch_size_ < 1) throw ValidationError("batch size must be >= 1");
    classes_ = parts_[0].classes;
    feat_dim_ = parts_[0].feature_dim();
    max_feat_norm_ = 0.0;
    for (const auto& part : parts_) {
      if (part.sample_count() == 0) {
        throw EmptyLocalDataset("a node received no samples");
      }
      if (part.classes != classes_ || part.feature_dim() != feat_dim_) {
        throw DimensionMismatch("partition shapes disagree");
      }
      for (int k = 0; k < part.sample_count(); ++k) {
        if (part.labels[static_cast<std::size_t>(k)] >= classes_) {
          throw LabelOutOfRange("label exceeds class count");
        }
        max_feat_norm_ = std::max(max_feat_norm_, part.features.row(k).norm());
      }
    }
  }

  int node_count() const override { return static_cast<int>(parts_.size()); }
  int dim() const override { return classes_ * feat_dim_; }
  int classes() const { return classes_; }
  int feature_dim() const { return feat_dim_; }
  int batch_size() const { return batch_size_; }
  const Dataset& part(int node) const {
    return parts_[static_cast<std::size_t>(node)];
  }

  using RowMajorMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>;

  RowMajorMap as_weight_matrix(const Eigen::VectorXd& x) const {
    check_dim(x);
    return RowMajorMap(x.data(), classes_, feat_dim_);
  }

  double local_loss(int node, const Eigen::VectorXd& x) const override {
    check_node(node);
    auto w = as_weight_matrix(x);
    const auto& part = parts_[static_cast<std::size_t>(node)];
    double total = 0.0;
    for (int k = 0; k < part.sample_count(); ++k) {
      total += sample_loss(w, part, k);
    }
    return total / part.sample_count() + geman_mcclure_value(w);
  }

  Eigen::VectorXd local_grad(int node, const Eigen::VectorXd& x) const override {
    check_node(node);
    const auto& part = parts_[static_cast<std::size_t>(node)];
    std::vector<int> all(static_cast<std::size_t>(part.sample_count()));
    for (int k = 0; k < part.sample_count(); ++k)
      all[static_cast<std::size_t>(k)] = k;
    return batch_grad(node, x, all);
  }

  // Mean cross-entropy gradient over the given sample indices plus the
  // regularizer gradient. With indices = {0..m-1} this is the exact local
  // gradient, which is what the samplers below build on.
  Eigen::VectorXd batch_grad(int node, const Eigen::VectorXd& x,
                             const std::vector<int>& indices) const {
    check_node(node);
    auto w = as_weight_matrix(x);
    const auto& part = parts_[static_cast<std::size_t>(node)];
    if (indices.empty()) throw ValidationError("batch must be nonempty");
    Eigen::MatrixXd grad_w = Eigen::MatrixXd::Zero(classes_, feat_dim_);
    for (int k : indices) {
      if (k < 0 || k >= part.sample_count()) {
        throw ValidationError("batch index out of range");
      }
      Eigen::VectorXd p = softmax(w * part.features.row(k).transpose());
      p[part.labels[static_cast<std::size_t>(k)]] -= 1.0;
      grad_w.noalias() += p * part.features.row(k);
    }
    grad_w /= static_cast<double>(indices.size());
    grad_w += geman_mcclure_grad(w);
    return flatten(grad_w);
  }

  // Uniform sampling with replacement.
  Eigen::VectorXd stochastic_grad(int node, const Eigen::VectorXd& x,
                                  Stream& rng) const override {
    check_node(node);
    const auto& part = parts_[static_cast<std::size_t>(node)];
    std::vector<int> batch(static_cast<std::size_t>(batch_size_));
    for (int b = 0; b < batch_size_; ++b) {
      batch[static_cast<std::size_t>(b)] = rng.uniform_int(part.sample_count());
    }
    return batch_grad(node, x, batch);
  }

  // Cross-entropy logit curvature is at most 1/2; the regularizer adds its
  // per-entry curvature peak 0.02.
  double smoothness() const override {
    return 0.5 * max_feat_norm_ * max_feat_norm_ + 0.02;
  }

  // |softmax - onehot| <= sqrt(2) bounds the data term; the regularizer
  // gradient entries peak at 0.02 * 3 sqrt(3) / 16.
  double gradient_bound() const override {
    constexpr double gm_entry_peak = 0.0064951905283832895;
    return std::sqrt(2.0) * max_feat_norm_ +
           gm_entry_peak * std::sqrt(static_cast<double>(dim()));
  }

  double noise_bound() const override {
    return 2.0 * std::sqrt(2.0) * max_feat_norm_ /
           std::sqrt(static_cast<double>(batch_size_));
  }

  std::string describe() const override {
    return "logistic-gm n=" + std::to_string(node_count()) +
           " classes=" + std::to_string(classes_) +
           " feature_dim=" + std::to_string(feat_dim_) +
           " batch_size=" + std::to_string(batch_size_);
  }

 private:
  static double sample_loss(const RowMajorMap& w, const Dataset& part, int k) {
    Eigen::VectorXd logits = w * part.features.row(k).transpose();
    double peak = logits.maxCoeff();
    double lse = std::log((logits.array() - peak).exp().sum()) + peak;
    return lse - logits[part.labels[static_cast<std::size_t>(k)]];
  }

  static Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
    Eigen::ArrayXd e = shifted.exp();
    return (e / e.sum()).matrix();
  }

  Eigen::VectorXd flatten(const Eigen::MatrixXd& m) const {
    Eigen::VectorXd out(dim());
    for (int i = 0; i < classes_; ++i)
      for (int j = 0; j < feat_dim_; ++j) out[i * feat_dim_ + j] = m(i, j);
    return out;
  }

  std::vector<Dataset> parts_;
  int batch_size_;
  int classes_ = 0;
  int feat_dim_ = 0;
  double max_feat_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Heterogeneous quadratic with a closed-form optimum (verification oracle)
// ---------------------------------------------------------------------------

// f_i(x) = x' Q_i x / 2 - b_i' x with symmetric PSD Q_i. Gradient noise is
// additive isotropic Gaussian with standard deviation sigma.
class QuadraticInstance : public Problem {
 public:
  QuadraticInstance(std::vector<Eigen::MatrixXd> q,
                    std::vector<Eigen::VectorXd> b, double noise_std,
                    std::string manifest)
      : q_(std::move(q)),
        b_(std::move(b)),
        noise_std_(noise_std),
        manifest_(std::move(manifest)) {
    if (q_.empty() || q_.size() != b_.size()) {
      throw ValidationError("need matching Q and b lists");
    }
    if (!(noise_std_ >= 0.0)) {
      throw ValidationError("noise level must be >= 0");
    }
    d_ = static_cast<int>(b_[0].size());
    max_q_norm_ = 0.0;
    double max_b_norm = 0.0;
    for (std::size_t i = 0; i < q_.size(); ++i) {
      if (q_[i].rows() != d_ || q_[i].cols() != d_ || b_[i].size() != d_) {
        throw DimensionMismatch("quadratic term shapes disagree");
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(q_[i]);
      max_q_norm_ =
          std::max(max_q_norm_, solver.eigenvalues().cwiseAbs().maxCoeff());
      max_b_norm = std::max(max_b_norm, b_[i].norm());
    }
    // Ball heuristic: valid while iterates stay within radius 2 of the
    // origin-centered unit box that the factories initialize in.
    g_heuristic_ = max_q_norm_ * (2.0 + x_star().norm()) + max_b_norm;
  }

  int node_count() const override { return static_cast<int>(q_.size()); }
  int dim() const override { return d_; }

  double local_loss(int node, const Eigen::VectorXd& x) const override {
    check_node(node);
    check_dim(x);
    const auto i = static_cast<std::size_t>(node);
    return 0.5 * x.dot(q_[i] * x) - b_[i].dot(x);
  }

  Eigen::VectorXd local_grad(int node, const Eigen::VectorXd& x) const override {
    check_node(node);
    check_dim(x);
    const auto i = static_cast<std::size_t>(node);
    return q_[i] * x - b_[i];
  }

  Eigen::VectorXd stochastic_grad(int node, const Eigen::VectorXd& x,
                                  Stream& rng) const override {
    Eigen::VectorXd g = local_grad(node, x);
    if (noise_std_ > 0.0) {
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        g[j] += rng.normal(0.0, noise_std_);
      }
    }
    return g;
  }

  double smoothness() const override { return max_q_norm_; }
  double gradient_bound() const override { return g_heuristic_; }
  double noise_bound() const override {
    return noise_std_ * std::sqrt(static_cast<double>(d_));
  }
  std::string describe() const override { return manifest_; }

  // Global minimizer of the averaged objective; requires mean(Q) invertible.
  Eigen::VectorXd x_star() const {
    Eigen::MatrixXd q_bar = Eigen::MatrixXd::Zero(d_, d_);
    Eigen::VectorXd b_bar = Eigen::VectorXd::Zero(d_);
    for (std::size_t i = 0; i < q_.size(); ++i) {
      q_bar += q_[i];
      b_bar += b_[i];
    }
    q_bar /= static_cast<double>(q_.size());
    b_bar /= static_cast<double>(q_.size());
    return q_bar.ldlt().solve(b_bar);
  }

  double optimum_value() const { return global_loss(x_star()); }

  const Eigen::MatrixXd& quadratic_term(int node) const {
    return q_[static_cast<std::size_t>(node)];
  }
  const Eigen::VectorXd& linear_term(int node) const {
    return b_[static_cast<std::size_t>(node)];
  }
  double noise_std() const { return noise_std_; }

 private:
  std::vector<Eigen::MatrixXd> q_;
  std::vector<Eigen::VectorXd> b_;
  double noise_std_;
  std::string manifest_;
  int d_ = 0;
  double max_q_norm_ = 0.0;
  double g_heuristic_ = 0.0;
};

// Seeded heterogeneous quadratic: all nodes share the global minimizer
// x_opt but their local minimizers are displaced by zero-mean offsets of
// the given scale.
inline QuadraticInstance make_quadratic_instance(int n, int d,
                                                 std::uint64_t seed,
                                                 double eig_lo, double eig_hi,
                                                 double heterogeneity,
                                                 double noise_std) {
  if (n < 1 || d < 1) throw ValidationError("need n >= 1 and d >= 1");
  if (!(eig_lo > 0.0 && eig_hi >= eig_lo)) {
    throw ValidationError("need 0 < eig_lo <= eig_hi");
  }
  Stream rng(derive_seed(seed, "quadratic-instance"));
  Eigen::VectorXd x_opt(d);
  for (int j = 0; j < d; ++j) x_opt[j] = rng.uniform(-1.0, 1.0);
  std::vector<Eigen::MatrixXd> q;
  std::vector<Eigen::VectorXd> deltas;
  Eigen::VectorXd delta_mean = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) {
    q.push_back(detail::random_psd_matrix(d, eig_lo, eig_hi, rng));
    Eigen::VectorXd delta(d);
    for (int j = 0; j < d; ++j) delta[j] = heterogeneity * rng.normal();
    deltas.push_back(delta);
    delta_mean += delta;
  }
  delta_mean /= static_cast<double>(n);
  std::vector<Eigen::VectorXd> b;
  for (int i = 0; i < n; ++i) {
    b.push_back(q[static_cast<std::size_t>(i)] * x_opt +
                (deltas[static_cast<std::size_t>(i)] - delta_mean));
  }
  std::string manifest =
      "quadratic n=" + std::to_string(n) + " d=" + std::to_string(d) +
      " eig=[" + format_full(eig_lo) + "," + format_full(eig_hi) + "]" +
      " heterogeneity=" + format_full(heterogeneity) +
      " sigma=" + format_full(noise_std) + " seed=" + std::to_string(seed);
  return QuadraticInstance(std::move(q), std::move(b), noise_std,
                           std::move(manifest));
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

// Central differences of the deterministic local loss with per-coordinate
// step h * (1 + |x_j|).
inline Eigen::VectorXd finite_diff_grad(const Problem& problem, int node,
                                        const Eigen::VectorXd& x,
                                        double h = 1e-6) {
  if (!(h > 0.0)) throw ValidationError("step must be positive");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double step = h * (1.0 + std::abs(x[j]));
    probe[j] = x[j] + step;
    double up = problem.local_loss(node, probe);
    probe[j] = x[j] - step;
    double down = problem.local_loss(node, probe);
    probe[j] = x[j];
    grad[j] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace dagt
