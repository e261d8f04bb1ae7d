#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "dagt/problems.hpp"
#include "dagt/rng.hpp"

using namespace dagt;

TEST_CASE("huber value and derivative") {
  REQUIRE(huber_value(0.0, 1.0) == 0.0);
  REQUIRE(huber_value(0.5, 1.0) == Catch::Approx(0.125));
  REQUIRE(huber_value(2.0, 1.0) == Catch::Approx(1.5));
  REQUIRE(huber_value(-2.0, 1.0) == Catch::Approx(1.5));
  REQUIRE(huber_psi(0.4, 1.0) == 0.4);
  REQUIRE(huber_psi(3.0, 1.0) == 1.0);
  REQUIRE(huber_psi(-3.0, 1.0) == -1.0);

  // Value and slope are continuous across the quadratic/linear switch.
  const double s = 0.7;
  REQUIRE(huber_value(s + 1e-12, s) ==
          Catch::Approx(huber_value(s - 1e-12, s)).margin(1e-11));
  double slope_in = (huber_value(s, s) - huber_value(s - 1e-7, s)) / 1e-7;
  double slope_out = (huber_value(s + 1e-7, s) - huber_value(s, s)) / 1e-7;
  REQUIRE(slope_in == Catch::Approx(slope_out).margin(1e-6));
  REQUIRE(slope_in == Catch::Approx(s).margin(1e-6));
}

TEST_CASE("truncated gaussian sampler") {
  TruncGaussianSpec spec{0.04, 0.1};
  Stream rng(101);
  double sum = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    double u = sample_truncated_gaussian(spec, rng);
    REQUIRE(std::abs(u) <= 0.1);
    sum += u;
  }
  // The untruncated standard deviation 0.2 bounds the truncated one.
  REQUIRE(std::abs(sum / draws) <= 3.0 * 0.2 / std::sqrt(double(draws)));

  TruncGaussianSpec narrow{1e-18, 0.1};
  for (int i = 0; i < 100; ++i) {
    REQUIRE(std::abs(sample_truncated_gaussian(narrow, rng)) <= 1e-8);
  }

  Stream rng2(11);
  TruncGaussianSpec hopeless{1.0, 1e-12};
  REQUIRE_THROWS_AS(sample_truncated_gaussian(hopeless, rng2), InternalError);

  Stream a(5);
  Stream b(5);
  REQUIRE(sample_truncated_gaussian(spec, a) ==
          sample_truncated_gaussian(spec, b));
}

TEST_CASE("huber instance basics") {
  HuberRegressionInstance inst = make_huber_instance(6, 4, 1.0, {0.04, 0.1}, 3);
  REQUIRE(inst.node_count() == 6);
  REQUIRE(inst.dim() == 4);

  // Deterministic gradient vanishes at the generating point.
  for (int i = 0; i < 6; ++i) {
    REQUIRE(inst.local_grad(i, inst.x_star()).norm() < 1e-14);
    REQUIRE(inst.local_loss(i, inst.x_star()) < 1e-14);
  }

  // Regressor spectra live in [0.05, 1].
  for (int i = 0; i < 6; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inst.regressor(i));
    REQUIRE(es.eigenvalues().minCoeff() >= 0.05 - 1e-10);
    REQUIRE(es.eigenvalues().maxCoeff() <= 1.0 + 1e-10);
  }
  REQUIRE(inst.smoothness() <= 1.0 + 1e-9);
  REQUIRE(inst.gradient_bound() == Catch::Approx(
      std::sqrt(4.0) * std::sqrt(inst.smoothness())).epsilon(1e-12));

  // Same seed, same instance.
  HuberRegressionInstance again =
      make_huber_instance(6, 4, 1.0, {0.04, 0.1}, 3);
  REQUIRE((inst.x_star() - again.x_star()).norm() == 0.0);
  REQUIRE((inst.regressor(2) - again.regressor(2)).norm() == 0.0);

  // One-dimensional instances degenerate to a scalar in [0.05, 1].
  HuberRegressionInstance scalar =
      make_huber_instance(2, 1, 1.0, {0.04, 0.1}, 9);
  REQUIRE(scalar.regressor(0)(0, 0) >= 0.05);
  REQUIRE(scalar.regressor(0)(0, 0) <= 1.0);
}

TEST_CASE("huber gradients match central differences") {
  HuberRegressionInstance inst =
      make_huber_instance(4, 5, 1.0, {0.04, 0.1}, 17);
  Stream rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = rng.uniform(-2.0, 2.0);
    int node = trial % 4;
    Eigen::VectorXd analytic = inst.local_grad(node, x);
    Eigen::VectorXd numeric = finite_diff_grad(inst, node, x, 1e-6);
    double rel = (analytic - numeric).norm() /
                 std::max(analytic.norm(), 1e-12);
    REQUIRE(rel <= 1e-5);
  }
}

TEST_CASE("huber stochastic gradients are bounded and unbiased") {
  HuberRegressionInstance inst =
      make_huber_instance(3, 4, 1.0, {0.04, 0.1}, 29);
  const double g_bound = inst.gradient_bound();
  Stream rng(31);

  // Every sampled gradient obeys the uniform bound exactly.
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x[j] = rng.uniform(-3.0, 3.0);
    Eigen::VectorXd g = inst.stochastic_grad(trial % 3, x, rng);
    REQUIRE(g.norm() <= g_bound + 1e-12);
  }

  // At a point whose residuals stay clear of the clipping boundary the
  // noise averages out exactly; compare against the deterministic gradient.
  Eigen::VectorXd x = inst.x_star();
  x[0] += 0.3;  // residuals stay within (-0.9, 0.9) plus noise
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(4);
  const int draws = 10000;
  Stream noise_rng(37);
  for (int k = 0; k < draws; ++k) {
    Eigen::VectorXd g = inst.stochastic_grad(1, x, noise_rng);
    mean += g;
    second += g.cwiseProduct(g);
  }
  mean /= draws;
  second /= draws;
  Eigen::VectorXd reference = inst.local_grad(1, x);
  for (int j = 0; j < 4; ++j) {
    double sd = std::sqrt(std::max(second[j] - mean[j] * mean[j], 0.0));
    double tol = 4.0 * sd / std::sqrt(double(draws)) + 1e-12;
    REQUIRE(std::abs(mean[j] - reference[j]) <= tol);
  }

  // Noise below machine precision reduces to the deterministic oracle.
  HuberRegressionInstance quiet =
      make_huber_instance(3, 4, 1.0, {1e-30, 0.1}, 29);
  Stream tiny(41);
  Eigen::VectorXd gq = quiet.stochastic_grad(0, x, tiny);
  REQUIRE((gq - quiet.local_grad(0, x)).norm() < 1e-12);
}

namespace {

// E[psi(c + u)] for u truncated-gaussian: piecewise composite Simpson
// between the clipping switch points.
double expected_clipped_residual(double c, double varsigma,
                                 const TruncGaussianSpec& spec) {
  const double sd = std::sqrt(spec.variance);
  const double thr = spec.threshold;
  const double z = std::erf(thr / (sd * std::sqrt(2.0)));
  auto density = [&](double u) {
    return std::exp(-0.5 * u * u / (sd * sd)) /
           (sd * std::sqrt(2.0 * M_PI)) / z;
  };
  auto integrand = [&](double u) {
    return huber_psi(c + u, varsigma) * density(u);
  };
  std::vector<double> cuts = {-thr, thr};
  for (double kink : {varsigma - c, -varsigma - c}) {
    if (kink > -thr && kink < thr) cuts.push_back(kink);
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double a = cuts[p];
    const double b = cuts[p + 1];
    const int panels = 2000;
    const double h = (b - a) / (2 * panels);
    double sum = integrand(a) + integrand(b);
    for (int k = 1; k < 2 * panels; ++k) {
      sum += integrand(a + k * h) * (k % 2 == 1 ? 4.0 : 2.0);
    }
    total += sum * h / 3.0;
  }
  return total;
}

}  // namespace

TEST_CASE("huber stochastic gradient matches the quadrature expectation") {
  // A narrow clipping width makes the noise interact with the clipping, so
  // the expectation differs from the plug-in gradient and the quadrature
  // oracle is the only reference.
  const double varsigma = 0.3;
  TruncGaussianSpec spec{0.04, 0.1};
  HuberRegressionInstance inst = make_huber_instance(1, 2, varsigma, spec, 55);

  Eigen::VectorXd c_target(2);
  c_target << 0.25, -0.32;  // both within reach of the clip boundary
  Eigen::VectorXd x =
      inst.x_star() - inst.regressor(0).ldlt().solve(c_target);
  Eigen::VectorXd residual = inst.target(0) - inst.regressor(0) * x;
  REQUIRE((residual - c_target).norm() < 1e-10);

  Eigen::VectorXd psi_mean(2);
  for (int j = 0; j < 2; ++j) {
    psi_mean[j] = expected_clipped_residual(c_target[j], varsigma, spec);
  }
  Eigen::VectorXd expected = -inst.regressor(0).transpose() * psi_mean;

  // The plug-in gradient must differ here, otherwise the fixture is weak.
  REQUIRE((expected - inst.local_grad(0, x)).norm() > 1e-4);

  const int draws = 40000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(2);
  Stream rng(77);
  for (int k = 0; k < draws; ++k) {
    Eigen::VectorXd g = inst.stochastic_grad(0, x, rng);
    mean += g;
    second += g.cwiseProduct(g);
  }
  mean /= draws;
  second /= draws;
  for (int j = 0; j < 2; ++j) {
    double sd = std::sqrt(std::max(second[j] - mean[j] * mean[j], 0.0));
    double tol = 4.0 * sd / std::sqrt(double(draws)) + 1e-12;
    REQUIRE(std::abs(mean[j] - expected[j]) <= tol);
  }
}

TEST_CASE("huber smoothness constant bounds gradient variation") {
  HuberRegressionInstance inst =
      make_huber_instance(3, 5, 1.0, {0.04, 0.1}, 61);
  const double L = inst.smoothness();
  Stream rng(67);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(5), y(5);
    for (int j = 0; j < 5; ++j) {
      x[j] = rng.uniform(-3.0, 3.0);
      y[j] = rng.uniform(-3.0, 3.0);
    }
    int node = trial % 3;
    double lhs = (inst.local_grad(node, x) - inst.local_grad(node, y)).norm();
    REQUIRE(lhs <= L * (x - y).norm() * (1.0 + 1e-9) + 1e-12);
  }
}

TEST_CASE("geman-mcclure value and gradient") {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 3);
  REQUIRE(geman_mcclure_value(zero) == 0.0);
  REQUIRE(geman_mcclure_grad(zero).norm() == 0.0);

  Eigen::MatrixXd one = Eigen::MatrixXd::Constant(1, 1, 1.0);
  REQUIRE(geman_mcclure_value(one) == Catch::Approx(0.005));
  REQUIRE(geman_mcclure_grad(one)(0, 0) == Catch::Approx(0.005));

  // Saturation: the value never exceeds 0.01 per entry.
  Eigen::MatrixXd large = Eigen::MatrixXd::Constant(2, 2, 1e9);
  REQUIRE(geman_mcclure_value(large) <= 0.01 * 4.0);
  REQUIRE(geman_mcclure_value(large) >= 0.0399);

  // Grid oracle for the maximal gradient entry magnitude.
  double grid_max = 0.0;
  for (double w = -10.0; w <= 10.0; w += 1e-4) {
    double denom = 1.0 + w * w;
    grid_max = std::max(grid_max, std::abs(0.02 * w / (denom * denom)));
  }
  const double analytic_peak = 0.02 * 3.0 * std::sqrt(3.0) / 16.0;
  REQUIRE(grid_max == Catch::Approx(analytic_peak).epsilon(1e-6));
  Stream rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd w(3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) w(i, j) = rng.uniform(-5.0, 5.0);
    REQUIRE(geman_mcclure_grad(w).cwiseAbs().maxCoeff() <=
            analytic_peak + 1e-12);
  }
}

namespace {

Dataset synthetic_dataset(int rows, int feat_dim, int classes,
                          std::uint64_t seed) {
  Dataset data;
  data.classes = classes;
  data.features.resize(rows, feat_dim);
  Stream rng(seed);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < feat_dim; ++c) {
      data.features(r, c) = rng.uniform(-2.0, 2.0);
    }
    data.labels.push_back(rng.uniform_int(classes));
  }
  return data;
}

}  // namespace

TEST_CASE("logistic loss at zero logits is log(classes)") {
  Dataset data;
  data.classes = 2;
  data.features = Eigen::MatrixXd::Zero(2, 3);  // zero features, zero logits
  data.labels = {0, 1};
  LogisticGMInstance inst({data, data}, 1);
  Stream rng(3);
  Eigen::VectorXd w(6);
  for (int j = 0; j < 6; ++j) w[j] = rng.uniform(-2.0, 2.0);
  double expected = std::log(2.0) +
                    geman_mcclure_value(inst.as_weight_matrix(w));
  REQUIRE(inst.local_loss(0, w) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("logistic gradient at w = 0 reduces to the class-residual form") {
  Dataset data = synthetic_dataset(8, 3, 3, 5);
  LogisticGMInstance inst({data}, 4);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(9);
  Eigen::VectorXd grad = inst.local_grad(0, w);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
  for (int k = 0; k < 8; ++k) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    p[data.labels[static_cast<std::size_t>(k)]] -= 1.0;
    expected += p * data.features.row(k);
  }
  expected /= 8.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      REQUIRE(grad[i * 3 + j] == Catch::Approx(expected(i, j)).margin(1e-14));
    }
  }
}

TEST_CASE("logistic gradients match central differences") {
  Dataset data = synthetic_dataset(12, 4, 3, 7);
  auto parts = partition_even(data, 3);
  LogisticGMInstance inst(parts, 4);
  Stream rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd w(12);
    for (int j = 0; j < 12; ++j) w[j] = rng.uniform(-1.5, 1.5);
    int node = trial % 3;
    Eigen::VectorXd analytic = inst.local_grad(node, w);
    Eigen::VectorXd numeric = finite_diff_grad(inst, node, w, 1e-6);
    double rel = (analytic - numeric).norm() /
                 std::max(analytic.norm(), 1e-12);
    REQUIRE(rel <= 1e-5);
  }
}

TEST_CASE("full-batch identity sampling equals the local gradient") {
  Dataset data = synthetic_dataset(10, 3, 2, 19);
  LogisticGMInstance inst({data}, 10);
  Stream rng(23);
  Eigen::VectorXd w(6);
  for (int j = 0; j < 6; ++j) w[j] = rng.uniform(-1.0, 1.0);
  std::vector<int> identity(10);
  for (int k = 0; k < 10; ++k) identity[static_cast<std::size_t>(k)] = k;
  Eigen::VectorXd batch = inst.batch_grad(0, w, identity);
  Eigen::VectorXd full = inst.local_grad(0, w);
  REQUIRE((batch - full).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("logistic stochastic gradients are deterministic and unbiased") {
  Dataset data = synthetic_dataset(9, 3, 3, 29);
  LogisticGMInstance inst({data}, 3);
  Eigen::VectorXd w(9);
  Stream wrng(31);
  for (int j = 0; j < 9; ++j) w[j] = wrng.uniform(-1.0, 1.0);

  Stream a(37);
  Stream b(37);
  REQUIRE((inst.stochastic_grad(0, w, a) - inst.stochastic_grad(0, w, b))
              .norm() == 0.0);

  const int draws = 20000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(9);
  Stream rng(41);
  for (int k = 0; k < draws; ++k) {
    Eigen::VectorXd g = inst.stochastic_grad(0, w, rng);
    mean += g;
    second += g.cwiseProduct(g);
  }
  mean /= draws;
  second /= draws;
  Eigen::VectorXd reference = inst.local_grad(0, w);
  for (int j = 0; j < 9; ++j) {
    double sd = std::sqrt(std::max(second[j] - mean[j] * mean[j], 0.0));
    double tol = 4.0 * sd / std::sqrt(double(draws)) + 1e-12;
    REQUIRE(std::abs(mean[j] - reference[j]) <= tol);
  }
}

TEST_CASE("csv datasets load, validate and partition") {
  const std::string path = "problems_dataset_test.csv";
  {
    std::ofstream out(path);
    out << "# toy data\n";
    for (int k = 0; k < 33; ++k) {
      out << 0.1 * k << "," << -0.2 * k << "," << (k % 3) << "\n";
    }
  }
  Dataset data = load_dataset_csv(path);
  REQUIRE(data.sample_count() == 33);
  REQUIRE(data.feature_dim() == 2);
  REQUIRE(data.classes == 3);

  auto parts = partition_even(data, 16);
  REQUIRE(parts.size() == 16);
  REQUIRE(parts[0].sample_count() == 3);  // rows 0, 16, 32
  for (int i = 1; i < 16; ++i) {
    REQUIRE(parts[static_cast<std::size_t>(i)].sample_count() == 2);
  }
  REQUIRE(parts[0].features(1, 0) == Catch::Approx(1.6));
  REQUIRE(parts[5].labels[0] == 5 % 3);

  auto pairs = partition_even(data, 1);
  REQUIRE(pairs[0].sample_count() == 33);
  REQUIRE_THROWS_AS(partition_even(data, 34), EmptyLocalDataset);
  REQUIRE_THROWS_AS(load_dataset_csv(path, 2), LabelOutOfRange);
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "1.0,2.0,0\n";
    out << "1.0,oops,1\n";
  }
  try {
    load_dataset_csv(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    REQUIRE(std::string(e.what()).find("row 2") != std::string::npos);
  }
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "1.0,2.0,0.5\n";
  }
  REQUIRE_THROWS_AS(load_dataset_csv(path), LabelOutOfRange);
  std::remove(path.c_str());
}

TEST_CASE("quadratic instance closed form and noise") {
  std::vector<Eigen::MatrixXd> q = {Eigen::MatrixXd::Identity(2, 2),
                                    Eigen::MatrixXd::Identity(2, 2)};
  Eigen::VectorXd b1(2), b2(2);
  b1 << 1.0, 0.0;
  b2 << 0.0, 1.0;
  QuadraticInstance inst({q}, {b1, b2}, 0.0, "test");
  Eigen::VectorXd star = inst.x_star();
  REQUIRE(star[0] == Catch::Approx(0.5));
  REQUIRE(star[1] == Catch::Approx(0.5));
  REQUIRE(inst.global_grad(star).norm() < 1e-14);
  REQUIRE(inst.optimum_value() == Catch::Approx(-0.25));

  QuadraticInstance gen =
      make_quadratic_instance(5, 3, 11, 0.5, 2.0, 0.3, 0.0);
  REQUIRE(gen.global_grad(gen.x_star()).norm() < 1e-12);
  for (int i = 0; i < 5; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gen.quadratic_term(i));
    REQUIRE(es.eigenvalues().minCoeff() >= 0.5 - 1e-10);
    REQUIRE(es.eigenvalues().maxCoeff() <= 2.0 + 1e-10);
  }
  Stream rng(3);
  Eigen::VectorXd x(3);
  x << 0.2, -0.4, 0.9;
  REQUIRE((gen.stochastic_grad(1, x, rng) - gen.local_grad(1, x)).norm() ==
          0.0);

  QuadraticInstance noisy =
      make_quadratic_instance(5, 3, 11, 0.5, 2.0, 0.3, 0.05);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Stream nrng(7);
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) mean += noisy.stochastic_grad(1, x, nrng);
  mean /= draws;
  double tol = 4.0 * 0.05 / std::sqrt(double(draws));
  REQUIRE((mean - noisy.local_grad(1, x)).cwiseAbs().maxCoeff() <= tol);
}

TEST_CASE("finite differences recover quadratic gradients to high accuracy") {
  QuadraticInstance inst = make_quadratic_instance(3, 4, 13, 0.2, 1.5, 1.0, 0.0);
  Stream rng(17);
  Eigen::VectorXd x(4);
  for (int j = 0; j < 4; ++j) x[j] = rng.uniform(-1.0, 1.0);
  Eigen::VectorXd analytic = inst.local_grad(2, x);
  Eigen::VectorXd numeric = finite_diff_grad(inst, 2, x, 1e-5);
  REQUIRE((analytic - numeric).norm() / analytic.norm() <= 1e-8);
}

TEST_CASE("dimension and node validation") {
  HuberRegressionInstance inst = make_huber_instance(2, 3, 1.0, {0.04, 0.1}, 1);
  Eigen::VectorXd wrong(4);
  wrong.setZero();
  REQUIRE_THROWS_AS(inst.local_loss(0, wrong), DimensionMismatch);
  Eigen::VectorXd ok = Eigen::VectorXd::Zero(3);
  REQUIRE_THROWS_AS(inst.local_grad(2, ok), ValidationError);
}
