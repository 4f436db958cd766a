#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dro/oracle.hpp"

using namespace dro;

namespace {

Problem deterministic_problem(double value) {
  Problem p;
  p.oracle.dim = 1;
  p.oracle.loss = [value](std::span<const double> x, int) { return value * x[0]; };
  p.oracle.loss_grad = [value](std::span<const double>, int, std::span<double> g) {
    g[0] = value;
  };
  p.atom_probs = {1.0};
  finalize_finite_support(p);
  return p;
}

}  // namespace

TEST_CASE("minibatch estimator basics") {
  SUBCASE("n=1 returns the sample's loss and gradient") {
    const Problem p = deterministic_problem(2.5);
    RngStream stream(50);
    const std::vector<double> x{1.0};
    const EstimatorOutput out = minibatch_estimate(p.oracle, x, RobustSpec::cvar(0.5), 1, stream);
    CHECK(out.grad_evals == 1);
    CHECK(out.value_estimate == doctest::Approx(2.5));
    CHECK(out.grad[0] == doctest::Approx(2.5));
  }
  SUBCASE("single-atom support gives zero variance across repeats") {
    const Problem p = deterministic_problem(1.0);
    const std::vector<double> x{0.3};
    RngStream stream(51);
    double first = 0.0;
    for (int r = 0; r < 20; ++r) {
      RngStream rep = stream.child(static_cast<std::uint64_t>(r));
      const EstimatorOutput out =
          minibatch_estimate(p.oracle, x, RobustSpec::chi2_pen(0.5), 6, rep);
      if (r == 0) first = out.value_estimate;
      CHECK(out.value_estimate == first);
      CHECK(out.grad[0] == doctest::Approx(1.0));
    }
  }
  SUBCASE("Bernoulli(1/2) CVaR n=2 matches exact enumeration") {
    // E[value] = 0.75 x for x > 0, from the four equiprobable batches
    const Problem p = bernoulli_linear(0.5, 1.0, 1.0);
    const std::vector<double> x{0.8};
    RngStream stream(52);
    const int reps = 200000;
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep = stream.child(static_cast<std::uint64_t>(r));
      mean += minibatch_estimate(p.oracle, x, RobustSpec::cvar(0.5), 2, rep).value_estimate;
    }
    mean /= reps;
    CHECK(mean == doctest::Approx(0.75 * 0.8).epsilon(5e-3));
  }
  const Problem p0 = deterministic_problem(1.0);
  RngStream bad_stream(1);
  CHECK_THROWS_AS(
      minibatch_estimate(p0.oracle, std::vector<double>{1.0}, RobustSpec::cvar(0.5), 0, bad_stream),
      std::invalid_argument);
}

TEST_CASE("mlmc config") {
  CHECK(MlmcConfig{10, 160}.j_max() == 4);
  CHECK_THROWS_AS(MlmcConfig(10, 10).validate(), std::invalid_argument);
  CHECK_THROWS_AS(MlmcConfig(10, 30).validate(), std::invalid_argument);
  CHECK_THROWS_AS(MlmcConfig(0, 8).validate(), std::invalid_argument);
  bool rounded = false;
  const MlmcConfig cfg = MlmcConfig::make_rounded(10, 100, &rounded);
  CHECK(rounded);
  CHECK(cfg.n == 160);
  const MlmcConfig exact = MlmcConfig::make_rounded(10, 80, &rounded);
  CHECK_FALSE(rounded);
  CHECK(exact.n == 80);
}

TEST_CASE("mlmc level distribution") {
  SUBCASE("j_max = 1") {
    const auto dist = level_distribution(MlmcConfig{1, 2});
    REQUIRE(dist.size() == 1);
    CHECK(dist[0] == std::pair(1, 1.0));
  }
  SUBCASE("j_max = 3") {
    const auto dist = level_distribution(MlmcConfig{1, 8});
    REQUIRE(dist.size() == 3);
    CHECK(dist[0] == std::pair(1, 0.5));
    CHECK(dist[1] == std::pair(2, 0.25));
    CHECK(dist[2] == std::pair(3, 0.25));
  }
  SUBCASE("probabilities sum to exactly 1 and E[2^J] = j_max + 1") {
    for (int jmax = 1; jmax <= 12; ++jmax) {
      const auto dist = level_distribution(MlmcConfig{3, 3 << jmax});
      double total = 0.0, cost = 0.0;
      for (const auto& [j, pj] : dist) {
        total += pj;
        cost += pj * std::ldexp(1.0, j);
      }
      CHECK(total == 1.0);  // dyadic rationals are exact
      CHECK(cost == doctest::Approx(jmax + 1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("mlmc estimator contract") {
  SUBCASE("deterministic support: telescoping difference vanishes") {
    const Problem p = deterministic_problem(1.7);
    const std::vector<double> x{1.0};
    RngStream stream(53);
    for (int r = 0; r < 10; ++r) {
      RngStream rep = stream.child(static_cast<std::uint64_t>(r));
      const EstimatorOutput out = mlmc_estimate(p.oracle, x, RobustSpec::chi2_pen(0.5),
                                                MlmcConfig{4, 64}, MlmcTarget::value, rep);
      CHECK(out.value_estimate == doctest::Approx(1.7).epsilon(1e-12));
    }
  }
  SUBCASE("single-level config always draws the full telescope") {
    const Problem p = bernoulli_linear(0.5, 1.0, 1.0);
    const std::vector<double> x{1.0};
    RngStream stream(49);
    for (int r = 0; r < 200; ++r) {
      RngStream rep = stream.child(static_cast<std::uint64_t>(r));
      const EstimatorOutput out = mlmc_estimate(p.oracle, x, RobustSpec::cvar(0.5),
                                                MlmcConfig{1, 2}, MlmcTarget::value, rep);
      CHECK(out.grad_evals == 2);  // J = 1 with probability one
    }
  }
  SUBCASE("expected cost is n0 (1 + log2(n/n0))") {
    const Problem p = bernoulli_linear(0.4, 1.0, 1.0);
    const std::vector<double> x{1.0};
    const MlmcConfig cfg{10, 160};
    RngStream stream(54);
    const int reps = 100000;
    double mean = 0.0, m2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep = stream.child(static_cast<std::uint64_t>(r));
      const double c = static_cast<double>(
          mlmc_estimate(p.oracle, x, RobustSpec::cvar(0.4), cfg, MlmcTarget::value, rep)
              .grad_evals);
      mean += c;
      m2 += c * c;
    }
    mean /= reps;
    const double se = std::sqrt((m2 / reps - mean * mean) / reps);
    CHECK(std::abs(mean - 50.0) <= 3.0 * se);
  }
  SUBCASE("unbiased for the batch surrogate at the cap size") {
    const Problem p = bernoulli_linear(0.3, 1.0, 1.0);
    const std::vector<double> x{1.0};
    const MlmcConfig cfg{5, 80};
    const double exact_value = bernoulli_cvar_surrogate(0.3, 80, 1.0);
    RngStream stream(55);
    const int reps = 100000;
    double mean = 0.0, m2 = 0.0, gmean = 0.0, gm2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep1 = stream.child(2 * static_cast<std::uint64_t>(r));
      RngStream rep2 = stream.child(2 * static_cast<std::uint64_t>(r) + 1);
      const double v =
          mlmc_estimate(p.oracle, x, RobustSpec::cvar(0.3), cfg, MlmcTarget::value, rep1)
              .value_estimate;
      const double g =
          mlmc_estimate(p.oracle, x, RobustSpec::cvar(0.3), cfg, MlmcTarget::grad, rep2).grad[0];
      mean += v;
      m2 += v * v;
      gmean += g;
      gm2 += g * g;
    }
    mean /= reps;
    gmean /= reps;
    const double se = std::sqrt((m2 / reps - mean * mean) / reps);
    const double gse = std::sqrt((gm2 / reps - gmean * gmean) / reps);
    CHECK(std::abs(mean - exact_value) <= 3.0 * se);
    // d/dx of x * surrogate(1) is the surrogate itself for the linear loss
    CHECK(std::abs(gmean - exact_value) <= 3.0 * gse);
  }
  SUBCASE("lambda_deriv target requires chi2_pen") {
    const Problem p = bernoulli_linear(0.3, 1.0, 1.0);
    RngStream stream(56);
    CHECK_THROWS_AS(mlmc_estimate(p.oracle, std::vector<double>{1.0}, RobustSpec::cvar(0.3),
                                  MlmcConfig{2, 8}, MlmcTarget::lambda_deriv, stream),
                    std::invalid_argument);
  }
}

TEST_CASE("mlmc second moments: log growth for penalties, linear for the constraint") {
  const std::vector<double> x{0.0};
  const int n0 = 10;
  std::vector<double> ns, cvar_m, pen_m, con_m;
  RngStream stream(57);
  for (int j = 4; j <= 9; ++j) {
    const int n = n0 << j;
    const MlmcConfig cfg{n0, n};
    const Problem bern = bernoulli_linear(0.5, 1.0, 1.0);
    const std::vector<double> x1{1.0};
    RngStream s1 = stream.child(3 * static_cast<std::uint64_t>(j));
    RngStream s2 = stream.child(3 * static_cast<std::uint64_t>(j) + 1);
    RngStream s3 = stream.child(3 * static_cast<std::uint64_t>(j) + 2);
    ns.push_back(n);
    cvar_m.push_back(mlmc_second_moment(bern.oracle, x1, RobustSpec::cvar(0.5), cfg,
                                        MlmcTarget::grad, 1500, s1));
    pen_m.push_back(mlmc_second_moment(bern.oracle, x1, RobustSpec::chi2_pen(1.0), cfg,
                                       MlmcTarget::grad, 1500, s2));
    const Problem three = three_point_hard(1.0, 1.0, n);
    con_m.push_back(mlmc_second_moment(three.oracle, x, RobustSpec::chi2_con(1.0), cfg,
                                       MlmcTarget::grad, 1500, s3));
  }
  CHECK(loglog_slope(ns, cvar_m) <= 0.2);
  CHECK(loglog_slope(ns, pen_m) <= 0.2);
  CHECK(loglog_slope(ns, con_m) >= 0.7);
}

TEST_CASE("joint chi2-pen estimate agrees with the separate targets in expectation") {
  const Problem p = bernoulli_linear(0.4, 1.0, 1.0);
  const std::vector<double> x{1.0};
  const MlmcConfig cfg{4, 32};
  const double lambda = 0.5;
  RngStream stream(58);
  const int reps = 60000;
  double joint_dl = 0.0, sep_dl = 0.0, joint_g = 0.0, sep_g = 0.0;
  for (int r = 0; r < reps; ++r) {
    RngStream rep1 = stream.child(2 * static_cast<std::uint64_t>(r));
    RngStream rep2 = stream.child(2 * static_cast<std::uint64_t>(r) + 1);
    const JointPenEstimate j = mlmc_joint_chi2_pen(p.oracle, x, lambda, cfg, rep1);
    joint_dl += j.lambda_deriv;
    joint_g += j.grad_x[0];
    const EstimatorOutput dl = mlmc_estimate(p.oracle, x, RobustSpec::chi2_pen(lambda), cfg,
                                             MlmcTarget::lambda_deriv, rep2);
    RngStream rep3 = stream.child(0xabcd0000 + static_cast<std::uint64_t>(r));
    const EstimatorOutput g =
        mlmc_estimate(p.oracle, x, RobustSpec::chi2_pen(lambda), cfg, MlmcTarget::grad, rep3);
    sep_dl += dl.grad[0];
    sep_g += g.grad[0];
  }
  CHECK(joint_dl / reps == doctest::Approx(sep_dl / reps).epsilon(0.08));
  CHECK(joint_g / reps == doctest::Approx(sep_g / reps).epsilon(0.03));
}

TEST_CASE("dual sgm per-sample gradients") {
  const Problem p = bernoulli_linear(0.3, 1.0, 1.0);
  const std::vector<double> x{1.0};

  SUBCASE("cvar indicator off") {
    Problem low = deterministic_problem(0.2);  // loss 0.2 < eta
    RngStream stream(59);
    const DualSgmGrad g = dual_sgm_grad(low.oracle, x, 0.5, RobustSpec::cvar(0.4), stream);
    CHECK(g.grad_x[0] == 0.0);
    CHECK(g.grad_eta == doctest::Approx(1.0));
  }
  SUBCASE("chi2-pen multiplier 1 at loss = eta + lambda") {
    Problem unit = deterministic_problem(0.9);  // loss at x=1
    RngStream stream(60);
    const DualSgmGrad g =
        dual_sgm_grad(unit.oracle, x, 0.9 - 0.5, RobustSpec::chi2_pen(0.5), stream);
    CHECK(g.grad_eta == doctest::Approx(0.0));
    CHECK(g.grad_x[0] == doctest::Approx(0.9));
  }
  SUBCASE("Bernoulli(alpha) losses: E[grad_eta] = 0 inside the value-at-risk band") {
    const double alpha = 0.3;
    const Problem bern = bernoulli_linear(alpha, 1.0, 1.0);
    RngStream stream(61);
    const int reps = 200000;
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep = stream.child(static_cast<std::uint64_t>(r));
      mean += dual_sgm_grad(bern.oracle, x, 0.5, RobustSpec::cvar(alpha), rep).grad_eta;
    }
    CHECK(mean / reps == doctest::Approx(0.0).epsilon(0.02));
  }
  RngStream stream(62);
  CHECK_THROWS_AS(dual_sgm_grad(p.oracle, x, 0.5, RobustSpec::chi2_con(0.5), stream),
                  std::invalid_argument);
}

TEST_CASE("batch evaluation kernel: parallel equals serial") {
  const Dataset data = synthetic_subgroup_dataset(600, 6, 4, 0.15, 13);
  const Problem p = multiclass_logistic(data, 1e-3, 5.0);
  std::vector<double> x(p.dim());
  RngStream stream(63);
  for (double& v : x) v = 0.1 * stream.normal();
  std::vector<int> tokens(600);
  for (int i = 0; i < 600; ++i) tokens[i] = i;
  std::vector<double> l1, g1, l2, g2;
  evaluate_batch(p.oracle, x, tokens, l1, &g1, false);
  evaluate_batch(p.oracle, x, tokens, l2, &g2, true);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}
