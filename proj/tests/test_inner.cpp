#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dro/inner.hpp"
#include "dro/rng.hpp"

using namespace dro;

namespace {

std::vector<double> random_losses(RngStream& stream, int n) {
  std::vector<double> v(n);
  for (double& x : v) x = stream.uniform();
  return v;
}

double primal_value(const std::vector<double>& losses, const RobustSpec& spec,
                    const InnerSolution& sol) {
  double lin = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) lin += sol.weights[i] * losses[i];
  switch (spec.kind) {
    case ObjectiveKind::cvar:
    case ObjectiveKind::chi2_con: return lin;
    case ObjectiveKind::kl_cvar: return lin - spec.lambda * kl_divergence(sol.weights);
    case ObjectiveKind::chi2_pen: return lin - spec.lambda * chi2_divergence(sol.weights);
  }
  return lin;
}

}  // namespace

TEST_CASE("cvar closed form") {
  const LossBatch batch({3.0, 1.0, 2.0});

  SUBCASE("alpha = 1/n gives the max loss") {
    const auto sol = solve_cvar(batch, 1.0 / 3.0);
    CHECK(sol.value == doctest::Approx(3.0));
    CHECK(sol.weights[0] == doctest::Approx(1.0));
    CHECK(sol.weights[1] == 0.0);
    CHECK(sol.weights[2] == 0.0);
    CHECK(sol.eta == doctest::Approx(2.0));  // next largest loss
  }
  SUBCASE("alpha = 1 is the mean") {
    const auto sol = solve_cvar(batch, 1.0);
    CHECK(sol.value == doctest::Approx(2.0));
    for (double q : sol.weights.values()) CHECK(q == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("fractional tail weight") {
    const auto sol = solve_cvar(batch, 0.5);
    CHECK(sol.value == doctest::Approx(8.0 / 3.0));
    CHECK(sol.weights[0] == doctest::Approx(2.0 / 3.0));
    CHECK(sol.weights[1] == 0.0);
    CHECK(sol.weights[2] == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("alpha below 1/n is still the max") {
    const auto sol = solve_cvar(batch, 0.2);
    CHECK(sol.value == doctest::Approx(3.0));
  }
  CHECK_THROWS_AS(solve_cvar(batch, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_cvar(batch, 1.2), std::invalid_argument);
}

TEST_CASE("cvar ties break toward the lowest index") {
  const LossBatch batch({2.0, 2.0, 0.0});
  const auto sol = solve_cvar(batch, 1.0 / 3.0);
  CHECK(sol.weights[0] == doctest::Approx(1.0));
  CHECK(sol.weights[1] == 0.0);
}

TEST_CASE("kl-cvar dual solver") {
  SUBCASE("constant losses") {
    const auto sol = solve_kl_cvar(LossBatch({0.0, 0.0}), 0.3, 1.0);
    CHECK(sol.value == doctest::Approx(0.0));
    CHECK(sol.weights[0] == doctest::Approx(0.5));
  }
  SUBCASE("two-point instance against 1-d minimization oracle") {
    const auto sol = solve_kl_cvar(LossBatch({1.0, 0.0}), 0.5, 1.0);
    CHECK(sol.value == doctest::Approx(std::log((std::exp(1.0) + 1.0) / 2.0)).epsilon(1e-9));
    CHECK(sol.value == doctest::Approx(0.620115).epsilon(1e-5));
  }
  SUBCASE("huge lambda forces the mean") {
    const auto sol = solve_kl_cvar(LossBatch({1.0, 0.0}), 0.5, 1e6);
    CHECK(sol.value == doctest::Approx(0.5).epsilon(1e-5));
  }
  SUBCASE("inactive cap matches the log-sum-exp closed form") {
    const std::vector<double> losses{0.9, 0.4, 0.1};
    for (double lambda : {0.3, 1.0, 4.0}) {
      const auto sol = solve_kl_cvar(LossBatch(losses), 1.0 / 3.0, lambda);
      double lse = 0.0;
      for (double l : losses) lse += std::exp(l / lambda);
      CHECK(sol.value == doctest::Approx(lambda * std::log(lse / 3.0)).epsilon(1e-9));
    }
  }
  SUBCASE("box constraint respected") {
    RngStream stream(7);
    for (int t = 0; t < 50; ++t) {
      const auto losses = random_losses(stream, 12);
      const double alpha = stream.uniform(0.1, 1.0);
      const auto sol = solve_kl_cvar(LossBatch(losses), alpha, stream.uniform(0.05, 2.0));
      for (double q : sol.weights.values()) CHECK(q <= 1.0 / (12 * alpha) + 1e-9);
    }
  }
}

TEST_CASE("chi2-pen sorted-prefix solver") {
  SUBCASE("constant losses") {
    const auto sol = solve_chi2_pen(LossBatch({0.7, 0.7, 0.7}), 0.5);
    CHECK(sol.value == doctest::Approx(0.7));
    for (double q : sol.weights.values()) CHECK(q == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("lambda = 1: interior eta") {
    const auto sol = solve_chi2_pen(LossBatch({1.0, 0.0}), 1.0);
    CHECK(sol.eta == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(sol.weights[0] == doctest::Approx(0.75));
    CHECK(sol.weights[1] == doctest::Approx(0.25));
    CHECK(sol.value == doctest::Approx(0.625));
    // large-lambda regime: mean + Var/(2 lambda)
    CHECK(sol.value == doctest::Approx(0.5 + 0.25 / 2.0));
  }
  SUBCASE("lambda = 1/4: point mass") {
    const auto sol = solve_chi2_pen(LossBatch({1.0, 0.0}), 0.25);
    CHECK(sol.eta == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.weights[0] == doctest::Approx(1.0));
    CHECK(sol.weights[1] == doctest::Approx(0.0));
    CHECK(sol.value == doctest::Approx(0.875));
  }
  CHECK_THROWS_AS(solve_chi2_pen(LossBatch({1.0, 0.0}), 0.0), std::invalid_argument);

  SUBCASE("sorted-prefix path agrees with bisection") {
    RngStream stream(8);
    for (int t = 0; t < 200; ++t) {
      const int n = 2 + static_cast<int>(stream.uniform() * 40);
      const auto losses = random_losses(stream, n);
      const double lambda = stream.uniform(0.02, 3.0);
      const auto sol = solve_chi2_pen(LossBatch(losses), lambda);
      const double eta_bisect = chi2_pen_eta_bisect(losses, {}, lambda);
      CHECK(sol.eta == doctest::Approx(eta_bisect).epsilon(1e-7));
    }
  }
}

TEST_CASE("chi2-con dual solver") {
  SUBCASE("zero radius is the mean") {
    const auto sol = solve_chi2_con(LossBatch({0.9, 0.3, 0.3}), 0.0);
    CHECK(sol.value == doctest::Approx(0.5));
    for (double q : sol.weights.values()) CHECK(q == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("radius admitting a point mass") {
    const auto sol = solve_chi2_con(LossBatch({1.0, 0.0}), 0.5);
    CHECK(sol.value == doctest::Approx(1.0));
    CHECK(sol.weights[0] == doctest::Approx(1.0));
  }
  SUBCASE("binding constraint") {
    const auto sol = solve_chi2_con(LossBatch({1.0, 0.0}), 0.125);
    CHECK(sol.value == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(sol.weights[0] == doctest::Approx(0.75).epsilon(1e-7));
    CHECK(sol.weights[1] == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(chi2_divergence(sol.weights) <= 0.125 + 1e-6);
  }
  SUBCASE("divergence never exceeds the radius") {
    RngStream stream(9);
    for (int t = 0; t < 100; ++t) {
      const int n = 2 + static_cast<int>(stream.uniform() * 30);
      const auto losses = random_losses(stream, n);
      const double rho = stream.uniform(0.01, 2.0);
      const auto sol = solve_chi2_con(LossBatch(losses), rho);
      CHECK(chi2_divergence(sol.weights) <= rho + 1e-6);
      CHECK(sol.value == doctest::Approx(primal_value(losses, RobustSpec::chi2_con(rho), sol))
                             .epsilon(1e-6));
    }
  }
}

TEST_CASE("primal-dual consistency on random batches") {
  RngStream stream(10);
  for (int t = 0; t < 400; ++t) {
    const int n = 2 + static_cast<int>(stream.uniform() * 98);
    const auto losses = random_losses(stream, n);
    RobustSpec spec = RobustSpec::cvar(0.5);
    switch (t % 4) {
      case 0: spec = RobustSpec::cvar(stream.uniform(0.1, 1.0)); break;
      case 1: spec = RobustSpec::kl_cvar(stream.uniform(0.1, 1.0), stream.uniform(0.05, 2.0)); break;
      case 2: spec = RobustSpec::chi2_pen(stream.uniform(0.05, 2.0)); break;
      case 3: spec = RobustSpec::chi2_con(stream.uniform(0.01, 1.5)); break;
    }
    const InnerSolution sol = solve_inner_weighted(losses, {}, spec);
    CHECK(std::abs(primal_value(losses, spec, sol) - sol.value) <= 1e-7);
  }
}

TEST_CASE("monotonicity in the uncertainty parameters") {
  RngStream stream(11);
  const auto losses = random_losses(stream, 25);
  const LossBatch batch(losses);
  double prev = 1e300;
  for (double alpha : {0.05, 0.1, 0.25, 0.5, 0.75, 1.0}) {
    const double v = solve_cvar(batch, alpha).value;
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
  prev = 1e300;
  for (double lambda : {0.02, 0.1, 0.5, 2.0, 10.0}) {
    const double v = solve_chi2_pen(batch, lambda).value;
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
  prev = 1e300;
  for (double lambda : {0.02, 0.1, 0.5, 2.0, 10.0}) {
    const double v = solve_kl_cvar(batch, 0.3, lambda).value;
    CHECK(v <= prev + 1e-10);
    prev = v;
  }
  prev = -1e300;
  for (double rho : {0.0, 0.05, 0.2, 1.0, 3.0}) {
    const double v = solve_chi2_con(batch, rho).value;
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("dominance: mean <= robust value <= max") {
  RngStream stream(12);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(stream.uniform() * 40);
    const auto losses = random_losses(stream, n);
    double mean = 0.0, vmax = -1e300;
    for (double v : losses) {
      mean += v;
      vmax = std::max(vmax, v);
    }
    mean /= n;
    const LossBatch batch(losses);
    for (const double v : {solve_cvar(batch, stream.uniform(0.1, 1.0)).value,
                           solve_chi2_con(batch, stream.uniform(0.0, 2.0)).value}) {
      CHECK(v >= mean - 1e-9);
      CHECK(v <= vmax + 1e-9);
    }
  }
}

TEST_CASE("chi2-boundedness of the maximizing weights") {
  RngStream stream(13);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(stream.uniform() * 50);
    const auto losses = random_losses(stream, n);
    const LossBatch batch(losses);
    const double alpha = stream.uniform(0.1, 1.0);
    const double lambda = stream.uniform(0.05, 2.0);
    const double rho = stream.uniform(0.01, 1.5);
    CHECK(chi2_divergence(solve_cvar(batch, alpha).weights) <= 1.0 / alpha - 1.0 + 1e-9);
    CHECK(chi2_divergence(solve_kl_cvar(batch, alpha, lambda).weights) <=
          1.0 / alpha - 1.0 + 1e-9);
    CHECK(chi2_divergence(solve_chi2_con(batch, rho).weights) <= rho + 1e-6);
    CHECK(chi2_divergence(solve_chi2_pen(batch, lambda).weights) <= 1.0 / lambda + 1e-9);
  }
}

TEST_CASE("robust gradient combination") {
  SUBCASE("single sample returns its gradient") {
    const LossBatch batch({2.0}, {0.5, -1.0}, 2);
    const auto g = robust_grad_from_inner(batch, solve_cvar(batch, 1.0));
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(-1.0));
  }
  SUBCASE("uniform weights give the batch-mean gradient") {
    const LossBatch batch({1.0, 2.0}, {1.0, 0.0, 0.0, 2.0}, 2);
    const auto g = robust_grad_from_inner(batch, solve_cvar(batch, 1.0));
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(1.0));
  }
  SUBCASE("alpha = 1/n picks the max-loss sample, ties by lowest index") {
    const LossBatch batch({2.0, 2.0, 1.0}, {1.0, 2.0, 3.0}, 1);
    const auto g = robust_grad_from_inner(batch, solve_cvar(batch, 1.0 / 3.0));
    CHECK(g[0] == doctest::Approx(1.0));
  }
  const LossBatch no_grads({1.0, 2.0});
  CHECK_THROWS_AS(robust_grad_from_inner(no_grads, solve_cvar(no_grads, 1.0)),
                  std::invalid_argument);
}

TEST_CASE("lambda derivative of the penalized objective") {
  CHECK(lambda_derivative(LossBatch({0.4, 0.4, 0.4}), 1.0) == doctest::Approx(0.0));
  CHECK(lambda_derivative(LossBatch({1.0, 0.0}), 1.0) == doctest::Approx(-0.125).epsilon(1e-12));
  CHECK(lambda_derivative(LossBatch({1.0, 0.0}), 0.25) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("weighted solvers match uniform solvers on duplicated atoms") {
  // batch {1, 1, 0} uniform == atoms {1, 0} with probs {2/3, 1/3}
  const std::vector<double> values{1.0, 0.0};
  const std::vector<double> probs{2.0 / 3.0, 1.0 / 3.0};
  const LossBatch batch({1.0, 1.0, 0.0});
  for (int which = 0; which < 4; ++which) {
    RobustSpec spec = RobustSpec::cvar(0.4);
    if (which == 1) spec = RobustSpec::kl_cvar(0.4, 0.7);
    if (which == 2) spec = RobustSpec::chi2_pen(0.7);
    if (which == 3) spec = RobustSpec::chi2_con(0.3);
    const double uniform = solve_inner(batch, spec).value;
    const double weighted = solve_inner_weighted(values, probs, spec).value;
    CHECK(weighted == doctest::Approx(uniform).epsilon(1e-8));
  }
}

TEST_CASE("negative loss values are handled") {
  const LossBatch batch({0.5, -1.0, -0.25});
  CHECK(solve_cvar(batch, 1.0 / 3.0).value == doctest::Approx(0.5));
  const auto pen = solve_chi2_pen(batch, 0.5);
  CHECK(std::abs(primal_value({0.5, -1.0, -0.25}, RobustSpec::chi2_pen(0.5), pen) - pen.value) <=
        1e-9);
  const auto con = solve_chi2_con(batch, 0.4);
  CHECK(con.value >= (0.5 - 1.0 - 0.25) / 3.0);
  CHECK(con.value <= 0.5 + 1e-9);
}
