#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "dro/doubling.hpp"
#include "dro/oracle.hpp"

namespace dro::cli {

namespace {

struct Check {
  std::string name;
  std::function<bool(std::string&)> run;
};

std::vector<double> random_losses(RngStream& stream, int n, double B = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = B * stream.uniform();
  return v;
}

RobustSpec random_spec(RngStream& stream, int which) {
  switch (which % 4) {
    case 0: return RobustSpec::cvar(stream.uniform(0.2, 1.0));
    case 1: return RobustSpec::kl_cvar(stream.uniform(0.2, 1.0), stream.uniform(0.1, 2.0));
    case 2: return RobustSpec::chi2_pen(stream.uniform(0.1, 2.0));
    default: return RobustSpec::chi2_con(stream.uniform(0.02, 1.0));
  }
}

double primal_value(const std::vector<double>& losses, const RobustSpec& spec,
                    const InnerSolution& sol) {
  double lin = 0.0;
  for (int i = 0; i < static_cast<int>(losses.size()); ++i) lin += sol.weights[i] * losses[i];
  switch (spec.kind) {
    case ObjectiveKind::cvar:
    case ObjectiveKind::chi2_con: return lin;
    case ObjectiveKind::kl_cvar: return lin - spec.lambda * kl_divergence(sol.weights);
    case ObjectiveKind::chi2_pen: return lin - spec.lambda * chi2_divergence(sol.weights);
  }
  return lin;
}

}  // namespace

int cmd_verify(double perturbation) {
  std::vector<Check> checks;
  const auto add = [&](std::string name, std::function<bool(std::string&)> fn) {
    checks.push_back({std::move(name), std::move(fn)});
  };

  add("chi2-divergence-identity", [](std::string& detail) {
    RngStream stream(11);
    for (int t = 0; t < 200; ++t) {
      const int n = 1 + static_cast<int>(stream.uniform() * 20);
      auto v = random_losses(stream, n);
      double s = 0.0;
      for (double x : v) s += x;
      for (double& x : v) x /= s;
      const Weights q(v);
      double norm2 = 0.0;
      for (double x : v) {
        const double d = x - 1.0 / n;
        norm2 += d * d;
      }
      if (std::abs(chi2_divergence(q) - 0.5 * n * norm2) > 1e-12) {
        detail = "identity D = (n/2)||q - u||^2 violated";
        return false;
      }
    }
    return true;
  });

  add("divergence-convexity", [](std::string& detail) {
    RngStream stream(12);
    for (int t = 0; t < 200; ++t) {
      const int n = 2 + static_cast<int>(stream.uniform() * 10);
      auto a = random_losses(stream, n), b = random_losses(stream, n);
      double sa = 0.0, sb = 0.0;
      for (int i = 0; i < n; ++i) {
        sa += a[i];
        sb += b[i];
      }
      std::vector<double> mid(n);
      const double theta = stream.uniform();
      for (int i = 0; i < n; ++i) {
        a[i] /= sa;
        b[i] /= sb;
        mid[i] = theta * a[i] + (1 - theta) * b[i];
      }
      const Weights qa(a), qb(b), qm(mid);
      if (chi2_divergence(qm) > theta * chi2_divergence(qa) +
                                    (1 - theta) * chi2_divergence(qb) + 1e-10 ||
          kl_divergence(qm) >
              theta * kl_divergence(qa) + (1 - theta) * kl_divergence(qb) + 1e-10) {
        detail = "midpoint convexity violated";
        return false;
      }
      const Weights uniform(std::vector<double>(n, 1.0 / n));
      if (chi2_divergence(uniform) > 1e-15 || std::abs(kl_divergence(uniform)) > 1e-15) {
        detail = "divergence at uniform is not zero";
        return false;
      }
    }
    return true;
  });

  add("inner-grid-equivalence", [perturbation](std::string& detail) {
    RngStream stream(13);
    for (int t = 0; t < 80; ++t) {
      const auto losses = random_losses(stream, 3);
      const RobustSpec spec = random_spec(stream, t);
      const double solver =
          solve_inner_weighted(losses, {}, spec).value + perturbation;
      const double grid = simplex_grid_max(losses, spec, 4e-3);
      if (std::abs(solver - grid) > 5e-3) {
        std::ostringstream msg;
        msg << to_string(spec.kind) << " solver " << solver << " vs grid " << grid;
        detail = msg.str();
        return false;
      }
    }
    return true;
  });

  add("primal-dual-consistency", [perturbation](std::string& detail) {
    RngStream stream(14);
    for (int t = 0; t < 200; ++t) {
      const int n = 2 + static_cast<int>(stream.uniform() * 58);
      const auto losses = random_losses(stream, n);
      const RobustSpec spec = random_spec(stream, t);
      const InnerSolution sol = solve_inner_weighted(losses, {}, spec);
      const double gap = std::abs(primal_value(losses, spec, sol) + perturbation - sol.value);
      if (gap > 1e-7) {
        std::ostringstream msg;
        msg << to_string(spec.kind) << " primal-dual gap " << gap;
        detail = msg.str();
        return false;
      }
    }
    return true;
  });

  add("inner-monotonicity", [](std::string& detail) {
    RngStream stream(15);
    const auto losses = random_losses(stream, 20);
    double prev = 1e300;
    for (double alpha : {0.1, 0.3, 0.5, 0.8, 1.0}) {
      const double v = solve_cvar_weighted(losses, {}, alpha).value;
      if (v > prev + 1e-10) {
        detail = "CVaR value increased in alpha";
        return false;
      }
      prev = v;
    }
    prev = 1e300;
    for (double lambda : {0.05, 0.2, 1.0, 5.0}) {
      const double v = solve_chi2_pen_weighted(losses, {}, lambda).value;
      if (v > prev + 1e-10) {
        detail = "chi2-pen value increased in lambda";
        return false;
      }
      prev = v;
    }
    prev = 1e300;
    for (double lambda : {0.05, 0.2, 1.0, 5.0}) {
      const double v = solve_kl_cvar_weighted(losses, {}, 0.3, lambda).value;
      if (v > prev + 1e-10) {
        detail = "kl-cvar value increased in lambda";
        return false;
      }
      prev = v;
    }
    prev = -1e300;
    for (double rho : {0.0, 0.1, 0.5, 2.0}) {
      const double v = solve_chi2_con_weighted(losses, {}, rho).value;
      if (v < prev - 1e-10) {
        detail = "chi2-con value decreased in rho";
        return false;
      }
      prev = v;
    }
    return true;
  });

  add("inner-dominance", [](std::string& detail) {
    RngStream stream(16);
    for (int t = 0; t < 100; ++t) {
      const int n = 2 + static_cast<int>(stream.uniform() * 30);
      const auto losses = random_losses(stream, n);
      double mean = 0.0, vmax = -1e300;
      for (double v : losses) {
        mean += v;
        vmax = std::max(vmax, v);
      }
      mean /= n;
      const double vc = solve_chi2_con_weighted(losses, {}, stream.uniform(0.0, 2.0)).value;
      const double va = solve_cvar_weighted(losses, {}, stream.uniform(0.1, 1.0)).value;
      if (vc < mean - 1e-9 || va < mean - 1e-9 || vc > vmax + 1e-9 || va > vmax + 1e-9) {
        detail = "value outside [mean, max]";
        return false;
      }
    }
    return true;
  });

  add("chi2-boundedness", [](std::string& detail) {
    RngStream stream(17);
    for (int t = 0; t < 100; ++t) {
      const int n = 2 + static_cast<int>(stream.uniform() * 30);
      const auto losses = random_losses(stream, n);
      const double alpha = stream.uniform(0.1, 1.0);
      const double lambda = stream.uniform(0.1, 2.0);
      const double rho = stream.uniform(0.02, 1.0);
      if (chi2_divergence(solve_kl_cvar_weighted(losses, {}, alpha, lambda).weights) >
              1.0 / alpha - 1.0 + 1e-6 ||
          chi2_divergence(solve_cvar_weighted(losses, {}, alpha).weights) >
              1.0 / alpha - 1.0 + 1e-6 ||
          chi2_divergence(solve_chi2_con_weighted(losses, {}, rho).weights) > rho + 1e-6 ||
          chi2_divergence(solve_chi2_pen_weighted(losses, {}, lambda).weights) >
              1.0 / lambda + 1e-6) {
        detail = "worst-case weights exceed the divergence bound";
        return false;
      }
    }
    return true;
  });

  add("mlmc-level-distribution", [](std::string& detail) {
    for (int jmax = 1; jmax <= 10; ++jmax) {
      const MlmcConfig cfg{4, 4 << jmax};
      const auto dist = level_distribution(cfg);
      double total = 0.0, cost = 0.0;
      for (const auto& [j, p] : dist) {
        total += p;
        cost += p * std::ldexp(1.0, j);
      }
      if (total != 1.0) {
        detail = "level probabilities do not sum to exactly 1";
        return false;
      }
      if (std::abs(cost - (jmax + 1)) > 1e-12) {
        detail = "E[2^J] != j_max + 1";
        return false;
      }
    }
    return true;
  });

  add("mlmc-unbiasedness", [](std::string& detail) {
    const Problem problem = bernoulli_linear(0.3, 1.0, 1.0);
    const RobustSpec spec = RobustSpec::cvar(0.3);
    const std::vector<double> x{1.0};
    const MlmcConfig cfg{5, 80};
    const double exact = bernoulli_cvar_surrogate(0.3, 80, 1.0);
    RngStream stream(18);
    const int reps = 20000;
    double mean = 0.0, m2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep = stream.child(r);
      const double v =
          mlmc_estimate(problem.oracle, x, spec, cfg, MlmcTarget::value, rep).value_estimate;
      mean += v;
      m2 += v * v;
    }
    mean /= reps;
    const double se = std::sqrt(std::max(0.0, m2 / reps - mean * mean) / reps);
    if (std::abs(mean - exact) > 4 * se + 1e-9) {
      std::ostringstream msg;
      msg << "gap " << std::abs(mean - exact) << " vs 4*se " << 4 * se;
      detail = msg.str();
      return false;
    }
    return true;
  });

  add("mlmc-expected-cost", [](std::string& detail) {
    const Problem problem = bernoulli_linear(0.5, 1.0, 1.0);
    const RobustSpec spec = RobustSpec::chi2_pen(0.5);
    const std::vector<double> x{1.0};
    const MlmcConfig cfg{10, 160};
    RngStream stream(19);
    const int reps = 20000;
    double mean = 0.0, m2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep = stream.child(r);
      const double c = static_cast<double>(
          mlmc_estimate(problem.oracle, x, spec, cfg, MlmcTarget::value, rep).grad_evals);
      mean += c;
      m2 += c * c;
    }
    mean /= reps;
    const double se = std::sqrt(std::max(0.0, m2 / reps - mean * mean) / reps);
    const double expected = 10.0 * (1.0 + std::log2(16.0));
    if (std::abs(mean - expected) > 4 * se) {
      std::ostringstream msg;
      msg << "mean cost " << mean << " vs expected " << expected;
      detail = msg.str();
      return false;
    }
    return true;
  });

  add("minibatch-variance-bound", [](std::string& detail) {
    const Problem problem = bernoulli_linear(0.5, 1.0, 1.0);
    const double lambda = 0.5;
    const RobustSpec spec = RobustSpec::chi2_pen(lambda);
    const std::vector<double> x{1.0};
    RngStream stream(20);
    for (int n : {10, 40}) {
      RngStream grid = stream.child(n);
      const double var = mc_variance_estimate(problem, x, spec, n, 20000, grid);
      const double bound = 8.0 * (1.0 + 1.0 / lambda) * 1.0 / n;
      if (var > bound) {
        std::ostringstream msg;
        msg << "Var " << var << " exceeds bound " << bound << " at n=" << n;
        detail = msg.str();
        return false;
      }
    }
    return true;
  });

  add("bias-sign", [](std::string& detail) {
    const Problem problem = bernoulli_linear(0.25, 1.0, 1.0);
    const std::vector<double> x{1.0};
    RngStream stream(21);
    const RobustSpec specs[4] = {RobustSpec::cvar(0.25), RobustSpec::kl_cvar(0.25, 0.3),
                                 RobustSpec::chi2_pen(0.3), RobustSpec::chi2_con(0.5)};
    for (int s = 0; s < 4; ++s) {
      const double exact = full_batch(problem, x, specs[s]).value;
      for (int n : {3, 10, 50}) {
        RngStream grid = stream.child(s * 100 + n);
        const McEstimate mc = mc_bias_estimate(problem, x, specs[s], n, 20000, grid);
        if (mc.mean > exact + 3 * mc.stderr_ + 1e-9) {
          std::ostringstream msg;
          msg << to_string(specs[s].kind) << " surrogate " << mc.mean << " above exact " << exact;
          detail = msg.str();
          return false;
        }
      }
    }
    return true;
  });

  add("gradient-finite-difference", [](std::string& detail) {
    const Dataset data = synthetic_subgroup_dataset(40, 4, 3, 0.2, 7);
    const Problem problem = multiclass_logistic(data, 1e-2, 10.0);
    RngStream stream(22);
    for (int t = 0; t < 10; ++t) {
      std::vector<double> x(problem.dim());
      for (double& v : x) v = stream.normal() * 0.3;
      const RobustSpec spec = t % 2 == 0 ? RobustSpec::kl_cvar(0.4, 0.5)
                                         : RobustSpec::chi2_pen(0.5);
      std::vector<int> tokens;
      RngStream batch_stream = stream.child(t);
      for (int i = 0; i < 12; ++i) tokens.push_back(problem.oracle.draw(batch_stream));
      const auto value_at = [&](std::span<const double> xx) {
        std::vector<double> losses;
        evaluate_batch(problem.oracle, xx, tokens, losses, nullptr);
        return solve_inner_weighted(losses, {}, spec).value;
      };
      std::vector<double> losses, grads;
      evaluate_batch(problem.oracle, x, tokens, losses, &grads);
      const LossBatch batch(losses, grads, problem.dim());
      const auto g = robust_grad_from_inner(batch, solve_inner(batch, spec));
      double xnorm = 0.0;
      for (double v : x) xnorm += v * v;
      const double h = 1e-6 * (1.0 + std::sqrt(xnorm));
      const auto fd = finite_diff_grad(value_at, x, h);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        num += (g[i] - fd[i]) * (g[i] - fd[i]);
        den += fd[i] * fd[i];
      }
      if (std::sqrt(num) > 1e-5 * std::max(1.0, std::sqrt(den))) {
        std::ostringstream msg;
        msg << "relative gradient error " << std::sqrt(num / std::max(den, 1e-300));
        detail = msg.str();
        return false;
      }
    }
    return true;
  });

  add("projection-feasibility", [](std::string& detail) {
    const Problem problem = synthetic_linear(50, 3, 1.0, 5);
    const RobustSpec spec = RobustSpec::cvar(0.2);
    SgmConfig cfg;
    cfg.step_size = 0.3;
    cfg.iterations = 200;
    cfg.radius = problem.radius;
    cfg.eval_every = 1;
    RngStream stream(23);
    const GradEstimator est = [&](std::span<const double> x, RngStream& s) {
      return minibatch_estimate(problem.oracle, x, spec, 8, s);
    };
    const ValueFn eval = [&](std::span<const double> x) {
      double nrm = 0.0;
      for (double v : x) nrm += v * v;
      return std::sqrt(nrm);
    };
    const RunResult res = run_sgm(std::vector<double>(3, 0.0), est, eval, cfg, stream);
    for (const auto& pt : res.trace.points)
      if (pt.value > problem.radius + 1e-9) {
        detail = "iterate left the feasible ball";
        return false;
      }
    return true;
  });

  add("run-determinism", [](std::string& detail) {
    const Problem problem = synthetic_linear(30, 2, 1.0, 9);
    const RobustSpec spec = RobustSpec::chi2_pen(0.5);
    SgmConfig cfg;
    cfg.step_size = 0.1;
    cfg.iterations = 100;
    cfg.radius = problem.radius;
    const GradEstimator est = [&](std::span<const double> x, RngStream& s) {
      return minibatch_estimate(problem.oracle, x, spec, 8, s);
    };
    const ValueFn eval = [&](std::span<const double> x) {
      return full_batch(problem, x, spec).value;
    };
    RngStream s1(24), s2(24);
    const RunResult a = run_sgm(std::vector<double>(2, 0.0), est, eval, cfg, s1);
    const RunResult b = run_sgm(std::vector<double>(2, 0.0), est, eval, cfg, s2);
    if (a.x != b.x || a.trace.points.size() != b.trace.points.size()) {
      detail = "identical seeds produced different runs";
      return false;
    }
    for (std::size_t i = 0; i < a.trace.points.size(); ++i)
      if (a.trace.points[i].value != b.trace.points[i].value) {
        detail = "identical seeds produced different traces";
        return false;
      }
    return true;
  });

  add("lambda-interval-cover", [](std::string& detail) {
    const auto intervals = lambda_intervals(1.0, 1.0, 0.25);
    if (intervals.size() != 2 || intervals[0] != std::pair(0.5, 1.0) ||
        intervals[1] != std::pair(0.25, 0.5)) {
      detail = "interval schedule mismatch at B=1, rho=1, eps=0.25";
      return false;
    }
    for (const auto& [lo, hi] : lambda_intervals(3.7, 0.9, 0.11))
      if (std::abs(hi / lo - 2.0) > 1e-12) {
        detail = "interval endpoint ratio differs from 2";
        return false;
      }
    return true;
  });

  add("step-and-averaging-rules", [](std::string& detail) {
    if (std::abs(theoretical_step_size(StepKind::sgm, 1.0, 1.0, 100, 1.0, 0.0) - 0.1) > 1e-15) {
      detail = "sgm step rule broken";
      return false;
    }
    if (std::abs(theoretical_step_size(StepKind::agm, 1.0, 1.0, 4, 1.0, 10.0) - 0.1) > 1e-15) {
      detail = "agm step rule broken";
      return false;
    }
    SuffixAverager avg(9, 3);
    for (int t = 1; t <= 9; ++t) avg.push(std::vector<double>{static_cast<double>(t)});
    if (avg.mean()[0] != 8.0) {
      detail = "suffix average of 1..9 with k=3 is not 8";
      return false;
    }
    return true;
  });

  int failures = 0;
  for (const auto& check : checks) {
    std::string detail;
    bool ok = false;
    try {
      ok = check.run(detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    std::printf("[%s] %-28s %s\n", ok ? "PASS" : "FAIL", check.name.c_str(), detail.c_str());
    if (!ok) ++failures;
  }
  std::printf("%zu properties, %d failed\n", checks.size(), failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace dro::cli
