#include "dro/doubling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dro {

namespace {

struct IntervalParams {
  int T;
  MlmcConfig mlmc;
  double gamma_x;
  double gamma_lambda;
};

double resolve_B(const Problem& problem, const DoublingConfig& cfg) {
  if (cfg.bound_B) return *cfg.bound_B;
  if (problem.bound_B) return *problem.bound_B;
  throw std::invalid_argument("doubling: loss bound B is neither declared nor overridden");
}

// Plug-in parameter choices for one interval: batch sizes from the bias
// bound B^2/(lambda eps), base size from the second-moment bound, iteration
// count from the (x, lambda) gradient moments.
IntervalParams interval_params(const Problem& problem, const DoublingConfig& cfg, double lo,
                               double hi, double B) {
  const double eps = cfg.epsilon / 2.0;
  const double G = problem.bound_G.value_or(1.0);
  const double R = problem.radius;

  IntervalParams out{};
  if (cfg.mlmc_override) {
    out.mlmc = *cfg.mlmc_override;
  } else {
    // cap from the bias bound B^2/(lambda n) <= eps, base size from the
    // second-moment bound (B/lambda) log2(n)
    const double n_raw = std::min(cfg.n_scale * B * B / (lo * eps), 1e6);
    const double n0_raw = cfg.n0_scale * (B / lo) * std::log2(std::max(4.0, n_raw));
    const int n0 = std::max(1, static_cast<int>(std::lround(std::min(n0_raw, n_raw / 2.0))));
    out.mlmc = MlmcConfig::make_rounded(n0, std::max(2 * n0, static_cast<int>(n_raw)));
  }

  const double gamma_lambda_moment = std::sqrt(B * B / (lo * lo) + cfg.rho * cfg.rho);
  if (cfg.iterations_override) {
    out.T = *cfg.iterations_override;
  } else {
    const double t_raw =
        cfg.t_scale * (G * G * R * R + gamma_lambda_moment * gamma_lambda_moment * hi * hi) /
        (eps * eps);
    out.T = std::max(8, static_cast<int>(std::lround(std::min(t_raw, 2e6))));
  }
  out.gamma_x = cfg.step_scale_x * R / (G * std::sqrt(static_cast<double>(out.T)));
  out.gamma_lambda =
      cfg.step_scale_lambda * (hi - lo) / (gamma_lambda_moment * std::sqrt(static_cast<double>(out.T)));
  return out;
}

}  // namespace

std::vector<std::pair<double, double>> lambda_intervals(double B, double rho, double epsilon) {
  if (!(B > 0.0 && rho > 0.0)) throw std::invalid_argument("lambda_intervals: need B, rho > 0");
  if (!(epsilon > 0.0 && epsilon < B))
    throw std::invalid_argument("lambda_intervals: need 0 < epsilon < B");
  const int K = static_cast<int>(std::ceil(std::log2(2.0 * B / epsilon))) - 1;
  std::vector<std::pair<double, double>> intervals;
  intervals.reserve(std::max(K, 1));
  for (int i = 1; i <= std::max(K, 1); ++i) {
    const double hi = (B / rho) * std::ldexp(1.0, -i + 1);
    intervals.emplace_back(0.5 * hi, hi);
  }
  return intervals;
}

IntervalRun joint_xlambda_sgm(const Problem& problem, std::pair<double, double> interval,
                              const DoublingConfig& cfg, RngStream& stream) {
  const auto [lo, hi] = interval;
  if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("joint_xlambda_sgm: bad interval");
  const double B = resolve_B(problem, cfg);
  const IntervalParams params = interval_params(problem, cfg, lo, hi, B);

  const int d = problem.dim();
  std::vector<double> x(d, 0.0);
  double lambda = 0.5 * (lo + hi);

  std::vector<double> x_sum(d, 0.0);
  double lambda_sum = 0.0;
  long long evals = 0;

  for (int t = 1; t <= params.T; ++t) {
    RngStream iter_stream = stream.child(static_cast<std::uint64_t>(t));
    const JointPenEstimate est =
        mlmc_joint_chi2_pen(problem.oracle, x, lambda, params.mlmc, iter_stream);
    evals += est.grad_evals;
    for (int j = 0; j < d; ++j) {
      if (!std::isfinite(est.grad_x[j]))
        throw std::runtime_error("joint_xlambda_sgm: non-finite gradient");
      x[j] -= params.gamma_x * est.grad_x[j];
    }
    double nrm = 0.0;
    for (double v : x) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm > problem.radius)
      for (double& v : x) v *= problem.radius / nrm;

    lambda -= params.gamma_lambda * (est.lambda_deriv + cfg.rho);
    lambda = std::clamp(lambda, lo, hi);

    for (int j = 0; j < d; ++j) x_sum[j] += x[j];
    lambda_sum += lambda;
  }

  IntervalRun run;
  run.lambda_lo = lo;
  run.lambda_hi = hi;
  run.x_bar.resize(d);
  for (int j = 0; j < d; ++j) run.x_bar[j] = x_sum[j] / params.T;
  run.lambda_hat = lambda_sum / params.T;
  run.grad_evals = evals;
  const auto levels = level_distribution(params.mlmc);
  double expected_batch = 0.0;
  for (const auto& [j, qj] : levels) expected_batch += qj * std::ldexp(1.0, j) * params.mlmc.n0;
  run.budget = static_cast<long long>(params.T * expected_batch);
  return run;
}

std::pair<std::vector<double>, DoublingReport> doubling_minimize(const Problem& problem,
                                                                 const DoublingConfig& cfg,
                                                                 RngStream& stream) {
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("doubling_minimize: epsilon must be > 0");
  if (!(cfg.rho > 0.0)) throw std::invalid_argument("doubling_minimize: rho must be > 0");
  const double B = resolve_B(problem, cfg);
  if (!(cfg.epsilon < B)) throw std::invalid_argument("doubling_minimize: epsilon must be < B");
  if (cfg.selection_reps < 1 || cfg.selection_reps % 2 == 0)
    throw std::invalid_argument("doubling_minimize: selection_reps must be odd and positive");

  const auto intervals = lambda_intervals(B, cfg.rho, cfg.epsilon);
  DoublingReport report;
  report.intervals.reserve(intervals.size());

  for (std::size_t i = 0; i < intervals.size(); ++i) {
    RngStream interval_stream = stream.child(i);
    IntervalRun run;
    try {
      run = joint_xlambda_sgm(problem, intervals[i], cfg, interval_stream);
    } catch (const std::exception& e) {
      throw DoublingError("interval " + std::to_string(i + 1) + " of " +
                              std::to_string(intervals.size()) + " failed: " + e.what(),
                          std::move(report));
    }

    // estimate f_rho(x_bar, lambda_hat) = L_pen + lambda*rho by a median of
    // mini-batch values with batch size ~ B^2/(lambda eps^2)
    const double hi = intervals[i].second;
    const long long batch = std::min(
        cfg.value_batch_cap,
        std::max<long long>(
            8, static_cast<long long>(B * B / (hi * cfg.epsilon * cfg.epsilon))));
    RngStream value_stream = interval_stream.child(0x5e1ec7);
    std::vector<double> estimates(cfg.selection_reps);
    const RobustSpec pen = RobustSpec::chi2_pen(run.lambda_hat);
    for (int r = 0; r < cfg.selection_reps; ++r) {
      RngStream rep_stream = value_stream.child(static_cast<std::uint64_t>(r));
      std::vector<int> tokens(batch);
      for (long long s = 0; s < batch; ++s) tokens[s] = problem.oracle.draw(rep_stream);
      std::vector<double> losses;
      evaluate_batch(problem.oracle, run.x_bar, tokens, losses, nullptr);
      estimates[r] = solve_inner_weighted(losses, {}, pen).value + run.lambda_hat * cfg.rho;
    }
    std::nth_element(estimates.begin(), estimates.begin() + cfg.selection_reps / 2,
                     estimates.end());
    run.f_estimate = estimates[cfg.selection_reps / 2];
    run.value_evals = batch * cfg.selection_reps;

    report.total_grad_evals += run.grad_evals;
    report.total_value_evals += run.value_evals;
    report.intervals.push_back(std::move(run));
  }

  report.selected_index = 0;
  for (std::size_t i = 1; i < report.intervals.size(); ++i)
    if (report.intervals[i].f_estimate <
        report.intervals[report.selected_index].f_estimate)
      report.selected_index = static_cast<int>(i);

  std::vector<double> x_star = report.intervals[report.selected_index].x_bar;
  return {std::move(x_star), std::move(report)};
}

}  // namespace dro
