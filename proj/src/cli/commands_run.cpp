#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "commands.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "dro/parallel.hpp"

namespace dro::cli {

namespace {

namespace fs = std::filesystem;

GradEstimator make_estimator(const RunConfig& cfg) {
  const Problem& problem = cfg.problem;
  const RobustSpec spec = cfg.objective;
  if (cfg.estimator.type == "minibatch") {
    const int n = cfg.estimator.n;
    return [&problem, spec, n](std::span<const double> x, RngStream& stream) {
      return minibatch_estimate(problem.oracle, x, spec, n, stream);
    };
  }
  const MlmcConfig mlmc = cfg.estimator.mlmc;
  return [&problem, spec, mlmc](std::span<const double> x, RngStream& stream) {
    return mlmc_estimate(problem.oracle, x, spec, mlmc, MlmcTarget::grad, stream);
  };
}

ValueFn make_evaluator(const Problem& problem, const RobustSpec& spec) {
  return [&problem, spec](std::span<const double> x) {
    return full_batch(problem, x, spec).value;
  };
}

// Stochastic gradient on the joint dual (x, eta); one sample per step.
RunResult run_dual_sgm(const RunConfig& cfg, RngStream& stream) {
  const Problem& problem = cfg.problem;
  const RobustSpec& spec = cfg.objective;
  if (spec.kind != ObjectiveKind::cvar && spec.kind != ObjectiveKind::chi2_pen)
    throw std::runtime_error("dual_sgm estimator supports cvar and chi2_pen objectives only");
  const SgmConfig& scfg = cfg.optimizer.sgm;

  const double scale =
      problem.bound_B.value_or(problem.bound_G.value_or(1.0) * problem.radius + 1.0);
  const double eta_lo = spec.kind == ObjectiveKind::chi2_pen ? -spec.lambda - scale : -scale;
  const double eta_hi = scale;

  const int d = problem.dim();
  std::vector<double> x(cfg.x0.empty() ? std::vector<double>(d, 0.0) : cfg.x0);
  double eta = 0.5 * (eta_lo + eta_hi);
  SuffixAverager avg(scfg.iterations, scfg.averaging == Averaging::suffix ? scfg.suffix_k : 1);
  const ValueFn evaluate = make_evaluator(problem, spec);

  RunResult out;
  const long long cadence =
      scfg.eval_every > 0 ? scfg.eval_every : std::max(1, scfg.iterations / 200);
  const auto t0 = std::chrono::steady_clock::now();
  for (long long t = 1; t <= scfg.iterations; ++t) {
    RngStream iter_stream = stream.child(static_cast<std::uint64_t>(t));
    const DualSgmGrad g = dual_sgm_grad(problem.oracle, x, eta, spec, iter_stream);
    out.grad_evals += 1;
    for (int j = 0; j < d; ++j) x[j] -= scfg.step_size * g.grad_x[j];
    double nrm = 0.0;
    for (double v : x) nrm += v * v;
    nrm = std::sqrt(nrm);
    const double R = scfg.radius.value_or(problem.radius);
    if (nrm > R)
      for (double& v : x) v *= R / nrm;
    eta = std::clamp(eta - scfg.step_size * g.grad_eta, eta_lo, eta_hi);
    if (scfg.averaging == Averaging::none)
      out.x = x;
    else
      avg.push(x);
    if (t % cadence == 0 || t == scfg.iterations) {
      TracePoint pt;
      pt.iter = t;
      pt.grad_evals = out.grad_evals;
      pt.value = evaluate(x);
      pt.step_size = scfg.step_size;
      pt.wall_ms = scfg.record_wall_time
                       ? std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count()
                       : 0;
      out.trace.points.push_back(pt);
    }
  }
  if (scfg.averaging != Averaging::none) out.x = avg.mean();
  out.final_value = evaluate(out.x);
  return out;
}

RunResult execute_once(const RunConfig& cfg, double step_size, RngStream& stream) {
  if (cfg.optimizer.type == "doubling") {
    auto [x, report] = doubling_minimize(cfg.problem, cfg.optimizer.doubling, stream);
    RunResult out;
    out.x = std::move(x);
    const RobustSpec con = RobustSpec::chi2_con(cfg.optimizer.doubling.rho);
    long long cumulative = 0;
    for (std::size_t i = 0; i < report.intervals.size(); ++i) {
      cumulative += report.intervals[i].grad_evals;
      TracePoint pt;
      pt.iter = static_cast<long long>(i + 1);
      pt.grad_evals = cumulative;
      pt.value = report.intervals[i].f_estimate;
      pt.step_size = 0.0;
      out.trace.points.push_back(pt);
    }
    out.grad_evals = report.total_grad_evals;
    out.final_value = full_batch(cfg.problem, out.x, con).value;
    return out;
  }

  SgmConfig scfg = cfg.optimizer.sgm;
  scfg.step_size = step_size;
  RunConfig local = cfg;
  local.optimizer.sgm = scfg;
  if (cfg.estimator.type == "dual_sgm") return run_dual_sgm(local, stream);

  const GradEstimator estimator = make_estimator(local);
  const ValueFn evaluate = make_evaluator(cfg.problem, cfg.objective);
  const std::vector<double> x0 =
      cfg.x0.empty() ? std::vector<double>(cfg.problem.dim(), 0.0) : cfg.x0;
  return cfg.optimizer.type == "nesterov" ? run_nesterov(x0, estimator, evaluate, scfg, stream)
                                          : run_sgm(x0, estimator, evaluate, scfg, stream);
}

// Coarse-to-fine step-size search: single run per candidate on the coarse
// decade grid, keep the best two by final value, then refine each by the
// factor-2 neighbors.
double tune_step_size(const RunConfig& cfg, RngStream& stream) {
  std::vector<double> coarse;
  for (int e = -5; e <= 0; ++e) coarse.push_back(std::pow(10.0, e));
  std::vector<std::pair<double, double>> scored;  // (value, step)
  const auto score = [&](double step) {
    RngStream tune_stream = stream.child(std::hash<long long>{}(
        static_cast<long long>(std::llround(std::log2(step) * 16))));
    try {
      const RunResult r = execute_once(cfg, step, tune_stream);
      return std::isfinite(r.final_value) ? r.final_value
                                          : std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  for (double step : coarse) scored.emplace_back(score(step), step);
  std::sort(scored.begin(), scored.end());
  std::vector<double> refine;
  for (int i = 0; i < 2 && i < static_cast<int>(scored.size()); ++i) {
    refine.push_back(scored[i].second);
    refine.push_back(scored[i].second * 0.5);
    refine.push_back(scored[i].second * 2.0);
  }
  std::sort(refine.begin(), refine.end());
  refine.erase(std::unique(refine.begin(), refine.end()), refine.end());
  double best_step = scored.front().second;
  double best_value = scored.front().first;
  for (double step : refine) {
    const double v = score(step);
    if (v < best_value) {
      best_value = v;
      best_step = step;
    }
  }
  return best_step;
}

int run_single(const json& entry, const CommonOptions& opts, long long sweep_index) {
  RunConfig cfg = build_run_config(entry);
  if (opts.seed_override)
    cfg.seed = sweep_index < 0 ? *opts.seed_override
                               : RngStream::mix(*opts.seed_override,
                                                static_cast<std::uint64_t>(sweep_index));
  if (opts.out_override) {
    cfg.out_dir = *opts.out_override;
    // entries of a sweep share the override, so give each its own subdir
    if (sweep_index >= 0) cfg.out_dir += "/entry_" + std::to_string(sweep_index);
  }
  cfg.optimizer.sgm.record_wall_time = opts.timing;
  fs::create_directories(cfg.out_dir);

  RngStream stream(cfg.seed);
  double step = cfg.optimizer.sgm.step_size;
  bool tuned = false;
  if (opts.tune && cfg.optimizer.type != "doubling") {
    RngStream tune_stream = stream.child(0xfeed);
    step = tune_step_size(cfg, tune_stream);
    tuned = true;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const RunResult result = execute_once(cfg, step, stream);
  const long long wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();

  CsvWriter trace(cfg.out_dir + "/trace.csv", "iter,grad_evals,value,step_size,wall_ms");
  for (const auto& pt : result.trace.points)
    trace.row(pt.iter, pt.grad_evals, pt.value, pt.step_size, pt.wall_ms);

  json summary;
  summary["final_value"] = result.final_value;
  summary["grad_evals"] = result.grad_evals;
  summary["wall_ms"] = wall_ms;
  summary["seed"] = cfg.seed;
  if (tuned) summary["tuned_step_size"] = step;
  if (cfg.estimator.mlmc_rounded)
    std::cerr << "warning: /estimator/n_cap rounded up to " << cfg.estimator.mlmc.n
              << " (n/n0 must be a power of two)\n";
  if (cfg.reference_value) {
    const double ref = *cfg.reference_value;
    const double thr = ref > 0.0 ? 1.02 * ref : ref + 0.02 * std::max(std::abs(ref), 1.0);
    const double N = cfg.problem.finite_support() ? cfg.problem.support_size() : 0;
    for (const auto& pt : result.trace.points) {
      if (pt.value <= thr) {
        if (N > 0) summary["epochs_to_2pct"] = pt.grad_evals / N;
        summary["grad_evals_to_2pct"] = pt.grad_evals;
        break;
      }
    }
  }
  std::ofstream summary_out(cfg.out_dir + "/summary.json");
  summary_out << summary.dump(2) << "\n";
  std::cout << cfg.out_dir << ": final_value=" << format_number(result.final_value)
            << " grad_evals=" << result.grad_evals << "\n";
  return 0;
}

}  // namespace

int cmd_run(const std::string& config_path, const CommonOptions& opts) {
  json root;
  try {
    root = load_json_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (root.is_array()) {  // sweep: list of configs, optionally parallel
      const int n = static_cast<int>(root.size());
      std::vector<int> codes(n, 0);
      const int jobs = std::max(1, opts.jobs);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
#endif
      for (int i = 0; i < n; ++i) {
        try {
          codes[i] = run_single(root[i], opts, i);
        } catch (const ConfigError& e) {
          std::cerr << "entry " << i << ": " << e.what() << "\n";
          codes[i] = 2;
        } catch (const std::exception& e) {
          std::cerr << "entry " << i << ": " << e.what() << "\n";
          codes[i] = 1;
        }
      }
      return *std::max_element(codes.begin(), codes.end());
    }
    return run_single(root, opts, -1);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dro::cli
