#include "dro/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dro/optim.hpp"
#include "dro/parallel.hpp"

namespace dro {

namespace {

void require_finite_support(const Problem& problem, const char* where) {
  if (!problem.finite_support())
    throw std::invalid_argument(std::string(where) + ": problem must declare finite support");
}

// Losses at every atom of a finite-support problem.
std::vector<double> atom_losses(const Problem& problem, std::span<const double> x,
                                std::vector<double>* grads = nullptr) {
  const int N = problem.support_size();
  std::vector<int> tokens(N);
  for (int i = 0; i < N; ++i) tokens[i] = i;
  std::vector<double> losses;
  evaluate_batch(problem.oracle, x, tokens, losses, grads);
  return losses;
}

double log_binom_pmf(int n, int k, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
         k * std::log(p) + (n - k) * std::log1p(-p);
}

}  // namespace

InnerSolution full_batch(const Problem& problem, std::span<const double> x,
                         const RobustSpec& spec) {
  require_finite_support(problem, "full_batch");
  const auto losses = atom_losses(problem, x);
  return solve_inner_weighted(losses, problem.atom_probs, spec);
}

std::vector<double> full_batch_grad(const Problem& problem, std::span<const double> x,
                                    const RobustSpec& spec) {
  require_finite_support(problem, "full_batch_grad");
  std::vector<double> grads;
  const auto losses = atom_losses(problem, x, &grads);
  const InnerSolution sol = solve_inner_weighted(losses, problem.atom_probs, spec);
  const int d = problem.dim();
  std::vector<double> g(d, 0.0);
  for (int i = 0; i < problem.support_size(); ++i) {
    const double qi = sol.weights[i];
    if (qi == 0.0) continue;
    const double* row = grads.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) g[j] += qi * row[j];
  }
  return g;
}

double simplex_grid_max(const std::vector<double>& values, const RobustSpec& spec,
                        double resolution) {
  const int n = static_cast<int>(values.size());
  if (n < 1 || n > 4) throw std::invalid_argument("simplex_grid_max: supports 1 <= n <= 4");
  if (!(resolution > 0.0 && resolution <= 0.5))
    throw std::invalid_argument("simplex_grid_max: bad resolution");
  spec.validate();
  const int M = static_cast<int>(std::lround(1.0 / resolution));
  const double step = 1.0 / M;

  const double cap = (spec.kind == ObjectiveKind::cvar || spec.kind == ObjectiveKind::kl_cvar)
                         ? 1.0 / (spec.alpha * n) + 1e-12
                         : 2.0;

  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> q(n);
  const auto consider = [&]() {
    double lin = 0.0;
    for (int i = 0; i < n; ++i) lin += q[i] * values[i];
    switch (spec.kind) {
      case ObjectiveKind::cvar: best = std::max(best, lin); break;
      case ObjectiveKind::kl_cvar: {
        double kl = 0.0;
        for (int i = 0; i < n; ++i)
          if (q[i] > 0.0) kl += q[i] * std::log(n * q[i]);
        best = std::max(best, lin - spec.lambda * kl);
        break;
      }
      case ObjectiveKind::chi2_pen: {
        double d2 = 0.0;
        for (int i = 0; i < n; ++i) d2 += (n * q[i] - 1.0) * (n * q[i] - 1.0);
        best = std::max(best, lin - spec.lambda * d2 / (2.0 * n));
        break;
      }
      case ObjectiveKind::chi2_con: {
        double d2 = 0.0;
        for (int i = 0; i < n; ++i) d2 += (n * q[i] - 1.0) * (n * q[i] - 1.0);
        if (d2 / (2.0 * n) <= spec.rho + 1e-12) best = std::max(best, lin);
        break;
      }
    }
  };

  // enumerate lattice points of the simplex
  const auto fill_and_consider = [&](int k_last) {
    q[n - 1] = k_last * step;
    bool feasible = true;
    for (int i = 0; i < n; ++i)
      if (q[i] > cap) feasible = false;
    if (feasible) consider();
  };
  if (n == 1) {
    q[0] = 1.0;
    consider();
  } else if (n == 2) {
    for (int a = 0; a <= M; ++a) {
      q[0] = a * step;
      fill_and_consider(M - a);
    }
  } else if (n == 3) {
    for (int a = 0; a <= M; ++a) {
      q[0] = a * step;
      if (q[0] > cap) continue;
      for (int b = 0; b <= M - a; ++b) {
        q[1] = b * step;
        fill_and_consider(M - a - b);
      }
    }
  } else {
    for (int a = 0; a <= M; ++a) {
      q[0] = a * step;
      if (q[0] > cap) continue;
      for (int b = 0; b <= M - a; ++b) {
        q[1] = b * step;
        if (q[1] > cap) continue;
        for (int c = 0; c <= M - a - b; ++c) {
          q[2] = c * step;
          fill_and_consider(M - a - b - c);
        }
      }
    }
  }
  return best;
}

double bernoulli_cvar_surrogate(double alpha, int n, double B) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("bernoulli_cvar_surrogate: alpha not in (0,1]");
  if (n < 1 || n > 10000)
    throw std::invalid_argument("bernoulli_cvar_surrogate: n must be in [1, 1e4]");
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double pk = std::exp(log_binom_pmf(n, k, alpha));
    acc += pk * std::min(1.0, k / (alpha * n));
  }
  return B * acc;
}

double bernoulli_surrogate(const RobustSpec& spec, double p, int n, double B) {
  spec.validate();
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("bernoulli_surrogate: p not in (0,1)");
  if (n < 1 || n > 10000) throw std::invalid_argument("bernoulli_surrogate: n must be in [1, 1e4]");
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double pk = std::exp(log_binom_pmf(n, k, p));
    double value;
    if (k == 0) {
      value = 0.0;
    } else if (k == n) {
      value = B;
    } else {
      // batch with k losses at B and n-k at 0, grouped into two atoms
      const double values2[2] = {B, 0.0};
      const double probs2[2] = {static_cast<double>(k) / n, static_cast<double>(n - k) / n};
      value = solve_inner_weighted({values2, 2}, {probs2, 2}, spec).value;
    }
    acc += pk * value;
  }
  return acc;
}

McEstimate mc_bias_estimate(const Problem& problem, std::span<const double> x,
                            const RobustSpec& spec, int n, int reps, RngStream& stream,
                            bool parallel) {
  if (reps < 2) throw std::invalid_argument("mc_bias_estimate: reps must be >= 2");
  std::vector<double> vals(reps);
  parallel_for(
      reps,
      [&](std::int64_t r) {
        RngStream rep_stream = stream.child(static_cast<std::uint64_t>(r));
        std::vector<int> tokens(n);
        for (int i = 0; i < n; ++i) tokens[i] = problem.oracle.draw(rep_stream);
        std::vector<double> losses;
        evaluate_batch(problem.oracle, x, tokens, losses, nullptr, false);
        vals[r] = solve_inner_weighted(losses, {}, spec).value;
      },
      parallel);
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= reps;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (reps - 1.0));
  return McEstimate{mean, sd / std::sqrt(static_cast<double>(reps))};
}

double mc_variance_estimate(const Problem& problem, std::span<const double> x,
                            const RobustSpec& spec, int n, int reps, RngStream& stream,
                            bool parallel) {
  if (reps < 2) throw std::invalid_argument("mc_variance_estimate: reps must be >= 2");
  const int d = problem.dim();
  std::vector<double> grads_buf(static_cast<std::size_t>(reps) * d);
  parallel_for(
      reps,
      [&](std::int64_t r) {
        RngStream rep_stream = stream.child(static_cast<std::uint64_t>(r));
        std::vector<int> tokens(n);
        for (int i = 0; i < n; ++i) tokens[i] = problem.oracle.draw(rep_stream);
        std::vector<double> losses, grads;
        evaluate_batch(problem.oracle, x, tokens, losses, &grads, false);
        const InnerSolution sol = solve_inner_weighted(losses, {}, spec);
        double* out = grads_buf.data() + r * d;
        std::fill(out, out + d, 0.0);
        for (int i = 0; i < n; ++i) {
          const double qi = sol.weights[i];
          if (qi == 0.0) continue;
          const double* row = grads.data() + static_cast<std::size_t>(i) * d;
          for (int j = 0; j < d; ++j) out[j] += qi * row[j];
        }
      },
      parallel);
  double trace_var = 0.0;
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) mean += grads_buf[static_cast<std::size_t>(r) * d + j];
    mean /= reps;
    double ss = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double dev = grads_buf[static_cast<std::size_t>(r) * d + j] - mean;
      ss += dev * dev;
    }
    trace_var += ss / (reps - 1.0);
  }
  return trace_var;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = xp[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

ReferenceResult reference_minimize(const Problem& problem, const RobustSpec& spec,
                                   long long iterations, double step_scale) {
  require_finite_support(problem, "reference_minimize");
  const int d = problem.dim();
  std::vector<double> x(d, 0.0);

  double G = problem.bound_G.value_or(0.0);
  if (G <= 0.0) {
    const auto g0 = full_batch_grad(problem, x, spec);
    for (double v : g0) G = std::max(G, std::abs(v));
    G = std::max(G * std::sqrt(static_cast<double>(d)), 1e-8);
  }

  SuffixAverager avg(iterations, 3);
  long long evals = 0;
  for (long long t = 1; t <= iterations; ++t) {
    const auto g = full_batch_grad(problem, x, spec);
    evals += problem.support_size();
    const double step = step_scale * problem.radius / (G * std::sqrt(static_cast<double>(t)));
    for (int j = 0; j < d; ++j) x[j] -= step * g[j];
    double nrm = 0.0;
    for (double v : x) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm > problem.radius)
      for (double& v : x) v *= problem.radius / nrm;
    avg.push(x);
  }
  ReferenceResult out;
  out.x = avg.mean();
  out.value = full_batch(problem, out.x, spec).value;
  out.grad_evals = evals;
  return out;
}

double loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("loglog_slope: need matching arrays of size >= 2");
  const int n = static_cast<int>(xs.size());
  double mx = 0.0, my = 0.0;
  std::vector<double> lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

}  // namespace dro
