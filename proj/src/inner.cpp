#include "dro/inner.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double prob_at(std::span<const double> probs, int i, double inv_n) {
  return probs.empty() ? inv_n : probs[i];
}

double loss_scale(std::span<const double> values) {
  double s = 1.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

double resolve_tol(const BisectionConfig& cfg, double scale) {
  if (cfg.tol_eta > 0.0) return cfg.tol_eta;
  return std::max(1e-10 * scale, 1e-12);
}

// Indices sorted by descending loss, ties by ascending original index.
std::vector<int> descending_order(std::span<const double> values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  return order;
}

bool constant_values(std::span<const double> values) {
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return *mn == *mx;
}

InnerSolution reference_solution(std::span<const double> values, std::span<const double> probs) {
  const int n = static_cast<int>(values.size());
  const double inv_n = 1.0 / n;
  std::vector<double> q(n);
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    q[i] = prob_at(probs, i, inv_n);
    value += q[i] * values[i];
  }
  return InnerSolution{Weights(std::move(q)), values[0], value};
}

[[noreturn]] void bisection_failure(const char* where, double lo, double hi, double flo,
                                    double fhi) {
  std::ostringstream msg;
  msg << where << ": bisection did not converge; bracket [" << lo << ", " << hi << "] with f = ("
      << flo << ", " << fhi << ")";
  throw std::runtime_error(msg.str());
}

// Bisection for a nonincreasing function f with f(lo) >= 0 >= f(hi).
// Returns the midpoint once the bracket width drops below tol.
template <class F>
double bisect_decreasing(F&& f, double lo, double hi, double tol, int max_iters,
                         const char* where) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo <= 0.0) return lo;
  if (fhi >= 0.0) return hi;
  for (int it = 0; it < max_iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= tol || mid == lo || mid == hi) return mid;
    const double fm = f(mid);
    if (fm >= 0.0) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  if (hi - lo <= tol * 16) return 0.5 * (lo + hi);
  bisection_failure(where, lo, hi, flo, fhi);
}

// Conjugate of the KL-CVaR penalty: exponential below log(1/alpha), linear
// above (the CVaR cap).
double kl_conj(double v, double alpha) {
  const double thresh = -std::log(alpha);
  if (v < thresh) return std::expm1(v);
  return (1.0 / alpha - 1.0) + (v - thresh) / alpha;
}

double kl_conj_prime(double v, double alpha) {
  const double thresh = -std::log(alpha);
  if (v < thresh) return std::exp(v);
  return 1.0 / alpha;
}

}  // namespace

InnerSolution solve_cvar_weighted(std::span<const double> values, std::span<const double> probs,
                                  double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("solve_cvar: alpha not in (0,1]");
  const int n = static_cast<int>(values.size());
  if (n == 0) throw std::invalid_argument("solve_cvar: empty batch");
  if (constant_values(values)) return reference_solution(values, probs);

  const double inv_n = 1.0 / n;
  const auto order = descending_order(values);

  std::vector<double> q(n, 0.0);
  double remaining = 1.0;
  double value = 0.0;
  for (int k = 0; k < n && remaining > 0.0; ++k) {
    const int idx = order[k];
    const double w = std::min(prob_at(probs, idx, inv_n) / alpha, remaining);
    q[idx] = w;
    value += w * values[idx];
    remaining -= w;
  }

  // eta is the empirical value-at-risk: the loss at the first sorted position
  // whose preceding cumulative probability reaches alpha.
  double cum = 0.0;
  int cut = 0;
  for (int k = 0; k < n; ++k) {
    cum += prob_at(probs, order[k], inv_n);
    if (cum <= alpha * (1.0 + 1e-12))
      cut = k + 1;
    else
      break;
  }
  const double eta = values[order[std::min(cut, n - 1)]];
  return InnerSolution{Weights(std::move(q)), eta, value};
}

InnerSolution solve_cvar(const LossBatch& batch, double alpha) {
  return solve_cvar_weighted(batch.values(), {}, alpha);
}

InnerSolution solve_kl_cvar_weighted(std::span<const double> values, std::span<const double> probs,
                                     double alpha, double lambda, const BisectionConfig& cfg) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("solve_kl_cvar: alpha not in (0,1]");
  if (!(lambda > 0.0)) throw std::invalid_argument("solve_kl_cvar: lambda must be positive");
  const int n = static_cast<int>(values.size());
  if (n == 0) throw std::invalid_argument("solve_kl_cvar: empty batch");
  if (constant_values(values)) return reference_solution(values, probs);

  const double inv_n = 1.0 / n;
  const double scale = loss_scale(values);
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double vmin = *mn_it, vmax = *mx_it;

  // The simplex constraint sum_i q_i = 1 as a function of eta; decreasing.
  const auto excess_mass = [&](double eta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += prob_at(probs, i, inv_n) * kl_conj_prime((values[i] - eta) / lambda, alpha);
    return s - 1.0;
  };

  // Below min - lambda*log(1/alpha) every multiplier is capped at 1/alpha,
  // so the bracket is guaranteed to straddle the root.
  const double lo = vmin - lambda * std::log(1.0 / alpha) - 1e-12 * scale;
  // Tight tolerance so that sum(q) stays within the simplex tolerance even
  // for small lambda (the constraint slope scales like 1/(alpha*lambda)).
  const double tol =
      std::max(std::min(resolve_tol(cfg, scale), 1e-10 * alpha * lambda), 1e-15 * scale);
  const double eta =
      bisect_decreasing(excess_mass, lo, vmax, tol, cfg.max_iters, "solve_kl_cvar");

  std::vector<double> q(n);
  double dual = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = prob_at(probs, i, inv_n);
    const double v = (values[i] - eta) / lambda;
    q[i] = p * kl_conj_prime(v, alpha);
    dual += p * kl_conj(v, alpha);
  }
  dual = lambda * dual + eta;
  return InnerSolution{Weights(std::move(q)), eta, dual};
}

InnerSolution solve_kl_cvar(const LossBatch& batch, double alpha, double lambda,
                            const BisectionConfig& cfg) {
  return solve_kl_cvar_weighted(batch.values(), {}, alpha, lambda, cfg);
}

double chi2_pen_eta_bisect(std::span<const double> values, std::span<const double> probs,
                           double lambda, const BisectionConfig& cfg) {
  const int n = static_cast<int>(values.size());
  const double inv_n = 1.0 / n;
  const double scale = std::max(loss_scale(values), lambda);
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const auto hinge_mass = [&](double eta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += prob_at(probs, i, inv_n) * std::max(values[i] - eta, 0.0);
    return s - lambda;
  };
  const double tol = std::max(std::min(resolve_tol(cfg, scale), 1e-12 * scale), 1e-15 * scale);
  return bisect_decreasing(hinge_mass, *mn_it - lambda - 1e-12 * scale, *mx_it, tol,
                           cfg.max_iters, "chi2_pen_eta_bisect");
}

InnerSolution solve_chi2_pen_weighted(std::span<const double> values,
                                      std::span<const double> probs, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("solve_chi2_pen: lambda must be positive");
  const int n = static_cast<int>(values.size());
  if (n == 0) throw std::invalid_argument("solve_chi2_pen: empty batch");
  if (constant_values(values)) return reference_solution(values, probs);

  const double inv_n = 1.0 / n;
  const double scale = loss_scale(values);
  const auto order = descending_order(values);

  // eta solves sum_i p_i (l_i - eta)_+ = lambda. Scanning prefixes of the
  // sorted losses gives the unique k with l_(k+1) <= eta <= l_(k).
  double eta = std::numeric_limits<double>::quiet_NaN();
  double prefix_w = 0.0, prefix_lw = 0.0;
  const double tie_tol = 1e-12 * scale;
  for (int k = 0; k < n; ++k) {
    const int idx = order[k];
    const double p = prob_at(probs, idx, inv_n);
    prefix_w += p;
    prefix_lw += p * values[idx];
    const double cand = (prefix_lw - lambda) / prefix_w;
    const double next = (k + 1 < n) ? values[order[k + 1]] : -kInf;
    if (cand >= next - tie_tol && cand <= values[idx] + tie_tol) {
      eta = cand;
      break;
    }
  }
  if (!std::isfinite(eta)) eta = chi2_pen_eta_bisect(values, probs, lambda);
#ifndef NDEBUG
  assert(std::abs(eta - chi2_pen_eta_bisect(values, probs, lambda)) <= 1e-8 * scale);
#endif

  std::vector<double> q(n);
  double dual = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = prob_at(probs, i, inv_n);
    const double hinge = std::max(values[i] - eta, 0.0);
    q[i] = p * hinge / lambda;
    dual += p * hinge * hinge;
  }
  dual = dual / (2.0 * lambda) + 0.5 * lambda + eta;
  return InnerSolution{Weights(std::move(q)), eta, dual};
}

InnerSolution solve_chi2_pen(const LossBatch& batch, double lambda) {
  return solve_chi2_pen_weighted(batch.values(), {}, lambda);
}

InnerSolution solve_chi2_con_weighted(std::span<const double> values,
                                      std::span<const double> probs, double rho,
                                      const BisectionConfig& cfg) {
  if (!(rho >= 0.0)) throw std::invalid_argument("solve_chi2_con: rho must be nonnegative");
  const int n = static_cast<int>(values.size());
  if (n == 0) throw std::invalid_argument("solve_chi2_con: empty batch");
  if (rho == 0.0 || constant_values(values)) return reference_solution(values, probs);

  const double inv_n = 1.0 / n;
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double vmin = *mn_it, vmax = *mx_it;
  const double scale = loss_scale(values);

  // If the radius admits the minimum-divergence distribution supported on the
  // maximal losses, the dual infimum is attained only in the limit; return
  // that distribution directly instead of stalling the bisection.
  double pmax = 0.0;
  for (int i = 0; i < n; ++i)
    if (values[i] == vmax) pmax += prob_at(probs, i, inv_n);
  if ((1.0 + 2.0 * rho) * pmax >= 1.0) {
    std::vector<double> q(n, 0.0);
    for (int i = 0; i < n; ++i)
      if (values[i] == vmax) q[i] = prob_at(probs, i, inv_n) / pmax;
    return InnerSolution{Weights(std::move(q)), vmax, vmax};
  }

  // Optimality condition: mean (l-eta)_+^2 = (1+2rho) (mean (l-eta)_+)^2.
  // The sign of the residual matches the sign of the dual derivative, which
  // is nondecreasing by convexity, so bisection applies. Negative toward
  // -infinity; positive just below the max because (1+2rho) pmax < 1 here.
  const auto residual = [&](double eta) {
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double h = std::max(values[i] - eta, 0.0);
      const double p = prob_at(probs, i, inv_n);
      m1 += p * h;
      m2 += p * h * h;
    }
    return m2 - (1.0 + 2.0 * rho) * m1 * m1;
  };

  double lo = vmin - (vmax - vmin) - scale;
  double hi = vmax - 1e-13 * scale;
  for (int tries = 0; residual(lo) >= 0.0 && tries < 128; ++tries)
    lo -= 2.0 * (hi - lo);  // expand-by-doubling fallback

  const double tol = std::max(std::min(resolve_tol(cfg, scale), 1e-11 * scale), 1e-15 * scale);
  const auto neg_residual = [&](double eta) { return -residual(eta); };
  const double eta =
      bisect_decreasing(neg_residual, lo, hi, tol, cfg.max_iters, "solve_chi2_con");

  double m1 = 0.0, m2 = 0.0;
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) {
    const double p = prob_at(probs, i, inv_n);
    const double h = std::max(values[i] - eta, 0.0);
    q[i] = p * h;
    m1 += p * h;
    m2 += p * h * h;
  }
  for (double& qi : q) qi /= m1;
  const double value = std::sqrt((1.0 + 2.0 * rho) * m2) + eta;
  return InnerSolution{Weights(std::move(q)), eta, value};
}

InnerSolution solve_chi2_con(const LossBatch& batch, double rho, const BisectionConfig& cfg) {
  return solve_chi2_con_weighted(batch.values(), {}, rho, cfg);
}

InnerSolution solve_inner_weighted(std::span<const double> values, std::span<const double> probs,
                                   const RobustSpec& spec, const BisectionConfig& cfg) {
  spec.validate();
  switch (spec.kind) {
    case ObjectiveKind::cvar: return solve_cvar_weighted(values, probs, spec.alpha);
    case ObjectiveKind::kl_cvar:
      return solve_kl_cvar_weighted(values, probs, spec.alpha, spec.lambda, cfg);
    case ObjectiveKind::chi2_pen: return solve_chi2_pen_weighted(values, probs, spec.lambda);
    case ObjectiveKind::chi2_con: return solve_chi2_con_weighted(values, probs, spec.rho, cfg);
  }
  throw std::invalid_argument("solve_inner: unknown objective kind");
}

InnerSolution solve_inner(const LossBatch& batch, const RobustSpec& spec,
                          const BisectionConfig& cfg) {
  return solve_inner_weighted(batch.values(), {}, spec, cfg);
}

std::vector<double> robust_grad_from_inner(const LossBatch& batch, const InnerSolution& sol) {
  if (!batch.has_grads())
    throw std::invalid_argument("robust_grad_from_inner: batch has no gradients");
  if (sol.weights.n() != batch.n())
    throw std::invalid_argument("robust_grad_from_inner: weight/batch size mismatch");
  const int d = batch.dim();
  std::vector<double> g(d, 0.0);
  for (int i = 0; i < batch.n(); ++i) {
    const double qi = sol.weights[i];
    if (qi == 0.0) continue;
    const auto row = batch.grad_row(i);
    for (int j = 0; j < d; ++j) g[j] += qi * row[j];
  }
  return g;
}

double lambda_derivative(const LossBatch& batch, double lambda) {
  const InnerSolution sol = solve_chi2_pen(batch, lambda);
  return -chi2_divergence(sol.weights);
}

}  // namespace dro
