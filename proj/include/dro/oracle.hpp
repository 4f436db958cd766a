#ifndef DRO_ORACLE_HPP
#define DRO_ORACLE_HPP

#include "dro/problems.hpp"

namespace dro {

// Exact robust objective on a finite-support problem: evaluates every atom
// with its probability and solves the weighted inner problem. Throws for
// problems without declared support.
InnerSolution full_batch(const Problem& problem, std::span<const double> x,
                         const RobustSpec& spec);

// Exact subgradient at x (q*-weighted atom gradients).
std::vector<double> full_batch_grad(const Problem& problem, std::span<const double> x,
                                    const RobustSpec& spec);

// Brute-force verification oracle: maximum of the primal objective over a
// resolution-spaced grid on the simplex. Supports n <= 4. The result is a
// lower bound on the true value, within O(Lipschitz * resolution) of it.
double simplex_grid_max(const std::vector<double>& values, const RobustSpec& spec,
                        double resolution);

// Exact batch-CVaR surrogate for Bernoulli(alpha) losses in {0, B}:
// E min{1, Bin(n, alpha)/(alpha n)} * B via binomial summation.
double bernoulli_cvar_surrogate(double alpha, int n, double B);

// Exact batch surrogate of an objective for Bernoulli(p) losses in {0, B}:
// sum_k P(Bin(n,p)=k) * value(batch with k ones).
double bernoulli_surrogate(const RobustSpec& spec, double p, int n, double B);

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Monte Carlo estimate of the batch surrogate E L(x; S_1^n) with standard
// error, over `reps` independent batches. Repetitions use derived
// per-repetition streams and reduce deterministically, so the parallel path
// is bit-identical to the serial one.
McEstimate mc_bias_estimate(const Problem& problem, std::span<const double> x,
                            const RobustSpec& spec, int n, int reps, RngStream& stream,
                            bool parallel = true);

// Empirical trace-variance of the mini-batch gradient estimator.
double mc_variance_estimate(const Problem& problem, std::span<const double> x,
                            const RobustSpec& spec, int n, int reps, RngStream& stream,
                            bool parallel = true);

// Central finite differences per coordinate.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

// Full-batch projected subgradient baseline run to convergence; the
// independent reference for optimization accuracy checks. Deterministic.
struct ReferenceResult {
  std::vector<double> x;
  double value = 0.0;
  long long grad_evals = 0;
};
ReferenceResult reference_minimize(const Problem& problem, const RobustSpec& spec,
                                   long long iterations, double step_scale = 1.0);

// Least-squares slope of log(y) against log(x); the bias/variance decay and
// second-moment growth checks all reduce to this.
double loglog_slope(std::span<const double> xs, std::span<const double> ys);

}  // namespace dro

#endif  // DRO_ORACLE_HPP
