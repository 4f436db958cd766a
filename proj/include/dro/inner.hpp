#ifndef DRO_INNER_HPP
#define DRO_INNER_HPP

#include "dro/core.hpp"

namespace dro {

// Controls the 1-d bisections on the dual variable eta. tol_eta <= 0 means
// automatic: 1e-10 times the loss scale, floored at 1e-12.
struct BisectionConfig {
  double tol_eta = 0.0;
  int max_iters = 200;
};

// Exact inner maximization over the simplex for each objective kind.
// All solvers are pure functions of their inputs and safe to call
// concurrently. Sorting ties break by descending value then ascending
// original index, which makes the returned weights deterministic.
//
// CVaR at level alpha: worst alpha-tail average; closed form via one sort.
InnerSolution solve_cvar(const LossBatch& batch, double alpha);

// KL-regularized CVaR: bisection on eta for the penalized dual with the
// piecewise conjugate (exponential below log(1/alpha), linear above).
InnerSolution solve_kl_cvar(const LossBatch& batch, double alpha, double lambda,
                            const BisectionConfig& cfg = {});

// Penalized chi^2: eta solves mean((l - eta)_+) = lambda via the sorted
// prefix-mean closed form; a bisection cross-check runs in debug builds.
InnerSolution solve_chi2_pen(const LossBatch& batch, double lambda);

// Constrained chi^2: bisection on the optimality condition
// mean((l-eta)_+^2) = (1+2 rho) (mean (l-eta)_+)^2, with a closed-form
// shortcut when the radius admits a point mass on the maximal losses.
InnerSolution solve_chi2_con(const LossBatch& batch, double rho, const BisectionConfig& cfg = {});

// Dispatch on spec.kind.
InnerSolution solve_inner(const LossBatch& batch, const RobustSpec& spec,
                          const BisectionConfig& cfg = {});

// q*-weighted combination of the per-sample gradients.
std::vector<double> robust_grad_from_inner(const LossBatch& batch, const InnerSolution& sol);

// d/d lambda of the penalized-chi^2 empirical objective: -D_chi2(q*).
double lambda_derivative(const LossBatch& batch, double lambda);

// Weighted analogues with general atom probabilities (probs sums to 1);
// these back the exact finite-support objectives in the oracle module.
// An empty probs span means uniform 1/n.
InnerSolution solve_cvar_weighted(std::span<const double> values, std::span<const double> probs,
                                  double alpha);
InnerSolution solve_kl_cvar_weighted(std::span<const double> values, std::span<const double> probs,
                                     double alpha, double lambda,
                                     const BisectionConfig& cfg = {});
InnerSolution solve_chi2_pen_weighted(std::span<const double> values,
                                      std::span<const double> probs, double lambda);
InnerSolution solve_chi2_con_weighted(std::span<const double> values,
                                      std::span<const double> probs, double rho,
                                      const BisectionConfig& cfg = {});
InnerSolution solve_inner_weighted(std::span<const double> values, std::span<const double> probs,
                                   const RobustSpec& spec, const BisectionConfig& cfg = {});

// Bisection path for the penalized-chi^2 eta; exposed so tests can check it
// agrees with the sorted-prefix closed form.
double chi2_pen_eta_bisect(std::span<const double> values, std::span<const double> probs,
                           double lambda, const BisectionConfig& cfg = {});

}  // namespace dro

#endif  // DRO_INNER_HPP
