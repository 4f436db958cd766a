#ifndef DRO_ESTIMATORS_HPP
#define DRO_ESTIMATORS_HPP

#include <functional>
#include <utility>

#include "dro/core.hpp"
#include "dro/inner.hpp"
#include "dro/rng.hpp"

namespace dro {

// Source of i.i.d. samples together with first-order loss access. Samples are
// opaque integer tokens (atom indices for finite-support distributions).
// Successive draws from one stream are independent; distinct streams may be
// used concurrently.
struct SampleOracle {
  int dim = 0;
  std::function<int(RngStream&)> draw;
  std::function<double(std::span<const double>, int)> loss;
  // Writes the per-sample gradient into `out` (size dim).
  std::function<void(std::span<const double>, int, std::span<double>)> loss_grad;
};

// Evaluates losses (and gradients when grads_out != nullptr) for a token
// batch. Parallelizes over samples with per-slot writes, so the parallel and
// serial paths produce bit-identical buffers.
void evaluate_batch(const SampleOracle& oracle, std::span<const double> x,
                    std::span<const int> tokens, std::vector<double>& losses_out,
                    std::vector<double>* grads_out, bool parallel = true);

// Builds a LossBatch at x from n fresh draws.
LossBatch sample_batch(const SampleOracle& oracle, std::span<const double> x, int n,
                       RngStream& stream, bool parallel = true);

// Mini-batch gradient estimator: solves the inner problem on one batch of
// size n and returns the q*-weighted gradient. Unbiased for the gradient of
// the batch surrogate objective at size n.
EstimatorOutput minibatch_estimate(const SampleOracle& oracle, std::span<const double> x,
                                   const RobustSpec& spec, int n, RngStream& stream);

// Multi-level Monte Carlo configuration: base batch n0 and cap n = 2^j * n0.
struct MlmcConfig {
  int n0 = 1;
  int n = 2;

  int j_max() const;
  void validate() const;
  // Rounds n up to the next n0 * 2^j; sets *rounded when adjustment happened.
  static MlmcConfig make_rounded(int n0, int n_cap, bool* rounded = nullptr);
};

// Level distribution q(j) = 2^{-j + [j == j_max]} on {1, ..., j_max}.
std::vector<std::pair<int, double>> level_distribution(const MlmcConfig& cfg);

enum class MlmcTarget { grad, value, lambda_deriv };

// Randomized telescoping estimator: draws J from the truncated geometric
// level distribution, draws 2^J n0 samples, and returns
//   F(S_1^{n0}) + (F(S_1^k) - F(S_1^{k/2})/2 - F(S_{k/2+1}^k)/2) / q(J)
// with k = 2^J n0. Unbiased for E F(S_1^n) at expected sample cost
// n0 (1 + log2(n/n0)).
//
// target = grad:         F is the batch robust gradient; value_estimate is
//                        the base-level batch value (diagnostic only).
// target = value:        F is the batch robust value; grad stays empty.
// target = lambda_deriv: F is d/d lambda of the penalized-chi^2 value,
//                        i.e. -D_chi2(q*); requires spec.kind == chi2_pen.
//                        The scalar is returned in grad[0].
EstimatorOutput mlmc_estimate(const SampleOracle& oracle, std::span<const double> x,
                              const RobustSpec& spec, const MlmcConfig& cfg, MlmcTarget target,
                              RngStream& stream);

// Joint MLMC estimate of (grad_x, d/d lambda) for the penalized-chi^2
// objective from a single level draw; used by the doubling scheme.
struct JointPenEstimate {
  std::vector<double> grad_x;
  double lambda_deriv = 0.0;
  double value_base = 0.0;
  long long grad_evals = 0;
};
JointPenEstimate mlmc_joint_chi2_pen(const SampleOracle& oracle, std::span<const double> x,
                                     double lambda, const MlmcConfig& cfg, RngStream& stream);

// Exact second moment of the MLMC estimator by stratifying over levels:
// E ||M||^2 = sum_j q(j) E ||F(S_1^{n0}) + D_hat_{2^j n0}/q(j)||^2, with each
// level term estimated from reps_per_level independent draws.
double mlmc_second_moment(const SampleOracle& oracle, std::span<const double> x,
                          const RobustSpec& spec, const MlmcConfig& cfg, MlmcTarget target,
                          int reps_per_level, RngStream& stream, bool parallel = true);

// Per-sample gradient of the joint dual objective in (x, eta) for CVaR and
// penalized chi^2: grad_x = psi*'((l - eta)/lambda) * grad l and
// grad_eta = 1 - psi*'((l - eta)/lambda) (for CVaR the multiplier is
// (1/alpha) 1{l >= eta}).
struct DualSgmGrad {
  std::vector<double> grad_x;
  double grad_eta = 0.0;
  double loss = 0.0;
};
DualSgmGrad dual_sgm_grad(const SampleOracle& oracle, std::span<const double> x, double eta,
                          const RobustSpec& spec, RngStream& stream);

}  // namespace dro

#endif  // DRO_ESTIMATORS_HPP
