#ifndef DRO_OPTIM_HPP
#define DRO_OPTIM_HPP

#include <functional>
#include <optional>

#include "dro/core.hpp"
#include "dro/rng.hpp"

namespace dro {

enum class Averaging { none, full, suffix };

// Configuration for the projected stochastic gradient loops.
//   momentum > 0 with use_theta_schedule == false selects the constant-
//   momentum accelerated recursion; use_theta_schedule selects the
//   three-sequence form with theta_t = 2/(t+1).
struct SgmConfig {
  double step_size = 0.1;
  int iterations = 100;
  double momentum = 0.0;
  bool use_theta_schedule = false;
  Averaging averaging = Averaging::full;
  int suffix_k = 3;
  std::optional<double> radius;  // Euclidean ball projection when set
  int eval_every = 0;            // 0 = auto: max(1, iterations/200)
  bool record_wall_time = false;
};

struct TracePoint {
  long long iter = 0;
  long long grad_evals = 0;
  double value = 0.0;
  double step_size = 0.0;
  long long wall_ms = 0;
};

struct RunTrace {
  std::vector<TracePoint> points;
};

struct RunResult {
  std::vector<double> x;
  RunTrace trace;
  long long grad_evals = 0;
  double final_value = 0.0;
};

using GradEstimator = std::function<EstimatorOutput(std::span<const double>, RngStream&)>;
using ValueFn = std::function<double(std::span<const double>)>;

// Euclidean projection onto the ball of radius R.
std::vector<double> project_ball(std::vector<double> x, double R);

// Running average over the last ceil(T/k) of T iterates, O(d) memory.
class SuffixAverager {
 public:
  SuffixAverager(long long total_iters, int k);
  void push(std::span<const double> x);
  std::vector<double> mean() const;

 private:
  long long start_;  // first 1-based iterate index included
  long long seen_ = 0;
  long long count_ = 0;
  std::vector<double> sum_;
};

// Projected stochastic gradient method with fixed step size. The estimator
// is called with a fresh child stream per iteration; traces are recorded on
// the evaluation cadence. Non-finite gradients abort with a diagnostic.
RunResult run_sgm(std::span<const double> x0, const GradEstimator& estimator,
                  const ValueFn& evaluate, const SgmConfig& cfg, RngStream& stream);

// Accelerated variant. With use_theta_schedule the projected three-sequence
// recursion with theta_t = 2/(t+1) is used and the y-sequence is averaged;
// otherwise the unconstrained constant-momentum recursion (velocity form),
// with projection applied to the iterate when a radius is configured.
RunResult run_nesterov(std::span<const double> x0, const GradEstimator& estimator,
                       const ValueFn& evaluate, const SgmConfig& cfg, RngStream& stream);

enum class StepKind { sgm, agm };

// Prop-style step sizes with unit constants: sgm -> R/(sqrt(T) Gamma),
// agm -> min(1/Lambda, R/(T^{3/2} sigma)); an infinite or nonpositive
// Lambda disables the smoothness term.
double theoretical_step_size(StepKind kind, double R, double Gamma, long long T, double sigma,
                             double Lambda);

}  // namespace dro

#endif  // DRO_OPTIM_HPP
