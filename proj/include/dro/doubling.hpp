#ifndef DRO_DOUBLING_HPP
#define DRO_DOUBLING_HPP

#include <stdexcept>

#include "dro/problems.hpp"

namespace dro {

// Configuration for minimizing the constrained-chi^2 objective through its
// penalized dual over lambda intervals. Per-interval iteration counts, MLMC
// batch sizes and step sizes are derived from the plug-in formulas with the
// multipliers below; explicit overrides win when set.
struct DoublingConfig {
  double rho = 1.0;
  double epsilon = 0.1;                 // target accuracy, loss units
  std::optional<double> bound_B;        // overrides the problem's declared B
  int selection_reps = 9;               // odd; median-of-means value estimation
  long long value_batch_cap = 1000000;  // per selection repeat

  double t_scale = 1.0;
  double n_scale = 1.0;
  double n0_scale = 1.0;
  double step_scale_x = 1.0;
  double step_scale_lambda = 1.0;

  std::optional<int> iterations_override;
  std::optional<MlmcConfig> mlmc_override;
};

// Factor-2 cover of the dual domain: K = ceil(log2(2B/eps)) - 1 intervals
// [lambda^{i+1}, lambda^i] with lambda^i = (B/rho) 2^{1-i}.
std::vector<std::pair<double, double>> lambda_intervals(double B, double rho, double epsilon);

struct IntervalRun {
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  std::vector<double> x_bar;
  double lambda_hat = 0.0;
  long long grad_evals = 0;
  long long budget = 0;       // plug-in prediction for this interval
  double f_estimate = 0.0;    // filled by the selection step
  long long value_evals = 0;  // loss evaluations spent on selection
};

// Joint projected SGM in (x, lambda) on one interval, driven by the shared
// MLMC estimate of (grad_x L_pen, d/d lambda L_pen + rho). Returns averaged
// x and lambda; lambda iterates never leave [lo, hi].
IntervalRun joint_xlambda_sgm(const Problem& problem, std::pair<double, double> interval,
                              const DoublingConfig& cfg, RngStream& stream);

struct DoublingReport {
  std::vector<IntervalRun> intervals;
  int selected_index = -1;  // 0-based
  long long total_grad_evals = 0;
  long long total_value_evals = 0;
};

// Raised when an interval run fails; carries the report for the intervals
// completed so far.
struct DoublingError : std::runtime_error {
  DoublingReport partial;
  DoublingError(const std::string& what, DoublingReport report)
      : std::runtime_error(what), partial(std::move(report)) {}
};

// Runs every interval, estimates f_rho(x_bar, lambda_hat) for each by a
// median of mini-batch values, and returns the x with the lowest estimate.
std::pair<std::vector<double>, DoublingReport> doubling_minimize(const Problem& problem,
                                                                 const DoublingConfig& cfg,
                                                                 RngStream& stream);

}  // namespace dro

#endif  // DRO_DOUBLING_HPP
