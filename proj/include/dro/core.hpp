#ifndef DRO_CORE_HPP
#define DRO_CORE_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dro {

enum class ObjectiveKind { cvar, kl_cvar, chi2_pen, chi2_con };

std::string to_string(ObjectiveKind kind);

// Robust objective specification: which uncertainty set / penalty is in play
// and its parameters. Only the fields relevant to `kind` are set; the rest
// stay NaN and must not be read.
struct RobustSpec {
  ObjectiveKind kind;
  double alpha = std::numeric_limits<double>::quiet_NaN();   // cvar, kl_cvar
  double lambda = std::numeric_limits<double>::quiet_NaN();  // kl_cvar, chi2_pen
  double rho = std::numeric_limits<double>::quiet_NaN();     // chi2_con

  static RobustSpec cvar(double alpha);
  static RobustSpec kl_cvar(double alpha, double lambda);
  static RobustSpec chi2_pen(double lambda);
  static RobustSpec chi2_con(double rho);

  // Throws std::invalid_argument on out-of-range parameters.
  void validate() const;
};

// Loss values (and optionally per-sample gradients) for one batch.
// Gradients are stored row-major, n x dim.
class LossBatch {
 public:
  LossBatch(std::vector<double> values, std::optional<double> bound_B = std::nullopt,
            std::optional<double> bound_G = std::nullopt);
  LossBatch(std::vector<double> values, std::vector<double> grads, int dim,
            std::optional<double> bound_B = std::nullopt,
            std::optional<double> bound_G = std::nullopt);

  int n() const { return static_cast<int>(values_.size()); }
  int dim() const { return dim_; }
  bool has_grads() const { return !grads_.empty(); }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> grad_row(int i) const {
    return {grads_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::optional<double> bound_B() const { return bound_B_; }
  std::optional<double> bound_G() const { return bound_G_; }

 private:
  std::vector<double> values_;
  std::vector<double> grads_;  // empty when absent
  int dim_ = 0;
  std::optional<double> bound_B_;
  std::optional<double> bound_G_;
};

// Point on the probability simplex. Construction validates nonnegativity and
// renormalizes when the sum is within 1e-7 of one; anything further off is
// rejected as a solver bug rather than silently fixed.
class Weights {
 public:
  explicit Weights(std::vector<double> q);

  int n() const { return static_cast<int>(q_.size()); }
  const std::vector<double>& values() const { return q_; }
  double operator[](int i) const { return q_[i]; }

  static constexpr double sum_tolerance = 1e-9;
  static constexpr double renorm_tolerance = 1e-7;

 private:
  std::vector<double> q_;
};

// Result of an exact inner maximization: worst-case weights, the dual
// variable they came from, and the robust objective value.
struct InnerSolution {
  Weights weights;
  double eta;
  double value;
};

// Output of a stochastic gradient/value estimator.
struct EstimatorOutput {
  std::vector<double> grad;
  double value_estimate = 0.0;
  long long grad_evals = 0;
};

// chi^2 divergence of q from the uniform distribution on n points:
// D(q) = (1/2n) sum_i (n q_i - 1)^2.
double chi2_divergence(const Weights& q);

// KL divergence of q from uniform: sum_i q_i log(n q_i). The CVaR box
// constraint n q_i <= 1/alpha is a separate feasibility check for callers.
double kl_divergence(const Weights& q);

// Divergences against a general reference distribution p (used for exact
// finite-support objectives with non-uniform atom probabilities).
double chi2_divergence(const Weights& q, std::span<const double> p);
double kl_divergence(const Weights& q, std::span<const double> p);

}  // namespace dro

#endif  // DRO_CORE_HPP
