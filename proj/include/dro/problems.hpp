#ifndef DRO_PROBLEMS_HPP
#define DRO_PROBLEMS_HPP

#include <string>

#include "dro/estimators.hpp"

namespace dro {

// A stochastic optimization instance: sample oracle plus domain metadata.
// All bundled generators have finite support; atom_probs lists the exact
// atom probabilities so ground-truth objectives can be computed.
struct Problem {
  SampleOracle oracle;
  double radius = 1.0;  // feasible Euclidean ball radius R
  std::optional<double> bound_B;
  std::optional<double> bound_G;
  std::vector<double> atom_probs;

  int dim() const { return oracle.dim; }
  bool finite_support() const { return !atom_probs.empty(); }
  int support_size() const { return static_cast<int>(atom_probs.size()); }
};

// Attaches a categorical sampler over atom_probs to the oracle.
void finalize_finite_support(Problem& p);

// Bernoulli(p0) sample with scaled linear loss l(x;s) = B * s * x on
// x in [0, R]; pure estimator studies evaluate at x = 1.
Problem bernoulli_linear(double p0, double B, double R);

// Pair of two-atom instances P_{+1}, P_{-1} with l(x;s) = x*s where
// S_v = G*mu w.p. alpha + delta*v and -G otherwise,
// mu = (delta/2alpha)/(1 - delta/2alpha). The CVaR objectives are piecewise
// linear with minima 0 (at x=0) and -G*R*mu (at x=R) respectively.
std::pair<Problem, Problem> cvar_lecam_pair(double G, double R, double alpha, double delta);

// Analytic CVaR objective of the +1/-1 instance at x.
double lecam_cvar_value(double G, double alpha, double delta, int v, double x);

// Three-atom instance on which the constrained-chi^2 MLMC estimator blows
// up: P(S=1) = 1/(1+2rho), P(S=2) chosen so that (1-p2)^n = 1/2, losses
// {0, 1/(30n), 1} and gradients {-G, +G, -G} at x = 0.
Problem three_point_hard(double rho, double G, int n);

// Feature dataset: N rows, feat_dim features, integer labels in [0, C),
// optional group tags for subgroup metrics.
struct Dataset {
  int feat_dim = 0;
  int n_classes = 0;
  std::vector<double> features;  // N x feat_dim, row-major
  std::vector<int> labels;
  std::vector<int> groups;  // empty when absent

  int n() const { return static_cast<int>(labels.size()); }
  bool has_groups() const { return !groups.empty(); }
  std::span<const double> row(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * feat_dim,
            static_cast<std::size_t>(feat_dim)};
  }
};

// Parses `label,group?,f0,f1,...` CSV; errors carry 1-based line numbers.
Dataset load_dataset_csv(const std::string& path);

// Multi-class logarithmic loss with quadratic regularization of the weight
// rows (bias row unregularized). Parameter layout: C rows of feat_dim
// weights followed by C biases, dim = C*(feat_dim+1). Declared B and G are
// estimates from the observed feature norms; override where exact bounds
// are required.
Problem multiclass_logistic(const Dataset& data, double mu, double radius);

// Finite-support linear-loss instance: N atoms with loss <a_i, x> + c_i,
// c_i = ||a_i|| * R so losses stay nonnegative on the radius-R ball.
Problem synthetic_linear(int n_atoms, int dim, double radius, std::uint64_t seed);

// Synthetic mixture-with-rare-group classification dataset (not a
// reproduction of any published dataset; a stand-in for subgroup studies).
Dataset synthetic_subgroup_dataset(int n, int feat_dim, int n_classes, double rare_fraction,
                                   std::uint64_t seed);

}  // namespace dro

#endif  // DRO_PROBLEMS_HPP
