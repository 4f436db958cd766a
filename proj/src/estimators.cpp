#include "dro/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "dro/parallel.hpp"

namespace dro {

namespace {

// Inner solve on a token range [lo, hi) of pre-evaluated losses.
InnerSolution solve_range(std::span<const double> losses, int lo, int hi, const RobustSpec& spec) {
  return solve_inner_weighted(losses.subspan(lo, hi - lo), {}, spec);
}

// F evaluated on a range: robust value, gradient, or lambda-derivative,
// all derived from the same inner solution.
struct RangeFunctional {
  const RobustSpec& spec;
  std::span<const double> losses;
  const std::vector<double>& grads;  // n x dim, row-major (may be empty)
  int dim;

  // Returns the scalar value and, when out != nullptr, accumulates the
  // q*-weighted gradient into out (overwriting it).
  double operator()(int lo, int hi, std::vector<double>* out) const {
    const InnerSolution sol = solve_range(losses, lo, hi, spec);
    double scalar;
    switch (target) {
      case MlmcTarget::value: scalar = sol.value; break;
      case MlmcTarget::lambda_deriv: scalar = -chi2_divergence(sol.weights); break;
      case MlmcTarget::grad: scalar = sol.value; break;
    }
    if (out) {
      out->assign(dim, 0.0);
      for (int i = lo; i < hi; ++i) {
        const double qi = sol.weights[i - lo];
        if (qi == 0.0) continue;
        const double* row = grads.data() + static_cast<std::size_t>(i) * dim;
        for (int j = 0; j < dim; ++j) (*out)[j] += qi * row[j];
      }
    }
    return scalar;
  }

  MlmcTarget target = MlmcTarget::grad;
};

int draw_level(const MlmcConfig& cfg, RngStream& stream) {
  return std::min(stream.geometric_half(), cfg.j_max());
}

double level_prob(const MlmcConfig& cfg, int j) {
  return std::ldexp(1.0, -j + (j == cfg.j_max() ? 1 : 0));
}

}  // namespace

void evaluate_batch(const SampleOracle& oracle, std::span<const double> x,
                    std::span<const int> tokens, std::vector<double>& losses_out,
                    std::vector<double>* grads_out, bool parallel) {
  const std::int64_t n = static_cast<std::int64_t>(tokens.size());
  const int d = oracle.dim;
  losses_out.resize(n);
  if (grads_out) grads_out->resize(n * static_cast<std::int64_t>(d));
  parallel_for(
      n,
      [&](std::int64_t i) {
        losses_out[i] = oracle.loss(x, tokens[i]);
        if (grads_out)
          oracle.loss_grad(x, tokens[i], {grads_out->data() + i * d, static_cast<std::size_t>(d)});
      },
      parallel && n >= 256);
}

LossBatch sample_batch(const SampleOracle& oracle, std::span<const double> x, int n,
                       RngStream& stream, bool parallel) {
  std::vector<int> tokens(n);
  for (int i = 0; i < n; ++i) tokens[i] = oracle.draw(stream);
  std::vector<double> losses, grads;
  evaluate_batch(oracle, x, tokens, losses, &grads, parallel);
  return LossBatch(std::move(losses), std::move(grads), oracle.dim);
}

EstimatorOutput minibatch_estimate(const SampleOracle& oracle, std::span<const double> x,
                                   const RobustSpec& spec, int n, RngStream& stream) {
  if (n < 1) throw std::invalid_argument("minibatch_estimate: n must be >= 1");
  const LossBatch batch = sample_batch(oracle, x, n, stream);
  const InnerSolution sol = solve_inner(batch, spec);
  EstimatorOutput out;
  out.grad = robust_grad_from_inner(batch, sol);
  out.value_estimate = sol.value;
  out.grad_evals = n;
  return out;
}

int MlmcConfig::j_max() const {
  validate();
  int ratio = n / n0, j = 0;
  while (ratio > 1) {
    ratio >>= 1;
    ++j;
  }
  return j;
}

void MlmcConfig::validate() const {
  if (n0 < 1) throw std::invalid_argument("MlmcConfig: n0 must be >= 1");
  const int ratio = n0 > 0 ? n / n0 : 0;
  if (n != n0 * ratio || ratio < 2 || (ratio & (ratio - 1)) != 0)
    throw std::invalid_argument("MlmcConfig: n/n0 must be a power of two >= 2");
}

MlmcConfig MlmcConfig::make_rounded(int n0, int n_cap, bool* rounded) {
  if (n0 < 1) throw std::invalid_argument("MlmcConfig: n0 must be >= 1");
  int n = 2 * n0;
  while (n < n_cap) n *= 2;
  if (rounded) *rounded = (n != n_cap);
  return MlmcConfig{n0, n};
}

std::vector<std::pair<int, double>> level_distribution(const MlmcConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<int, double>> dist;
  for (int j = 1; j <= cfg.j_max(); ++j) dist.emplace_back(j, level_prob(cfg, j));
  return dist;
}

EstimatorOutput mlmc_estimate(const SampleOracle& oracle, std::span<const double> x,
                              const RobustSpec& spec, const MlmcConfig& cfg, MlmcTarget target,
                              RngStream& stream) {
  cfg.validate();
  if (target == MlmcTarget::lambda_deriv && spec.kind != ObjectiveKind::chi2_pen)
    throw std::invalid_argument("mlmc_estimate: lambda_deriv requires a chi2_pen spec");

  const int j = draw_level(cfg, stream);
  const double qj = level_prob(cfg, j);
  const int k = (1 << j) * cfg.n0;

  std::vector<int> tokens(k);
  for (int i = 0; i < k; ++i) tokens[i] = oracle.draw(stream);
  std::vector<double> losses, grads;
  const bool need_grads = target == MlmcTarget::grad;
  evaluate_batch(oracle, x, tokens, losses, need_grads ? &grads : nullptr);

  RangeFunctional f{spec, losses, grads, oracle.dim, target};
  EstimatorOutput out;
  out.grad_evals = k;

  if (target == MlmcTarget::grad) {
    std::vector<double> base(oracle.dim), full(oracle.dim), left(oracle.dim), right(oracle.dim);
    const double base_value = f(0, cfg.n0, &base);
    f(0, k, &full);
    f(0, k / 2, &left);
    f(k / 2, k, &right);
    out.grad.resize(oracle.dim);
    for (int c = 0; c < oracle.dim; ++c)
      out.grad[c] = base[c] + (full[c] - 0.5 * (left[c] + right[c])) / qj;
    out.value_estimate = base_value;  // base-level value, biased; diagnostic only
  } else {
    const double base = f(0, cfg.n0, nullptr);
    const double full = f(0, k, nullptr);
    const double left = f(0, k / 2, nullptr);
    const double right = f(k / 2, k, nullptr);
    const double est = base + (full - 0.5 * (left + right)) / qj;
    if (target == MlmcTarget::value) {
      out.value_estimate = est;
    } else {
      out.grad.assign(1, est);
      out.value_estimate = base;
    }
  }
  return out;
}

JointPenEstimate mlmc_joint_chi2_pen(const SampleOracle& oracle, std::span<const double> x,
                                     double lambda, const MlmcConfig& cfg, RngStream& stream) {
  cfg.validate();
  const RobustSpec spec = RobustSpec::chi2_pen(lambda);
  const int j = draw_level(cfg, stream);
  const double qj = level_prob(cfg, j);
  const int k = (1 << j) * cfg.n0;

  std::vector<int> tokens(k);
  for (int i = 0; i < k; ++i) tokens[i] = oracle.draw(stream);
  std::vector<double> losses, grads;
  evaluate_batch(oracle, x, tokens, losses, &grads);

  const int d = oracle.dim;
  std::vector<double> gbuf(d);
  // (gradient, lambda-derivative) from one inner solve per range
  const auto eval = [&](int lo, int hi, std::vector<double>& g) {
    const InnerSolution sol = solve_range(losses, lo, hi, spec);
    g.assign(d, 0.0);
    for (int i = lo; i < hi; ++i) {
      const double qi = sol.weights[i - lo];
      if (qi == 0.0) continue;
      const double* row = grads.data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) g[c] += qi * row[c];
    }
    return std::make_pair(-chi2_divergence(sol.weights), sol.value);
  };

  std::vector<double> base_g(d), full_g(d), left_g(d), right_g(d);
  const auto [base_dl, base_val] = eval(0, cfg.n0, base_g);
  const auto [full_dl, full_val] = eval(0, k, full_g);
  const auto [left_dl, left_val] = eval(0, k / 2, left_g);
  const auto [right_dl, right_val] = eval(k / 2, k, right_g);
  (void)full_val;
  (void)left_val;
  (void)right_val;

  JointPenEstimate out;
  out.grad_x.resize(d);
  for (int c = 0; c < d; ++c)
    out.grad_x[c] = base_g[c] + (full_g[c] - 0.5 * (left_g[c] + right_g[c])) / qj;
  out.lambda_deriv = base_dl + (full_dl - 0.5 * (left_dl + right_dl)) / qj;
  out.value_base = base_val;
  out.grad_evals = k;
  return out;
}

double mlmc_second_moment(const SampleOracle& oracle, std::span<const double> x,
                          const RobustSpec& spec, const MlmcConfig& cfg, MlmcTarget target,
                          int reps_per_level, RngStream& stream, bool parallel) {
  cfg.validate();
  if (reps_per_level < 1) throw std::invalid_argument("mlmc_second_moment: reps must be >= 1");
  double total = 0.0;
  const bool need_grads = target == MlmcTarget::grad;
  for (int j = 1; j <= cfg.j_max(); ++j) {
    const double qj = level_prob(cfg, j);
    const int k = (1 << j) * cfg.n0;
    RngStream level_stream = stream.child(static_cast<std::uint64_t>(j));
    std::vector<double> sq(reps_per_level, 0.0);
    parallel_for(
        reps_per_level,
        [&](std::int64_t r) {
          RngStream rep_stream = level_stream.child(static_cast<std::uint64_t>(r));
          std::vector<int> tokens(k);
          for (int i = 0; i < k; ++i) tokens[i] = oracle.draw(rep_stream);
          std::vector<double> losses, grads;
          evaluate_batch(oracle, x, tokens, losses, need_grads ? &grads : nullptr, false);
          RangeFunctional f{spec, losses, grads, oracle.dim, target};
          if (need_grads) {
            std::vector<double> base(oracle.dim), full(oracle.dim), left(oracle.dim),
                right(oracle.dim);
            f(0, cfg.n0, &base);
            f(0, k, &full);
            f(0, k / 2, &left);
            f(k / 2, k, &right);
            double s = 0.0;
            for (int c = 0; c < oracle.dim; ++c) {
              const double m = base[c] + (full[c] - 0.5 * (left[c] + right[c])) / qj;
              s += m * m;
            }
            sq[r] = s;
          } else {
            const double m = f(0, cfg.n0, nullptr) +
                             (f(0, k, nullptr) -
                              0.5 * (f(0, k / 2, nullptr) + f(k / 2, k, nullptr))) /
                                 qj;
            sq[r] = m * m;
          }
        },
        parallel);
    double level_mean = 0.0;
    for (double v : sq) level_mean += v;
    level_mean /= reps_per_level;
    total += qj * level_mean;
  }
  return total;
}

DualSgmGrad dual_sgm_grad(const SampleOracle& oracle, std::span<const double> x, double eta,
                          const RobustSpec& spec, RngStream& stream) {
  spec.validate();
  if (spec.kind != ObjectiveKind::cvar && spec.kind != ObjectiveKind::chi2_pen)
    throw std::invalid_argument("dual_sgm_grad: supported kinds are cvar and chi2_pen");
  const int token = oracle.draw(stream);
  DualSgmGrad out;
  out.loss = oracle.loss(x, token);
  double multiplier;
  if (spec.kind == ObjectiveKind::cvar)
    multiplier = out.loss >= eta ? 1.0 / spec.alpha : 0.0;
  else
    multiplier = std::max((out.loss - eta) / spec.lambda, 0.0);
  out.grad_eta = 1.0 - multiplier;
  out.grad_x.assign(oracle.dim, 0.0);
  if (multiplier != 0.0) {
    oracle.loss_grad(x, token, out.grad_x);
    for (double& g : out.grad_x) g *= multiplier;
  }
  return out;
}

}  // namespace dro
