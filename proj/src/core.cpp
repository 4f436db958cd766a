#include "dro/core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dro {

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::cvar: return "cvar";
    case ObjectiveKind::kl_cvar: return "kl_cvar";
    case ObjectiveKind::chi2_pen: return "chi2_pen";
    case ObjectiveKind::chi2_con: return "chi2_con";
  }
  return "unknown";
}

RobustSpec RobustSpec::cvar(double alpha) {
  RobustSpec s;
  s.kind = ObjectiveKind::cvar;
  s.alpha = alpha;
  s.validate();
  return s;
}

RobustSpec RobustSpec::kl_cvar(double alpha, double lambda) {
  RobustSpec s;
  s.kind = ObjectiveKind::kl_cvar;
  s.alpha = alpha;
  s.lambda = lambda;
  s.validate();
  return s;
}

RobustSpec RobustSpec::chi2_pen(double lambda) {
  RobustSpec s;
  s.kind = ObjectiveKind::chi2_pen;
  s.lambda = lambda;
  s.validate();
  return s;
}

RobustSpec RobustSpec::chi2_con(double rho) {
  RobustSpec s;
  s.kind = ObjectiveKind::chi2_con;
  s.rho = rho;
  s.validate();
  return s;
}

void RobustSpec::validate() const {
  const bool uses_alpha = kind == ObjectiveKind::cvar || kind == ObjectiveKind::kl_cvar;
  const bool uses_lambda = kind == ObjectiveKind::kl_cvar || kind == ObjectiveKind::chi2_pen;
  const bool uses_rho = kind == ObjectiveKind::chi2_con;
  if (uses_alpha && !(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("RobustSpec: alpha must lie in (0, 1]");
  if (uses_lambda && !(lambda > 0.0))
    throw std::invalid_argument("RobustSpec: lambda must be positive");
  if (uses_rho && !(rho >= 0.0))
    throw std::invalid_argument("RobustSpec: rho must be nonnegative");
}

LossBatch::LossBatch(std::vector<double> values, std::optional<double> bound_B,
                     std::optional<double> bound_G)
    : values_(std::move(values)), bound_B_(bound_B), bound_G_(bound_G) {
  if (values_.empty()) throw std::invalid_argument("LossBatch: values must be nonempty");
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("LossBatch: non-finite loss value");
    if (bound_B_ && (v < -1e-12 || v > *bound_B_ + 1e-12))
      throw std::invalid_argument("LossBatch: loss value outside declared [0, B]");
  }
}

LossBatch::LossBatch(std::vector<double> values, std::vector<double> grads, int dim,
                     std::optional<double> bound_B, std::optional<double> bound_G)
    : LossBatch(std::move(values), bound_B, bound_G) {
  if (dim <= 0) throw std::invalid_argument("LossBatch: gradient dimension must be positive");
  if (grads.size() != values_.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("LossBatch: gradient matrix shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::invalid_argument("LossBatch: non-finite gradient entry");
  grads_ = std::move(grads);
  dim_ = dim;
}

Weights::Weights(std::vector<double> q) : q_(std::move(q)) {
  if (q_.empty()) throw std::invalid_argument("Weights: empty weight vector");
  double sum = 0.0;
  for (double& qi : q_) {
    if (!std::isfinite(qi)) throw std::invalid_argument("Weights: non-finite entry");
    if (qi < 0.0) {
      if (qi < -1e-12) throw std::invalid_argument("Weights: negative entry");
      qi = 0.0;  // clamp FP dust
    }
    sum += qi;
  }
  const double err = std::abs(sum - 1.0);
  if (err > renorm_tolerance)
    throw std::invalid_argument("Weights: sum deviates from 1 by more than 1e-7");
  if (err > 0.0)
    for (double& qi : q_) qi /= sum;
}

double chi2_divergence(const Weights& q) {
  const auto& w = q.values();
  const double n = static_cast<double>(w.size());
  double acc = 0.0;
  for (double qi : w) {
    const double t = n * qi - 1.0;
    acc += t * t;
  }
  return acc / (2.0 * n);
}

double kl_divergence(const Weights& q) {
  const auto& w = q.values();
  const double n = static_cast<double>(w.size());
  double acc = 0.0;
  for (double qi : w)
    if (qi > 0.0) acc += qi * std::log(n * qi);
  return acc;
}

double chi2_divergence(const Weights& q, std::span<const double> p) {
  const auto& w = q.values();
  if (p.size() != w.size()) throw std::invalid_argument("chi2_divergence: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (p[i] <= 0.0) {
      if (w[i] > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double t = w[i] / p[i] - 1.0;
    acc += p[i] * t * t;
  }
  return 0.5 * acc;
}

double kl_divergence(const Weights& q, std::span<const double> p) {
  const auto& w = q.values();
  if (p.size() != w.size()) throw std::invalid_argument("kl_divergence: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) {
      acc += p[i];  // psi(0) = 1 contribution
      continue;
    }
    if (p[i] <= 0.0) return std::numeric_limits<double>::infinity();
    acc += w[i] * std::log(w[i] / p[i]) - w[i] + p[i];
  }
  return acc;
}

}  // namespace dro
