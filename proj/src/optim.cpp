#include "dro/optim.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dro {

namespace {

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void project_ball_inplace(std::vector<double>& x, const std::optional<double>& radius) {
  if (!radius) return;
  const double nrm = norm2(x);
  if (nrm > *radius) {
    const double scale = *radius / nrm;
    for (double& v : x) v *= scale;
  }
}

void check_finite(const std::vector<double>& g, long long iter) {
  for (double v : g)
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "stochastic gradient became non-finite at iteration " << iter;
      throw std::runtime_error(msg.str());
    }
}

struct TraceRecorder {
  RunTrace trace;
  long long cadence;
  bool record_wall;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  TraceRecorder(const SgmConfig& cfg)
      : cadence(cfg.eval_every > 0 ? cfg.eval_every : std::max(1, cfg.iterations / 200)),
        record_wall(cfg.record_wall_time) {}

  void maybe_record(long long iter, long long grad_evals, const ValueFn& evaluate,
                    std::span<const double> x, double step, long long total_iters) {
    if (!evaluate) return;
    if (iter % cadence != 0 && iter != total_iters) return;
    TracePoint pt;
    pt.iter = iter;
    pt.grad_evals = grad_evals;
    pt.value = evaluate(x);
    pt.step_size = step;
    pt.wall_ms = record_wall
                     ? std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count()
                     : 0;
    trace.points.push_back(pt);
  }
};

class Averager {
 public:
  Averager(const SgmConfig& cfg, std::span<const double> x0)
      : mode_(cfg.averaging),
        suffix_(cfg.iterations, cfg.averaging == Averaging::suffix ? cfg.suffix_k : 1),
        last_(x0.begin(), x0.end()) {}

  void push(std::span<const double> x) {
    last_.assign(x.begin(), x.end());
    if (mode_ != Averaging::none) suffix_.push(x);
  }

  std::vector<double> result() const {
    return mode_ == Averaging::none ? last_ : suffix_.mean();
  }

 private:
  Averaging mode_;
  SuffixAverager suffix_;
  std::vector<double> last_;
};

}  // namespace

std::vector<double> project_ball(std::vector<double> x, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("project_ball: radius must be positive");
  project_ball_inplace(x, R);
  return x;
}

SuffixAverager::SuffixAverager(long long total_iters, int k) {
  if (k < 1) throw std::invalid_argument("SuffixAverager: k must be >= 1");
  if (total_iters < 1) total_iters = 1;
  const long long window = (total_iters + k - 1) / k;  // ceil(T/k)
  start_ = total_iters - window + 1;
}

void SuffixAverager::push(std::span<const double> x) {
  ++seen_;
  if (seen_ < start_) return;
  if (sum_.empty()) sum_.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) sum_[i] += x[i];
  ++count_;
}

std::vector<double> SuffixAverager::mean() const {
  if (count_ == 0) throw std::logic_error("SuffixAverager: no iterates in window");
  std::vector<double> out(sum_);
  for (double& v : out) v /= static_cast<double>(count_);
  return out;
}

RunResult run_sgm(std::span<const double> x0, const GradEstimator& estimator,
                  const ValueFn& evaluate, const SgmConfig& cfg, RngStream& stream) {
  if (cfg.iterations < 1) throw std::invalid_argument("run_sgm: iterations must be >= 1");
  std::vector<double> x(x0.begin(), x0.end());
  project_ball_inplace(x, cfg.radius);

  Averager avg(cfg, x);
  TraceRecorder rec(cfg);
  long long evals = 0;

  for (long long t = 1; t <= cfg.iterations; ++t) {
    RngStream iter_stream = stream.child(static_cast<std::uint64_t>(t));
    EstimatorOutput est = estimator(x, iter_stream);
    check_finite(est.grad, t);
    evals += est.grad_evals;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= cfg.step_size * est.grad[i];
    project_ball_inplace(x, cfg.radius);
    avg.push(x);
    rec.maybe_record(t, evals, evaluate, x, cfg.step_size, cfg.iterations);
  }

  RunResult out;
  out.x = avg.result();
  out.trace = std::move(rec.trace);
  out.grad_evals = evals;
  out.final_value = evaluate ? evaluate(out.x) : 0.0;
  return out;
}

RunResult run_nesterov(std::span<const double> x0, const GradEstimator& estimator,
                       const ValueFn& evaluate, const SgmConfig& cfg, RngStream& stream) {
  if (cfg.iterations < 1) throw std::invalid_argument("run_nesterov: iterations must be >= 1");
  const std::size_t d = x0.size();
  std::vector<double> x(x0.begin(), x0.end());
  project_ball_inplace(x, cfg.radius);

  Averager avg(cfg, x);
  TraceRecorder rec(cfg);
  long long evals = 0;

  if (cfg.use_theta_schedule) {
    // z_{t+1} = Pi(z_t - (eta/theta_t) g(x_t)); y_{t+1} = theta_t z_{t+1} +
    // (1-theta_t) y_t; x_{t+1} = theta_{t+1} z_{t+1} + (1-theta_{t+1}) y_{t+1}
    std::vector<double> y(x), z(x);
    for (long long t = 1; t <= cfg.iterations; ++t) {
      const double theta = 2.0 / (t + 1.0);
      const double theta_next = 2.0 / (t + 2.0);
      RngStream iter_stream = stream.child(static_cast<std::uint64_t>(t));
      EstimatorOutput est = estimator(x, iter_stream);
      check_finite(est.grad, t);
      evals += est.grad_evals;
      for (std::size_t i = 0; i < d; ++i) z[i] -= (cfg.step_size / theta) * est.grad[i];
      project_ball_inplace(z, cfg.radius);
      for (std::size_t i = 0; i < d; ++i) y[i] = theta * z[i] + (1.0 - theta) * y[i];
      for (std::size_t i = 0; i < d; ++i) x[i] = theta_next * z[i] + (1.0 - theta_next) * y[i];
      avg.push(y);
      rec.maybe_record(t, evals, evaluate, y, cfg.step_size, cfg.iterations);
    }
  } else {
    // velocity form: v_{t+1} = w v_t - eta g(x_t); x_{t+1} = x_t + w v_{t+1}
    // - eta g(x_t), projected when a radius is configured
    std::vector<double> v(d, 0.0);
    const double w = cfg.momentum;
    for (long long t = 1; t <= cfg.iterations; ++t) {
      RngStream iter_stream = stream.child(static_cast<std::uint64_t>(t));
      EstimatorOutput est = estimator(x, iter_stream);
      check_finite(est.grad, t);
      evals += est.grad_evals;
      for (std::size_t i = 0; i < d; ++i) {
        v[i] = w * v[i] - cfg.step_size * est.grad[i];
        x[i] += w * v[i] - cfg.step_size * est.grad[i];
      }
      project_ball_inplace(x, cfg.radius);
      avg.push(x);
      rec.maybe_record(t, evals, evaluate, x, cfg.step_size, cfg.iterations);
    }
  }

  RunResult out;
  out.x = avg.result();
  out.trace = std::move(rec.trace);
  out.grad_evals = evals;
  out.final_value = evaluate ? evaluate(out.x) : 0.0;
  return out;
}

double theoretical_step_size(StepKind kind, double R, double Gamma, long long T, double sigma,
                             double Lambda) {
  if (!(R > 0.0) || T < 1) throw std::invalid_argument("theoretical_step_size: bad inputs");
  const double sqrt_T = std::sqrt(static_cast<double>(T));
  if (kind == StepKind::sgm) {
    if (!(Gamma > 0.0)) throw std::invalid_argument("theoretical_step_size: Gamma must be > 0");
    return R / (sqrt_T * Gamma);
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("theoretical_step_size: sigma must be > 0");
  const double agm = R / (sqrt_T * static_cast<double>(T) * sigma);
  if (!(Lambda > 0.0) || std::isinf(Lambda)) return agm;
  return std::min(1.0 / Lambda, agm);
}

}  // namespace dro
