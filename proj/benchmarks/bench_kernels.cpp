// Compares the OpenMP kernels against their serial reference paths:
// batch evaluation, Monte Carlo bias estimation, gradient variance
// estimation and the MLMC second-moment table.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "dro/oracle.hpp"
#include "dro/parallel.hpp"

using namespace dro;

namespace {

template <class F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s serial %9.1f ms   parallel %9.1f ms   speedup %4.2fx   %s\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", max_threads());

  const Dataset data = synthetic_subgroup_dataset(4000, 24, 10, 0.1, 3);
  const Problem logistic = multiclass_logistic(data, 1e-3, 10.0);
  const Problem bernoulli = bernoulli_linear(0.3, 1.0, 1.0);
  const RobustSpec pen = RobustSpec::chi2_pen(0.4);

  {
    std::vector<double> x(logistic.dim(), 0.01);
    std::vector<int> tokens(data.n());
    for (int i = 0; i < data.n(); ++i) tokens[i] = i;
    std::vector<double> l1, g1, l2, g2;
    const double ts = time_ms([&] {
      for (int r = 0; r < 10; ++r) evaluate_batch(logistic.oracle, x, tokens, l1, &g1, false);
    });
    const double tp = time_ms([&] {
      for (int r = 0; r < 10; ++r) evaluate_batch(logistic.oracle, x, tokens, l2, &g2, true);
    });
    report("evaluate_batch (logistic)", ts, tp, l1 == l2 && g1 == g2);
  }

  {
    const std::vector<double> x{1.0};
    RngStream s1(7), s2(7);
    McEstimate a{}, b{};
    const double ts =
        time_ms([&] { a = mc_bias_estimate(bernoulli, x, pen, 64, 200000, s1, false); });
    const double tp =
        time_ms([&] { b = mc_bias_estimate(bernoulli, x, pen, 64, 200000, s2, true); });
    report("mc_bias_estimate", ts, tp, a.mean == b.mean && a.stderr_ == b.stderr_);
  }

  {
    const std::vector<double> x{1.0};
    RngStream s1(8), s2(8);
    double a = 0, b = 0;
    const double ts =
        time_ms([&] { a = mc_variance_estimate(bernoulli, x, pen, 64, 200000, s1, false); });
    const double tp =
        time_ms([&] { b = mc_variance_estimate(bernoulli, x, pen, 64, 200000, s2, true); });
    report("mc_variance_estimate", ts, tp, a == b);
  }

  {
    const std::vector<double> x{1.0};
    const MlmcConfig cfg{8, 8 << 7};
    RngStream s1(9), s2(9);
    double a = 0, b = 0;
    const double ts = time_ms([&] {
      a = mlmc_second_moment(bernoulli.oracle, x, pen, cfg, MlmcTarget::grad, 4000, s1, false);
    });
    const double tp = time_ms([&] {
      b = mlmc_second_moment(bernoulli.oracle, x, pen, cfg, MlmcTarget::grad, 4000, s2, true);
    });
    report("mlmc_second_moment", ts, tp, a == b);
  }

  // inner-solver cost: dominated by one sort, so time/(n log n) should
  // stay roughly flat as n grows
  std::printf("\ninner solver scaling (per solve):\n");
  RngStream gen(11);
  for (int n : {1000, 10000, 100000, 1000000}) {
    std::vector<double> losses(n);
    for (double& v : losses) v = gen.uniform();
    const int reps = std::max(1, 2000000 / n);
    double t_pen = 0, t_con = 0;
    t_pen = time_ms([&] {
      for (int r = 0; r < reps; ++r) solve_chi2_pen_weighted(losses, {}, 0.3);
    });
    t_con = time_ms([&] {
      for (int r = 0; r < reps; ++r) solve_chi2_con_weighted(losses, {}, 0.5);
    });
    std::printf("  n=%-8d chi2_pen %8.3f ms   chi2_con %8.3f ms   per n*log2(n): %.2f ns\n", n,
                t_pen / reps, t_con / reps,
                1e6 * (t_pen / reps) / (n * std::log2(static_cast<double>(n))));
  }

  return 0;
}
