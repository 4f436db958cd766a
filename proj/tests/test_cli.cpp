#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../src/cli/commands.hpp"
#include "../src/cli/config.hpp"

using namespace dro;
using namespace dro::cli;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::path("cli_test_tmp") / std::to_string(counter++);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path.parent_path(), ec);
  }
  static int counter;
};
int TempDir::counter = 0;

std::string write_config(const TempDir& dir, const std::string& name, const json& j) {
  const fs::path p = dir.path / name;
  std::ofstream out(p);
  out << j.dump(2);
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json minimal_run_config(const TempDir& dir, const std::string& out_name) {
  json j;
  j["seed"] = 7;
  j["problem"] = {{"type", "deterministic"}, {"value", 1.5}, {"dim", 1}};
  j["objective"] = {{"kind", "cvar"}, {"alpha", 0.5}};
  j["estimator"] = {{"type", "minibatch"}, {"n", 2}};
  j["optimizer"] = {{"type", "sgm"}, {"step_size", 0.1}, {"iterations", 1}};
  j["output"] = {{"dir", (dir.path / out_name).string()}};
  return j;
}

}  // namespace

TEST_CASE("cmd_run minimal deterministic config") {
  TempDir dir;
  const auto cfg_path = write_config(dir, "run.json", minimal_run_config(dir, "out"));
  CHECK(cmd_run(cfg_path, {}) == 0);

  const std::string trace = slurp(dir.path / "out" / "trace.csv");
  std::istringstream lines(trace);
  std::string header, row, extra;
  CHECK(std::getline(lines, header));
  CHECK(header == "iter,grad_evals,value,step_size,wall_ms");
  CHECK(std::getline(lines, row));        // single trace line
  CHECK_FALSE(std::getline(lines, extra));  // and nothing else

  const json summary = json::parse(slurp(dir.path / "out" / "summary.json"));
  CHECK(summary.contains("final_value"));
  CHECK(summary.contains("grad_evals"));
  CHECK(summary.contains("wall_ms"));
  CHECK(summary["final_value"].get<double>() == doctest::Approx(1.5));
}

TEST_CASE("cmd_run rejects unknown objective kinds with a JSON pointer") {
  TempDir dir;
  json j = minimal_run_config(dir, "out");
  j["objective"]["kind"] = "entropic";
  const auto cfg_path = write_config(dir, "bad.json", j);
  CHECK(cmd_run(cfg_path, {}) == 2);
}

TEST_CASE("config errors carry pointer paths") {
  json j;
  j["problem"] = {{"type", "bernoulli"}, {"p0", 0.5}};
  j["objective"] = {{"kind", "chi2_pen"}};
  try {
    build_run_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.pointer == "/objective/lambda");
    CHECK(std::string(e.what()).find("/objective/lambda") != std::string::npos);
  }
  j["objective"] = {{"kind", "nope"}};
  try {
    build_run_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.pointer == "/objective/kind");
  }
}

TEST_CASE("cmd_run reruns are byte-identical") {
  TempDir dir;
  json j;
  j["seed"] = 123;
  j["problem"] = {{"type", "synthetic_linear"}, {"n_atoms", 30}, {"dim", 3}, {"gen_seed", 5}};
  j["objective"] = {{"kind", "chi2_pen"}, {"lambda", 0.5}};
  j["estimator"] = {{"type", "minibatch"}, {"n", 8}};
  j["optimizer"] = {{"type", "nesterov"}, {"step_size", 0.02}, {"iterations", 400}};
  j["output"] = {{"dir", (dir.path / "a").string()}};
  const auto cfg_a = write_config(dir, "a.json", j);
  j["output"] = {{"dir", (dir.path / "b").string()}};
  const auto cfg_b = write_config(dir, "b.json", j);

  CHECK(cmd_run(cfg_a, {}) == 0);
  CHECK(cmd_run(cfg_b, {}) == 0);
  const std::string ta = slurp(dir.path / "a" / "trace.csv");
  const std::string tb = slurp(dir.path / "b" / "trace.csv");
  CHECK(ta == tb);
  CHECK(ta.find("iter,grad_evals,value,step_size,wall_ms\n") == 0);
}

TEST_CASE("cmd_run supports mlmc and dual_sgm estimators") {
  TempDir dir;
  json j = minimal_run_config(dir, "mlmc_out");
  j["problem"] = {{"type", "bernoulli"}, {"p0", 0.4}};
  j["objective"] = {{"kind", "chi2_pen"}, {"lambda", 0.5}};
  j["estimator"] = {{"type", "mlmc"}, {"n0", 4}, {"n_cap", 32}};
  j["optimizer"] = {{"type", "sgm"}, {"step_size", 0.05}, {"iterations", 200}};
  CHECK(cmd_run(write_config(dir, "mlmc.json", j), {}) == 0);

  j["estimator"] = {{"type", "dual_sgm"}};
  j["optimizer"] = {{"type", "sgm"}, {"step_size", 0.02}, {"iterations", 500}};
  j["output"] = {{"dir", (dir.path / "dual_out").string()}};
  CHECK(cmd_run(write_config(dir, "dual.json", j), {}) == 0);
  const json summary = json::parse(slurp(dir.path / "dual_out" / "summary.json"));
  CHECK(summary["grad_evals"].get<long long>() == 500);
}

TEST_CASE("cmd_run sweep with jobs and derived seeds") {
  TempDir dir;
  json sweep = json::array();
  for (int i = 0; i < 3; ++i) {
    json j = minimal_run_config(dir, "sweep");
    j["optimizer"]["iterations"] = 50;
    sweep.push_back(j);
  }
  const auto cfg_path = write_config(dir, "sweep.json", sweep);
  CommonOptions opts;
  opts.seed_override = 99;
  opts.jobs = 2;
  opts.out_override = (dir.path / "sweep_out").string();
  CHECK(cmd_run(cfg_path, opts) == 0);
  for (int i = 0; i < 3; ++i)
    CHECK(fs::exists(dir.path / "sweep_out" / ("entry_" + std::to_string(i)) / "summary.json"));
}

TEST_CASE("cmd_run epochs accounting against a reference value") {
  TempDir dir;
  json j;
  j["seed"] = 5;
  j["problem"] = {{"type", "synthetic_linear"}, {"n_atoms", 20}, {"dim", 2}, {"gen_seed", 3}};
  j["objective"] = {{"kind", "cvar"}, {"alpha", 0.5}};
  j["estimator"] = {{"type", "minibatch"}, {"n", 5}};
  j["optimizer"] = {{"type", "sgm"}, {"step_size", 0.05}, {"iterations", 2000}};
  j["reference_value"] = 0.5;  // generous: everything below 0.51 counts
  j["output"] = {{"dir", (dir.path / "ref_out").string()}};
  CHECK(cmd_run(write_config(dir, "ref.json", j), {}) == 0);
  const json summary = json::parse(slurp(dir.path / "ref_out" / "summary.json"));
  if (summary.contains("epochs_to_2pct")) {
    const double epochs = summary["epochs_to_2pct"].get<double>();
    const double evals = summary["grad_evals_to_2pct"].get<double>();
    CHECK(epochs == doctest::Approx(evals / 20.0));
  }
}

TEST_CASE("cmd_bias_sweep writes the documented csv") {
  TempDir dir;
  json j;
  j["seed"] = 11;
  j["problem"] = {{"type", "deterministic"}, {"value", 0.8}, {"dim", 1}};
  j["objective"] = {{"kind", "chi2_pen"}, {"lambda", 0.5}};
  j["x"] = {0.0};
  j["sweep"] = {{"n_grid", {4, 8}}, {"reps", 500}};
  j["output"] = {{"dir", (dir.path / "bias_out").string()}};
  CHECK(cmd_bias_sweep(write_config(dir, "bias.json", j), {}) == 0);
  const std::string csv = slurp(dir.path / "bias_out" / "bias.csv");
  CHECK(csv.find("n,bias_mean,bias_stderr\n") == 0);
  // deterministic problem: biases are exactly zero
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == doctest::Approx(0.0));
  }
}

TEST_CASE("cmd_bias_sweep reproduces the square-root cvar decay") {
  TempDir dir;
  json j;
  j["seed"] = 17;
  j["problem"] = {{"type", "bernoulli"}, {"p0", 0.1}};
  j["objective"] = {{"kind", "cvar"}, {"alpha", 0.1}};
  j["x"] = {1.0};
  j["sweep"] = {{"n_grid", {10, 40, 160, 640}}, {"reps", 10000}};
  j["output"] = {{"dir", (dir.path / "cvar_sweep").string()}};
  CHECK(cmd_bias_sweep(write_config(dir, "cvar_sweep.json", j), {}) == 0);
  std::istringstream lines(slurp(dir.path / "cvar_sweep" / "bias.csv"));
  std::string line;
  std::getline(lines, line);  // header
  std::vector<double> ns, biases;
  while (std::getline(lines, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    ns.push_back(std::stod(line.substr(0, c1)));
    biases.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(ns.size() == 4);
  const double slope = loglog_slope(ns, biases);
  CHECK(slope >= -0.65);
  CHECK(slope <= -0.35);
}

TEST_CASE("cmd_estimator_bench reports cost near the closed form") {
  TempDir dir;
  json j;
  j["seed"] = 13;
  j["problem"] = {{"type", "bernoulli"}, {"p0", 0.4}};
  j["objective"] = {{"kind", "chi2_pen"}, {"lambda", 0.5}};
  j["x"] = {1.0};
  j["bench"] = {{"n0", 10}, {"n_cap", 160}, {"reps", 4000}, {"moment_reps_per_level", 200}};
  j["bench"]["moment_n_grid"] = {160, 320};
  j["output"] = {{"dir", (dir.path / "bench_out").string()}};
  CHECK(cmd_estimator_bench(write_config(dir, "bench.json", j), {}) == 0);
  const std::string csv = slurp(dir.path / "bench_out" / "bench_cost.csv");
  CHECK(csv.find("n0,n,mean_cost") == 0);
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  // mean cost should be near n0 (1 + log2(n/n0)) = 50
  std::istringstream cells(row);
  std::string cell;
  std::getline(cells, cell, ',');
  std::getline(cells, cell, ',');
  std::getline(cells, cell, ',');
  CHECK(std::stod(cell) == doctest::Approx(50.0).epsilon(0.05));
}

TEST_CASE("shipped hard-instance config reaches the analytic optimum") {
  TempDir dir;
  json j = load_json_file(std::string(CONFIG_DIR) + "/run_cvar_hard.json");
  j["output"] = {{"dir", (dir.path / "hard_out").string()}};
  const auto cfg_path = write_config(dir, "hard.json", j);
  CHECK(cmd_run(cfg_path, {}) == 0);
  const json summary = json::parse(slurp(dir.path / "hard_out" / "summary.json"));
  CHECK(summary["final_value"].get<double>() <= 0.05);
}

TEST_CASE("step-size tuner picks a sane step") {
  TempDir dir;
  json j = minimal_run_config(dir, "tune_out");
  j["problem"] = {{"type", "synthetic_linear"}, {"n_atoms", 20}, {"dim", 2}, {"gen_seed", 9}};
  j["objective"] = {{"kind", "chi2_pen"}, {"lambda", 1.0}};
  j["estimator"] = {{"type", "minibatch"}, {"n", 5}};
  j["optimizer"] = {{"type", "sgm"}, {"iterations", 300}};
  const auto cfg_path = write_config(dir, "tune.json", j);
  CommonOptions opts;
  opts.tune = true;
  CHECK(cmd_run(cfg_path, opts) == 0);
  const json summary = json::parse(slurp(dir.path / "tune_out" / "summary.json"));
  REQUIRE(summary.contains("tuned_step_size"));
  const double step = summary["tuned_step_size"].get<double>();
  CHECK(step > 0.0);
  CHECK(step <= 2.0);
}

TEST_CASE("cmd_verify is clean and detects injected perturbations") {
  CHECK(cmd_verify(0.0) == 0);
  CHECK(cmd_verify(0.02) != 0);
}
