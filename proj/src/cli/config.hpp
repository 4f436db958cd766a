#ifndef DRO_CLI_CONFIG_HPP
#define DRO_CLI_CONFIG_HPP

#include <json.hpp>
#include <optional>
#include <string>

#include "dro/doubling.hpp"
#include "dro/optim.hpp"
#include "dro/oracle.hpp"

namespace dro::cli {

using nlohmann::json;

// Schema violation carrying the JSON pointer path of the offending field.
struct ConfigError : std::runtime_error {
  std::string pointer;
  ConfigError(std::string ptr, const std::string& what)
      : std::runtime_error("config error at " + ptr + ": " + what), pointer(std::move(ptr)) {}
};

const json& require_field(const json& obj, const std::string& pointer);
const json* optional_field(const json& obj, const std::string& pointer);
double as_double(const json& obj, const std::string& pointer);
long long as_int(const json& obj, const std::string& pointer);
std::string as_string(const json& obj, const std::string& pointer);
double as_double_or(const json& obj, const std::string& pointer, double fallback);
long long as_int_or(const json& obj, const std::string& pointer, long long fallback);
std::string as_string_or(const json& obj, const std::string& pointer,
                         const std::string& fallback);

Problem build_problem(const json& root);
RobustSpec build_objective(const json& root);

struct EstimatorSpec {
  std::string type;  // minibatch | mlmc | dual_sgm
  int n = 10;
  MlmcConfig mlmc{1, 2};
  bool mlmc_rounded = false;
};
EstimatorSpec build_estimator(const json& root);

struct OptimizerSpec {
  std::string type;  // sgm | nesterov | doubling
  SgmConfig sgm;
  bool step_size_given = false;
  DoublingConfig doubling;
};
OptimizerSpec build_optimizer(const json& root, const EstimatorSpec& est);

struct RunConfig {
  std::uint64_t seed = 0;
  Problem problem;
  RobustSpec objective;
  EstimatorSpec estimator;
  OptimizerSpec optimizer;
  std::vector<double> x0;  // empty = zeros
  std::optional<double> reference_value;
  std::string out_dir = "out";
};
RunConfig build_run_config(const json& root);

json load_json_file(const std::string& path);

}  // namespace dro::cli

#endif  // DRO_CLI_CONFIG_HPP
