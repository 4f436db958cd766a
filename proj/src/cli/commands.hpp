#ifndef DRO_CLI_COMMANDS_HPP
#define DRO_CLI_COMMANDS_HPP

#include <cstdint>
#include <optional>
#include <string>

namespace dro::cli {

struct CommonOptions {
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  bool tune = false;
  int jobs = 1;
  bool timing = false;
};

// Exit codes: 0 success, 1 runtime failure, 2 config/schema violation.
int cmd_run(const std::string& config_path, const CommonOptions& opts);
int cmd_bias_sweep(const std::string& config_path, const CommonOptions& opts);
int cmd_estimator_bench(const std::string& config_path, const CommonOptions& opts);
// perturbation != 0 shifts solver outputs inside the checks; test-only hook
// used to confirm the suite detects regressions.
int cmd_verify(double perturbation = 0.0);

}  // namespace dro::cli

#endif  // DRO_CLI_COMMANDS_HPP
