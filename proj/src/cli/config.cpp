#include "config.hpp"

#include <fstream>

namespace dro::cli {

namespace {

std::vector<std::string> split_pointer(const std::string& pointer) {
  std::vector<std::string> parts;
  std::string cur;
  for (std::size_t i = 1; i < pointer.size(); ++i) {  // skip leading '/'
    if (pointer[i] == '/') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += pointer[i];
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

const json* optional_field(const json& obj, const std::string& pointer) {
  const json* cur = &obj;
  for (const auto& part : split_pointer(pointer)) {
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
  }
  return cur;
}

const json& require_field(const json& obj, const std::string& pointer) {
  const json* field = optional_field(obj, pointer);
  if (!field) throw ConfigError(pointer, "missing required field");
  return *field;
}

double as_double(const json& obj, const std::string& pointer) {
  const json& f = require_field(obj, pointer);
  if (!f.is_number()) throw ConfigError(pointer, "expected a number");
  return f.get<double>();
}

long long as_int(const json& obj, const std::string& pointer) {
  const json& f = require_field(obj, pointer);
  if (!f.is_number_integer()) throw ConfigError(pointer, "expected an integer");
  return f.get<long long>();
}

std::string as_string(const json& obj, const std::string& pointer) {
  const json& f = require_field(obj, pointer);
  if (!f.is_string()) throw ConfigError(pointer, "expected a string");
  return f.get<std::string>();
}

double as_double_or(const json& obj, const std::string& pointer, double fallback) {
  return optional_field(obj, pointer) ? as_double(obj, pointer) : fallback;
}

long long as_int_or(const json& obj, const std::string& pointer, long long fallback) {
  return optional_field(obj, pointer) ? as_int(obj, pointer) : fallback;
}

std::string as_string_or(const json& obj, const std::string& pointer,
                         const std::string& fallback) {
  return optional_field(obj, pointer) ? as_string(obj, pointer) : fallback;
}

Problem build_problem(const json& root) {
  const std::string type = as_string(root, "/problem/type");
  try {
    if (type == "bernoulli") {
      return bernoulli_linear(as_double(root, "/problem/p0"),
                              as_double_or(root, "/problem/B", 1.0),
                              as_double_or(root, "/problem/R", 1.0));
    }
    if (type == "lecam") {
      const long long sign = as_int_or(root, "/problem/sign", 1);
      if (sign != 1 && sign != -1) throw ConfigError("/problem/sign", "must be 1 or -1");
      auto pair = cvar_lecam_pair(
          as_double_or(root, "/problem/G", 1.0), as_double_or(root, "/problem/R", 1.0),
          as_double(root, "/problem/alpha"), as_double(root, "/problem/delta"));
      return sign == 1 ? pair.first : pair.second;
    }
    if (type == "three_point") {
      return three_point_hard(as_double(root, "/problem/rho"),
                              as_double_or(root, "/problem/G", 1.0),
                              static_cast<int>(as_int(root, "/problem/n")));
    }
    if (type == "synthetic_linear") {
      return synthetic_linear(static_cast<int>(as_int(root, "/problem/n_atoms")),
                              static_cast<int>(as_int(root, "/problem/dim")),
                              as_double_or(root, "/problem/R", 1.0),
                              static_cast<std::uint64_t>(as_int_or(root, "/problem/gen_seed", 1)));
    }
    if (type == "dataset_csv") {
      Dataset data = load_dataset_csv(as_string(root, "/problem/path"));
      return multiclass_logistic(data, as_double_or(root, "/problem/mu", 0.0),
                                 as_double_or(root, "/problem/R", 10.0));
    }
    if (type == "deterministic") {
      const double value = as_double_or(root, "/problem/value", 1.0);
      const int dim = static_cast<int>(as_int_or(root, "/problem/dim", 1));
      Problem p;
      p.oracle.dim = dim;
      p.oracle.loss = [value](std::span<const double>, int) { return value; };
      p.oracle.loss_grad = [](std::span<const double>, int, std::span<double> g) {
        for (double& v : g) v = 0.0;
      };
      p.radius = as_double_or(root, "/problem/R", 1.0);
      p.bound_B = value;
      p.bound_G = 0.0;
      p.atom_probs = {1.0};
      finalize_finite_support(p);
      return p;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("/problem", e.what());
  }
  throw ConfigError("/problem/type", "unknown problem type '" + type + "'");
}

RobustSpec build_objective(const json& root) {
  const std::string kind = as_string(root, "/objective/kind");
  try {
    if (kind == "cvar") return RobustSpec::cvar(as_double(root, "/objective/alpha"));
    if (kind == "kl_cvar")
      return RobustSpec::kl_cvar(as_double(root, "/objective/alpha"),
                                 as_double(root, "/objective/lambda"));
    if (kind == "chi2_pen") return RobustSpec::chi2_pen(as_double(root, "/objective/lambda"));
    if (kind == "chi2_con") return RobustSpec::chi2_con(as_double(root, "/objective/rho"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("/objective", e.what());
  }
  throw ConfigError("/objective/kind", "unknown objective kind '" + kind + "'");
}

EstimatorSpec build_estimator(const json& root) {
  EstimatorSpec est;
  est.type = as_string_or(root, "/estimator/type", "minibatch");
  if (est.type == "minibatch" || est.type == "dual_sgm") {
    est.n = static_cast<int>(as_int_or(root, "/estimator/n", 10));
    if (est.n < 1) throw ConfigError("/estimator/n", "must be >= 1");
  } else if (est.type == "mlmc") {
    const int n0 = static_cast<int>(as_int_or(root, "/estimator/n0", 1));
    const int n_cap = static_cast<int>(as_int(root, "/estimator/n_cap"));
    try {
      est.mlmc = MlmcConfig::make_rounded(n0, n_cap, &est.mlmc_rounded);
    } catch (const std::exception& e) {
      throw ConfigError("/estimator", e.what());
    }
  } else {
    throw ConfigError("/estimator/type", "unknown estimator type '" + est.type + "'");
  }
  return est;
}

OptimizerSpec build_optimizer(const json& root, const EstimatorSpec& est) {
  OptimizerSpec opt;
  opt.type = as_string_or(root, "/optimizer/type", "sgm");
  if (opt.type != "sgm" && opt.type != "nesterov" && opt.type != "doubling")
    throw ConfigError("/optimizer/type", "unknown optimizer type '" + opt.type + "'");

  if (opt.type == "doubling") {
    opt.doubling.rho = as_double_or(root, "/optimizer/rho",
                                    optional_field(root, "/objective/rho")
                                        ? as_double(root, "/objective/rho")
                                        : 1.0);
    opt.doubling.epsilon = as_double(root, "/optimizer/epsilon");
    if (optional_field(root, "/optimizer/B"))
      opt.doubling.bound_B = as_double(root, "/optimizer/B");
    opt.doubling.selection_reps =
        static_cast<int>(as_int_or(root, "/optimizer/selection_reps", 9));
    opt.doubling.t_scale = as_double_or(root, "/optimizer/t_scale", 1.0);
    opt.doubling.n_scale = as_double_or(root, "/optimizer/n_scale", 1.0);
    opt.doubling.n0_scale = as_double_or(root, "/optimizer/n0_scale", 1.0);
    opt.doubling.step_scale_x = as_double_or(root, "/optimizer/step_scale_x", 1.0);
    opt.doubling.step_scale_lambda = as_double_or(root, "/optimizer/step_scale_lambda", 1.0);
    if (optional_field(root, "/optimizer/iterations"))
      opt.doubling.iterations_override = static_cast<int>(as_int(root, "/optimizer/iterations"));
    return opt;
  }

  opt.step_size_given = optional_field(root, "/optimizer/step_size") != nullptr;
  opt.sgm.step_size = as_double_or(root, "/optimizer/step_size", 0.1);
  opt.sgm.iterations = static_cast<int>(as_int_or(root, "/optimizer/iterations", 1000));
  if (opt.sgm.iterations < 1) throw ConfigError("/optimizer/iterations", "must be >= 1");
  // mini-batch runs default to momentum 0.9, MLMC runs to no momentum
  const double default_momentum =
      (opt.type == "nesterov") ? (est.type == "mlmc" ? 0.0 : 0.9) : 0.0;
  opt.sgm.momentum = as_double_or(root, "/optimizer/momentum", default_momentum);
  opt.sgm.use_theta_schedule =
      optional_field(root, "/optimizer/theta_schedule") &&
      require_field(root, "/optimizer/theta_schedule").get<bool>();
  const std::string avg = as_string_or(root, "/optimizer/averaging", "suffix");
  if (avg == "none")
    opt.sgm.averaging = Averaging::none;
  else if (avg == "full")
    opt.sgm.averaging = Averaging::full;
  else if (avg == "suffix")
    opt.sgm.averaging = Averaging::suffix;
  else
    throw ConfigError("/optimizer/averaging", "must be none, full or suffix");
  opt.sgm.suffix_k = static_cast<int>(as_int_or(root, "/optimizer/suffix_k", 3));
  if (optional_field(root, "/optimizer/radius"))
    opt.sgm.radius = as_double(root, "/optimizer/radius");
  return opt;
}

RunConfig build_run_config(const json& root) {
  if (!root.is_object()) throw ConfigError("/", "expected a JSON object");
  RunConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(as_int_or(root, "/seed", 0));
  cfg.problem = build_problem(root);
  cfg.objective = build_objective(root);
  cfg.estimator = build_estimator(root);
  cfg.optimizer = build_optimizer(root, cfg.estimator);
  if (!cfg.optimizer.sgm.radius) cfg.optimizer.sgm.radius = cfg.problem.radius;
  if (const json* x0 = optional_field(root, "/x0")) {
    if (!x0->is_array()) throw ConfigError("/x0", "expected an array of numbers");
    for (const auto& v : *x0) {
      if (!v.is_number()) throw ConfigError("/x0", "expected an array of numbers");
      cfg.x0.push_back(v.get<double>());
    }
    if (static_cast<int>(cfg.x0.size()) != cfg.problem.dim())
      throw ConfigError("/x0", "length must equal the problem dimension");
  }
  if (optional_field(root, "/reference_value"))
    cfg.reference_value = as_double(root, "/reference_value");
  cfg.out_dir = as_string_or(root, "/output/dir", "out");
  return cfg;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  return root;
}

}  // namespace dro::cli
