#include "dro/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace dro {

namespace {

std::vector<double> cumulative(const std::vector<double>& probs) {
  std::vector<double> cum(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw std::invalid_argument("atom probability must be nonnegative");
    acc += probs[i];
    cum[i] = acc;
  }
  if (std::abs(acc - 1.0) > 1e-9) throw std::invalid_argument("atom probabilities must sum to 1");
  cum.back() = 1.0;
  return cum;
}

[[noreturn]] void csv_error(const std::string& path, int line, const std::string& what) {
  std::ostringstream msg;
  msg << path << ":" << line << ": " << what;
  throw std::runtime_error(msg.str());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void finalize_finite_support(Problem& p) {
  auto cum = cumulative(p.atom_probs);
  p.oracle.draw = [cum = std::move(cum)](RngStream& stream) { return stream.categorical(cum); };
}

Problem bernoulli_linear(double p0, double B, double R) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("bernoulli_linear: p0 must be in (0,1)");
  if (!(B > 0.0 && R > 0.0)) throw std::invalid_argument("bernoulli_linear: B, R must be positive");
  Problem p;
  p.oracle.dim = 1;
  p.oracle.loss = [B](std::span<const double> x, int s) { return B * s * x[0]; };
  p.oracle.loss_grad = [B](std::span<const double>, int s, std::span<double> g) { g[0] = B * s; };
  p.radius = R;
  p.bound_B = B * std::max(R, 1.0);
  p.bound_G = B;
  p.atom_probs = {1.0 - p0, p0};  // token == s in {0, 1}
  finalize_finite_support(p);
  return p;
}

double lecam_cvar_value(double G, double alpha, double delta, int v, double x) {
  const double mu = (delta / (2.0 * alpha)) / (1.0 - delta / (2.0 * alpha));
  if (x <= 0.0) return -G * x;
  return v > 0 ? G * x * mu : -G * x * mu;
}

std::pair<Problem, Problem> cvar_lecam_pair(double G, double R, double alpha, double delta) {
  if (!(G > 0.0 && R > 0.0)) throw std::invalid_argument("cvar_lecam_pair: G, R must be positive");
  if (!(alpha > 0.0 && alpha <= 0.5))
    throw std::invalid_argument("cvar_lecam_pair: alpha must be in (0, 1/2]");
  if (!(delta >= 0.0 && delta <= std::min(alpha, 1.0 - 2.0 * alpha)))
    throw std::invalid_argument("cvar_lecam_pair: need 0 <= delta <= min(alpha, 1-2alpha)");
  const double mu = (delta / (2.0 * alpha)) / (1.0 - delta / (2.0 * alpha));

  const auto make = [&](int v) {
    Problem p;
    p.oracle.dim = 1;
    // token 0 -> s = G*mu, token 1 -> s = -G
    p.oracle.loss = [G, mu](std::span<const double> x, int s) {
      return x[0] * (s == 0 ? G * mu : -G);
    };
    p.oracle.loss_grad = [G, mu](std::span<const double>, int s, std::span<double> g) {
      g[0] = s == 0 ? G * mu : -G;
    };
    p.radius = R;
    p.bound_G = G;
    p.atom_probs = {alpha + delta * v, 1.0 - alpha - delta * v};
    finalize_finite_support(p);
    return p;
  };
  return {make(+1), make(-1)};
}

Problem three_point_hard(double rho, double G, int n) {
  if (!(n > 4)) throw std::invalid_argument("three_point_hard: n must exceed 4");
  if (!(rho >= 1.0)) throw std::invalid_argument("three_point_hard: rho must be >= 1");
  if (!(G > 0.0)) throw std::invalid_argument("three_point_hard: G must be positive");
  const double p1 = 1.0 / (1.0 + 2.0 * rho);
  const double p2 = 1.0 - std::exp2(-1.0 / n);  // (1 - p2)^n = 1/2
  const double p0 = 1.0 - p1 - p2;
  if (!(p0 > 0.0)) throw std::invalid_argument("three_point_hard: degenerate probabilities");

  const double base[3] = {0.0, 1.0 / (30.0 * n), 1.0};
  const double slope[3] = {-G, G, -G};
  Problem p;
  p.oracle.dim = 1;
  p.oracle.loss = [=](std::span<const double> x, int s) { return base[s] + slope[s] * x[0]; };
  p.oracle.loss_grad = [=](std::span<const double>, int s, std::span<double> g) {
    g[0] = slope[s];
  };
  p.radius = 1.0;
  p.bound_G = G;
  p.atom_probs = {p0, p1, p2};
  finalize_finite_support(p);
  return p;
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open file");

  std::string line;
  if (!std::getline(in, line)) csv_error(path, 1, "missing header row");
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  if (header.empty() || header[0] != "label")
    csv_error(path, 1, "first column must be named 'label'");
  const bool has_group = header.size() > 1 && header[1] == "group";
  const int feat_start = has_group ? 2 : 1;
  const int feat_dim = static_cast<int>(header.size()) - feat_start;
  if (feat_dim < 1) csv_error(path, 1, "no feature columns after 'label'");

  Dataset data;
  data.feat_dim = feat_dim;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != feat_start + feat_dim)
      csv_error(path, line_no, "expected " + std::to_string(feat_start + feat_dim) +
                                   " fields, found " + std::to_string(fields.size()));
    try {
      data.labels.push_back(std::stoi(trim(fields[0])));
      if (has_group) data.groups.push_back(std::stoi(trim(fields[1])));
      for (int j = 0; j < feat_dim; ++j)
        data.features.push_back(std::stod(trim(fields[feat_start + j])));
    } catch (const std::exception&) {
      csv_error(path, line_no, "unparseable numeric field");
    }
    if (data.labels.back() < 0) csv_error(path, line_no, "negative label");
  }
  if (data.labels.empty()) csv_error(path, line_no, "no data rows");
  data.n_classes = 1 + *std::max_element(data.labels.begin(), data.labels.end());
  return data;
}

Problem multiclass_logistic(const Dataset& data, double mu, double radius) {
  if (!(mu >= 0.0)) throw std::invalid_argument("multiclass_logistic: mu must be nonnegative");
  if (data.n() == 0) throw std::invalid_argument("multiclass_logistic: empty dataset");
  const auto ds = std::make_shared<Dataset>(data);  // keep alive inside the closures
  const int C = ds->n_classes;
  const int fd = ds->feat_dim;
  const int dim = C * (fd + 1);

  const auto margins = [C, fd, ds](std::span<const double> x, int row_idx,
                                   std::vector<double>& m) {
    const auto z = ds->row(row_idx);
    m.resize(C);
    for (int c = 0; c < C; ++c) {
      double dot = x[C * fd + c];  // bias
      const double* wc = x.data() + static_cast<std::size_t>(c) * fd;
      for (int j = 0; j < fd; ++j) dot += wc[j] * z[j];
      m[c] = dot;
    }
  };

  const auto weight_sqnorm = [C, fd](std::span<const double> x) {
    double s = 0.0;
    for (int i = 0; i < C * fd; ++i) s += x[i] * x[i];
    return s;
  };

  Problem p;
  p.oracle.dim = dim;
  p.oracle.loss = [=](std::span<const double> x, int s) {
    std::vector<double> m;
    margins(x, s, m);
    const double mmax = *std::max_element(m.begin(), m.end());
    double lse = 0.0;
    for (double v : m) lse += std::exp(v - mmax);
    return mmax + std::log(lse) - m[ds->labels[s]] + 0.5 * mu * weight_sqnorm(x);
  };
  p.oracle.loss_grad = [=](std::span<const double> x, int s, std::span<double> g) {
    std::vector<double> m;
    margins(x, s, m);
    const double mmax = *std::max_element(m.begin(), m.end());
    double lse = 0.0;
    for (double& v : m) {
      v = std::exp(v - mmax);
      lse += v;
    }
    const auto z = ds->row(s);
    const int y = ds->labels[s];
    for (int c = 0; c < C; ++c) {
      const double pc = m[c] / lse - (c == y ? 1.0 : 0.0);
      double* gc = g.data() + static_cast<std::size_t>(c) * fd;
      for (int j = 0; j < fd; ++j) gc[j] = pc * z[j] + mu * x[c * fd + j];
      g[C * fd + c] = pc;  // bias rows unregularized
    }
  };

  double max_feat_norm = 0.0;
  for (int i = 0; i < ds->n(); ++i) {
    double s = 0.0;
    for (double v : ds->row(i)) s += v * v;
    max_feat_norm = std::max(max_feat_norm, std::sqrt(s));
  }
  p.radius = radius;
  p.bound_B = std::log(static_cast<double>(C)) + 2.0 * radius * max_feat_norm +
              0.5 * mu * radius * radius;  // estimate, not exact
  p.bound_G = std::sqrt(2.0) * max_feat_norm + 1.0 + mu * radius;
  p.atom_probs.assign(ds->n(), 1.0 / ds->n());
  finalize_finite_support(p);
  return p;
}

Problem synthetic_linear(int n_atoms, int dim, double radius, std::uint64_t seed) {
  if (n_atoms < 1 || dim < 1) throw std::invalid_argument("synthetic_linear: bad shape");
  RngStream gen(seed);
  std::vector<double> dirs(static_cast<std::size_t>(n_atoms) * dim);
  std::vector<double> offsets(n_atoms);
  double max_norm = 0.0;
  for (int i = 0; i < n_atoms; ++i) {
    double nrm = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double a = gen.normal();
      dirs[static_cast<std::size_t>(i) * dim + j] = a;
      nrm += a * a;
    }
    nrm = std::sqrt(nrm);
    offsets[i] = nrm * radius;  // keeps l(x; i) >= 0 on the ball
    max_norm = std::max(max_norm, nrm);
  }

  Problem p;
  p.oracle.dim = dim;
  p.oracle.loss = [dirs, offsets, dim](std::span<const double> x, int s) {
    const double* a = dirs.data() + static_cast<std::size_t>(s) * dim;
    double dot = 0.0;
    for (int j = 0; j < dim; ++j) dot += a[j] * x[j];
    return dot + offsets[s];
  };
  p.oracle.loss_grad = [dirs, dim](std::span<const double>, int s, std::span<double> g) {
    const double* a = dirs.data() + static_cast<std::size_t>(s) * dim;
    for (int j = 0; j < dim; ++j) g[j] = a[j];
  };
  p.radius = radius;
  p.bound_B = 2.0 * max_norm * radius;
  p.bound_G = max_norm;
  p.atom_probs.assign(n_atoms, 1.0 / n_atoms);
  finalize_finite_support(p);
  return p;
}

Dataset synthetic_subgroup_dataset(int n, int feat_dim, int n_classes, double rare_fraction,
                                   std::uint64_t seed) {
  if (n < n_classes || feat_dim < 1 || n_classes < 2)
    throw std::invalid_argument("synthetic_subgroup_dataset: bad shape");
  if (!(rare_fraction > 0.0 && rare_fraction < 0.5))
    throw std::invalid_argument("synthetic_subgroup_dataset: rare_fraction must be in (0, 0.5)");
  RngStream gen(seed);

  // class centroids; the rare group gets shifted versions of them
  std::vector<double> centers(static_cast<std::size_t>(n_classes) * feat_dim);
  for (double& c : centers) c = 2.0 * gen.normal();
  std::vector<double> shift(feat_dim);
  for (double& s : shift) s = 1.5 * gen.normal();

  Dataset data;
  data.feat_dim = feat_dim;
  data.n_classes = n_classes;
  for (int i = 0; i < n; ++i) {
    const int label = static_cast<int>(gen.uniform() * n_classes) % n_classes;
    const bool rare = gen.uniform() < rare_fraction;
    data.labels.push_back(label);
    data.groups.push_back(rare ? 1 : 0);
    for (int j = 0; j < feat_dim; ++j) {
      double v = centers[static_cast<std::size_t>(label) * feat_dim + j] + gen.normal();
      if (rare) v += shift[j];
      data.features.push_back(v);
    }
  }
  return data;
}

}  // namespace dro
