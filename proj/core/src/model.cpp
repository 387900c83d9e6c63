#include "slowfast/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "slowfast/error.hpp"

namespace slowfast {

namespace {

// Out of line on purpose: GCC fuses sin and cos of one argument into sincos,
// whose sine may differ from std::sin in the last bit. a and abar must round
// identically so that gamma = 0 couples X and Xbar exactly.
#if defined(__GNUC__)
[[gnu::noinline]]
#endif
double sine(double x) { return std::sin(x); }

bool all_finite(ConstVec v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

double squared_distance(ConstVec u, ConstVec v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return s;
}

double dot(ConstVec u, ConstVec v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

constexpr std::size_t kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                                   43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};

double radical_inverse(std::size_t index, std::size_t base) {
  double result = 0.0;
  double f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

// Frobenius norm of the central-difference Jacobian of `eval` at `point`,
// differentiating only over coordinates [0, ndiff).
template <class Eval>
double fd_jacobian_norm(Eval&& eval, std::vector<double> point, std::size_t ndiff,
                        std::size_t out_dim) {
  std::vector<double> plus(out_dim), minus(out_dim);
  double sum = 0.0;
  for (std::size_t j = 0; j < ndiff; ++j) {
    const double base = point[j];
    const double step = 1e-5 * std::max(1.0, std::abs(base));
    point[j] = base + step;
    eval(point, plus);
    point[j] = base - step;
    eval(point, minus);
    point[j] = base;
    for (std::size_t i = 0; i < out_dim; ++i) {
      const double d = (plus[i] - minus[i]) / (2.0 * step);
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

}  // namespace

CoefficientModel::CoefficientModel(ModelDefinition def) : def_(std::move(def)) {
  const Dims& d = def_.dims;
  if (d.n == 0 || d.m == 0 || d.d1 == 0 || d.d2 == 0) {
    throw InvalidModelError("model '" + def_.name + "': all dimensions must be positive");
  }
  if (!def_.a || !def_.b || !def_.c || !def_.f || !def_.g || !def_.h) {
    throw InvalidModelError("model '" + def_.name + "': every coefficient a,b,c,f,g,h is required");
  }
  if (!(def_.lambda1 >= 0.0) || !std::isfinite(def_.lambda1) || !(def_.lambda2 >= 0.0) ||
      !std::isfinite(def_.lambda2)) {
    throw InvalidModelError("model '" + def_.name + "': jump intensities must be finite and >= 0");
  }
}

void CoefficientModel::abar_analytic(ConstVec x, MutVec out) const {
  if (!def_.abar_analytic) {
    throw InvalidModelError("model '" + def_.name + "' has no analytic averaged drift");
  }
  def_.abar_analytic(x, out);
}

CoefficientModel make_jump_ou_benchmark(const JumpOuParams& p) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) {
    throw InvalidModelError("jump_ou: sigma must be > 0");
  }
  if (!(p.lambda1 >= 0.0) || !(p.lambda2 >= 0.0)) {
    throw InvalidModelError("jump_ou: lambda1 and lambda2 must be >= 0");
  }
  for (double v : {p.gamma, p.kappa, p.sigma_b, p.c0, p.lambda1, p.lambda2}) {
    if (!std::isfinite(v)) throw InvalidModelError("jump_ou: parameters must be finite");
  }

  ModelDefinition def;
  def.name = p.bounded_read ? "jump_ou_bounded" : "jump_ou";
  def.dims = {1, 1, 1, 1};
  const double gamma = p.gamma;
  if (p.bounded_read) {
    def.a = [gamma](ConstVec x, ConstVec y, MutVec out) {
      out[0] = sine(x[0]) + gamma * std::tanh(y[0]);
    };
  } else {
    def.a = [gamma](ConstVec x, ConstVec y, MutVec out) {
      out[0] = sine(x[0]) + gamma * y[0];
    };
    const double shift = p.lambda2 * p.kappa;
    def.abar_analytic = [gamma, shift](ConstVec x, MutVec out) {
      out[0] = sine(x[0]) + gamma * (std::cos(x[0]) + shift);
    };
  }
  const double sigma_b = p.sigma_b;
  const double c0 = p.c0;
  const double sigma = p.sigma;
  const double kappa = p.kappa;
  def.b = [sigma_b](ConstVec, MutVec out) { out[0] = sigma_b; };
  def.c = [c0](ConstVec, MutVec out) { out[0] = c0; };
  def.f = [](ConstVec x, ConstVec y, MutVec out) { out[0] = -(y[0] - std::cos(x[0])); };
  def.g = [sigma](ConstVec, ConstVec, MutVec out) { out[0] = sigma; };
  def.h = [kappa](ConstVec, ConstVec, MutVec out) { out[0] = kappa; };
  def.lambda1 = p.lambda1;
  def.lambda2 = p.lambda2;
  return CoefficientModel(std::move(def));
}

JumpOuParams jump_ou_params_from(const std::map<std::string, double>& params) {
  JumpOuParams p;
  for (const auto& [key, value] : params) {
    if (key == "gamma") p.gamma = value;
    else if (key == "sigma") p.sigma = value;
    else if (key == "kappa") p.kappa = value;
    else if (key == "lambda2") p.lambda2 = value;
    else if (key == "sigma_b") p.sigma_b = value;
    else if (key == "c0") p.c0 = value;
    else if (key == "lambda1") p.lambda1 = value;
    else if (key == "bounded_read") p.bounded_read = value != 0.0;
    else throw InvalidModelError("jump_ou: unknown parameter '" + key + "'");
  }
  return p;
}

CoefficientModel make_model(const std::string& name,
                            const std::map<std::string, double>& params) {
  if (name == "jump_ou") return make_jump_ou_benchmark(jump_ou_params_from(params));
  throw InvalidModelError("unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> halton_points(std::size_t count, std::size_t dim, double lo,
                                               double hi, std::size_t offset) {
  if (dim > std::size(kPrimes)) {
    throw InvalidInputError("halton_points: dimension too large");
  }
  std::vector<std::vector<double>> pts(count, std::vector<double>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      pts[i][j] = lo + (hi - lo) * radical_inverse(offset + i + 1, kPrimes[j]);
    }
  }
  return pts;
}

DissipativityProbe default_dissipativity_probe(const Dims& dims, std::size_t count) {
  DissipativityProbe probe;
  probe.x_points = halton_points(count, dims.n, -3.0, 3.0);
  const auto ys = halton_points(count, 2 * dims.m, -3.0, 3.0);
  for (const auto& row : ys) {
    YPair pair{{row.begin(), row.begin() + static_cast<std::ptrdiff_t>(dims.m)},
               {row.begin() + static_cast<std::ptrdiff_t>(dims.m), row.end()}};
    if (pair.y1 != pair.y2) probe.y_pairs.push_back(std::move(pair));
  }
  return probe;
}

NondegeneracyProbe default_nondegeneracy_probe(const Dims& dims, std::size_t count) {
  return {halton_points(count, dims.n, -3.0, 3.0), halton_points(count, dims.m, -3.0, 3.0)};
}

AssumptionReport check_dissipativity(const CoefficientModel& model,
                                     const DissipativityProbe& probe) {
  if (probe.x_points.empty() || probe.y_pairs.empty()) {
    throw InvalidInputError("check_dissipativity: empty probe set");
  }
  const Dims& d = model.dims();
  for (const auto& pair : probe.y_pairs) {
    if (pair.y1.size() != d.m || pair.y2.size() != d.m) {
      throw InvalidInputError("check_dissipativity: y pair has wrong dimension");
    }
    if (pair.y1 == pair.y2) {
      throw InvalidInputError("check_dissipativity: y pairs must be distinct");
    }
  }

  AssumptionReport report;
  std::vector<double> f1(d.m), f2(d.m), h1(d.m), h2(d.m), g1(d.m * d.d2), g2(d.m * d.d2);
  std::vector<double> dy(d.m), df(d.m);
  double beta = std::numeric_limits<double>::infinity();
  const double lambda2 = model.lambda2();

  for (const auto& x : probe.x_points) {
    for (const auto& pair : probe.y_pairs) {
      model.f(x, pair.y1, f1);
      model.f(x, pair.y2, f2);
      model.g(x, pair.y1, g1);
      model.g(x, pair.y2, g2);
      model.h(x, pair.y1, h1);
      model.h(x, pair.y2, h2);
      if (!all_finite(f1) || !all_finite(f2) || !all_finite(g1) || !all_finite(g2) ||
          !all_finite(h1) || !all_finite(h2)) {
        report.violations.push_back({"finite", x, pair.y1, pair.y2,
                                     std::numeric_limits<double>::quiet_NaN()});
        beta = -std::numeric_limits<double>::infinity();
        continue;
      }
      for (std::size_t i = 0; i < d.m; ++i) {
        dy[i] = pair.y1[i] - pair.y2[i];
        df[i] = (f1[i] - f2[i]) + lambda2 * (h1[i] - h2[i]);
      }
      const double lhs =
          dot(dy, df) + squared_distance(g1, g2) + lambda2 * squared_distance(h1, h2);
      const double ratio = -lhs / dot(dy, dy);
      beta = std::min(beta, ratio);
      if (lhs >= 0.0) report.violations.push_back({"A3", x, pair.y1, pair.y2, lhs});
    }
  }
  report.beta_hat = beta;

  NondegeneracyProbe lip_probe{probe.x_points, {}};
  for (const auto& pair : probe.y_pairs) lip_probe.y_points.push_back(pair.y1);
  report.lipschitz_probe = lipschitz_probe(model, lip_probe);
  return report;
}

AssumptionReport check_nondegeneracy(const CoefficientModel& model,
                                     const NondegeneracyProbe& probe) {
  if (probe.x_points.empty() || probe.y_points.empty()) {
    throw InvalidInputError("check_nondegeneracy: empty probe set");
  }
  const Dims& d = model.dims();
  AssumptionReport report;
  std::vector<double> g(d.m * d.d2);
  double alpha = std::numeric_limits<double>::infinity();
  for (const auto& x : probe.x_points) {
    for (const auto& y : probe.y_points) {
      model.g(x, y, g);
      if (!all_finite(g)) {
        report.violations.push_back({"finite", x, y, {}, std::numeric_limits<double>::quiet_NaN()});
        alpha = -std::numeric_limits<double>::infinity();
        continue;
      }
      const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          gm(g.data(), static_cast<Eigen::Index>(d.m), static_cast<Eigen::Index>(d.d2));
      const Eigen::MatrixXd ggt = gm * gm.transpose();
      const double lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(ggt, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
      alpha = std::min(alpha, lam);
      if (!(lam > 0.0)) report.violations.push_back({"A2", x, y, {}, lam});
    }
  }
  // g g^T is positive semidefinite; clamp eigen-solver roundoff.
  report.alpha_hat = std::max(alpha, 0.0);
  report.lipschitz_probe = lipschitz_probe(model, probe);
  return report;
}

AssumptionReport check_assumptions(const CoefficientModel& model) {
  AssumptionReport a3 = check_dissipativity(model, default_dissipativity_probe(model.dims()));
  AssumptionReport a2 = check_nondegeneracy(model, default_nondegeneracy_probe(model.dims()));
  AssumptionReport merged;
  merged.alpha_hat = a2.alpha_hat;
  merged.beta_hat = a3.beta_hat;
  merged.lipschitz_probe = a2.lipschitz_probe;
  merged.violations = std::move(a2.violations);
  merged.violations.insert(merged.violations.end(), a3.violations.begin(), a3.violations.end());
  return merged;
}

std::map<std::string, double> lipschitz_probe(const CoefficientModel& model,
                                              const NondegeneracyProbe& probe) {
  const Dims& d = model.dims();
  std::map<std::string, double> out{{"a", 0.0}, {"b", 0.0}, {"c", 0.0},
                                    {"f", 0.0}, {"g", 0.0}, {"h", 0.0}};
  auto joint = [&](const JointFn& fn, std::size_t out_dim) {
    return [&fn, &d, out_dim](const std::vector<double>& xy, std::vector<double>& res) {
      res.resize(out_dim);
      fn(ConstVec(xy.data(), d.n), ConstVec(xy.data() + d.n, d.m), res);
    };
  };
  auto slow = [&](const SlowFn& fn, std::size_t out_dim) {
    return [&fn, &d, out_dim](const std::vector<double>& xy, std::vector<double>& res) {
      res.resize(out_dim);
      fn(ConstVec(xy.data(), d.n), res);
    };
  };
  const ModelDefinition& def = model.definition();
  std::vector<double> point(d.n + d.m);
  for (const auto& x : probe.x_points) {
    for (const auto& y : probe.y_points) {
      std::copy(x.begin(), x.end(), point.begin());
      std::copy(y.begin(), y.end(), point.begin() + static_cast<std::ptrdiff_t>(d.n));
      const std::size_t nm = d.n + d.m;
      auto upd = [&out](const char* key, double v) {
        double& slot = out[key];
        slot = std::isfinite(v) ? std::max(slot, v) : std::numeric_limits<double>::infinity();
      };
      upd("a", fd_jacobian_norm(joint(def.a, d.n), point, nm, d.n));
      upd("f", fd_jacobian_norm(joint(def.f, d.m), point, nm, d.m));
      upd("g", fd_jacobian_norm(joint(def.g, d.m * d.d2), point, nm, d.m * d.d2));
      upd("h", fd_jacobian_norm(joint(def.h, d.m), point, nm, d.m));
      upd("b", fd_jacobian_norm(slow(def.b, d.n * d.d1), point, d.n, d.n * d.d1));
      upd("c", fd_jacobian_norm(slow(def.c, d.n), point, d.n, d.n));
    }
  }
  return out;
}

double lipschitz_of_a_in_y(const CoefficientModel& model, const NondegeneracyProbe& probe) {
  const Dims& d = model.dims();
  double best = 0.0;
  for (const auto& x : probe.x_points) {
    for (const auto& y : probe.y_points) {
      auto eval = [&](const std::vector<double>& yy, std::vector<double>& res) {
        res.resize(d.n);
        model.a(x, yy, res);
      };
      best = std::max(best, fd_jacobian_norm(eval, y, d.m, d.n));
    }
  }
  return best;
}

}  // namespace slowfast
