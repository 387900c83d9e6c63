#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slowfast {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// (x, y) -> out. Matrix-valued outputs are row-major.
using JointFn = std::function<void(ConstVec x, ConstVec y, MutVec out)>;
/// x -> out.
using SlowFn = std::function<void(ConstVec x, MutVec out)>;

struct Dims {
  std::size_t n = 1;   // slow state
  std::size_t m = 1;   // fast state
  std::size_t d1 = 1;  // slow Brownian motion
  std::size_t d2 = 1;  // fast Brownian motion
};

/// Raw coefficient sextuple of the slow/fast jump-diffusion
///
///   dX = a(X,Y) dt + b(X) dB + c(X-) dP,               P ~ Poisson(lambda1)
///   dY = f(X,Y)/eps dt + g(X,Y)/sqrt(eps) dW + h dN,   N ~ Poisson(lambda2/eps)
///
/// Output shapes: a,c: n; b: n x d1; f,h: m; g: m x d2.
struct ModelDefinition {
  std::string name;
  Dims dims;
  JointFn a;
  SlowFn b;
  SlowFn c;
  JointFn f;
  JointFn g;
  JointFn h;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  SlowFn abar_analytic;  // optional closed form of the averaged drift
};

/// Immutable, validated coefficient model. Safe to share across threads.
class CoefficientModel {
 public:
  explicit CoefficientModel(ModelDefinition def);

  const std::string& name() const noexcept { return def_.name; }
  const Dims& dims() const noexcept { return def_.dims; }
  double lambda1() const noexcept { return def_.lambda1; }
  double lambda2() const noexcept { return def_.lambda2; }
  bool has_analytic_abar() const noexcept { return static_cast<bool>(def_.abar_analytic); }

  void a(ConstVec x, ConstVec y, MutVec out) const { def_.a(x, y, out); }
  void b(ConstVec x, MutVec out) const { def_.b(x, out); }
  void c(ConstVec x, MutVec out) const { def_.c(x, out); }
  void f(ConstVec x, ConstVec y, MutVec out) const { def_.f(x, y, out); }
  void g(ConstVec x, ConstVec y, MutVec out) const { def_.g(x, y, out); }
  void h(ConstVec x, ConstVec y, MutVec out) const { def_.h(x, y, out); }
  void abar_analytic(ConstVec x, MutVec out) const;

  const ModelDefinition& definition() const noexcept { return def_; }

 private:
  ModelDefinition def_;
};

/// Parameters of the scalar jump-OU benchmark
///
///   a(x,y) = sin x + gamma*y        (or sin x + gamma*tanh y when bounded_read)
///   b = sigma_b,  c = c0,  f(x,y) = -(y - cos x),  g = sigma,  h = kappa.
///
/// The frozen fast process is an OU process with jumps whose stationary mean
/// is cos x + lambda2*kappa, which yields abar in closed form for the linear
/// read.
struct JumpOuParams {
  double gamma = 1.0;
  double sigma = 0.5;
  double kappa = 0.2;
  double lambda2 = 1.0;
  double sigma_b = 0.3;
  double c0 = 0.2;
  double lambda1 = 1.0;
  bool bounded_read = false;
};

CoefficientModel make_jump_ou_benchmark(const JumpOuParams& params);

/// Model lookup by name with a flat parameter table (harness config).
/// Known names: "jump_ou". Unknown names or parameters raise InvalidModelError.
CoefficientModel make_model(const std::string& name,
                            const std::map<std::string, double>& params);

JumpOuParams jump_ou_params_from(const std::map<std::string, double>& params);

// ---------------------------------------------------------------------------
// Assumption probes

struct YPair {
  std::vector<double> y1;
  std::vector<double> y2;
};

struct DissipativityProbe {
  std::vector<std::vector<double>> x_points;
  std::vector<YPair> y_pairs;
};

struct NondegeneracyProbe {
  std::vector<std::vector<double>> x_points;
  std::vector<std::vector<double>> y_points;
};

struct Violation {
  std::string assumption;  // "A2", "A3", or "finite"
  std::vector<double> x;
  std::vector<double> y1;
  std::vector<double> y2;  // empty for single-point probes
  double value = 0.0;
};

/// Measured constants are empty when the corresponding check was not run.
/// A report has no A2/A3 violations iff every measured constant is > 0.
struct AssumptionReport {
  std::optional<double> alpha_hat;  // min eigenvalue of g g^T over probes
  std::optional<double> beta_hat;   // min of -LHS / |y1-y2|^2 over probes
  /// Largest finite-difference Jacobian norm of each coefficient over the
  /// probe points, keyed by coefficient name.
  std::map<std::string, double> lipschitz_probe;
  std::vector<Violation> violations;
};

/// Quasi-uniform points in [lo, hi]^dim from the Halton sequence (first
/// `dim` primes), skipping the origin-valued index 0.
std::vector<std::vector<double>> halton_points(std::size_t count, std::size_t dim, double lo,
                                               double hi, std::size_t offset = 0);

/// Default probes: 64 x points in [-3,3]^n, 64 y pairs / points in [-3,3]^m.
DissipativityProbe default_dissipativity_probe(const Dims& dims, std::size_t count = 64);
NondegeneracyProbe default_nondegeneracy_probe(const Dims& dims, std::size_t count = 64);

/// Evaluates the left side of the dissipativity inequality
///   <y1-y2, f1-f2 + lambda2 (h1-h2)> + |g1-g2|_F^2 + lambda2 |h1-h2|^2
/// on every (x, pair) combination.
AssumptionReport check_dissipativity(const CoefficientModel& model,
                                     const DissipativityProbe& probe);

/// Uniform ellipticity of g g^T over the probe grid.
AssumptionReport check_nondegeneracy(const CoefficientModel& model,
                                     const NondegeneracyProbe& probe);

/// Runs both checks on the default probes and merges the reports.
AssumptionReport check_assumptions(const CoefficientModel& model);

/// Largest central-difference Jacobian norm (Frobenius, joint in (x,y)) of
/// each coefficient over the (x,y) combinations of the probe.
std::map<std::string, double> lipschitz_probe(const CoefficientModel& model,
                                              const NondegeneracyProbe& probe);

/// Norm of the y-Jacobian of `a` alone; used as the Lipschitz constant of the
/// fast read when bounding tails.
double lipschitz_of_a_in_y(const CoefficientModel& model, const NondegeneracyProbe& probe);

}  // namespace slowfast
