#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "slowfast/integrate.hpp"
#include "slowfast/model.hpp"

namespace slowfast::testing {

using Scalar1 = std::function<double(double)>;
using Scalar2 = std::function<double(double, double)>;

/// Scalar (n = m = d1 = d2 = 1) model from plain scalar functions.
struct ScalarModel {
  std::string name = "scalar";
  Scalar2 a = [](double, double) { return 0.0; };
  Scalar1 b = [](double) { return 0.0; };
  Scalar1 c = [](double) { return 0.0; };
  Scalar2 f = [](double, double y) { return -y; };
  Scalar2 g = [](double, double) { return 0.0; };
  Scalar2 h = [](double, double) { return 0.0; };
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Scalar1 abar;

  CoefficientModel build() const {
    ModelDefinition d;
    d.name = name;
    d.dims = {1, 1, 1, 1};
    d.a = [a = a](ConstVec x, ConstVec y, MutVec o) { o[0] = a(x[0], y[0]); };
    d.b = [b = b](ConstVec x, MutVec o) { o[0] = b(x[0]); };
    d.c = [c = c](ConstVec x, MutVec o) { o[0] = c(x[0]); };
    d.f = [f = f](ConstVec x, ConstVec y, MutVec o) { o[0] = f(x[0], y[0]); };
    d.g = [g = g](ConstVec x, ConstVec y, MutVec o) { o[0] = g(x[0], y[0]); };
    d.h = [h = h](ConstVec x, ConstVec y, MutVec o) { o[0] = h(x[0], y[0]); };
    d.lambda1 = lambda1;
    d.lambda2 = lambda2;
    if (abar) d.abar_analytic = [ab = abar](ConstVec x, MutVec o) { o[0] = ab(x[0]); };
    return CoefficientModel(std::move(d));
  }
};

inline DriftField scalar_field(Scalar1 fn) {
  return [fn = std::move(fn)](ConstVec x, MutVec o) { o[0] = fn(x[0]); };
}

inline const std::vector<double> kX0{0.0};
inline const std::vector<double> kY0{0.5};

}  // namespace slowfast::testing
