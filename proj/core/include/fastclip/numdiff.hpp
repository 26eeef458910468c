#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"

namespace fastclip {

// Central-difference derivative of a scalar function.
inline double numeric_derivative(const std::function<double(double)>& f, double x,
                                 double h = 1e-6) {
  const double fp = f(x + h);
  const double fm = f(x - h);
  if (!std::isfinite(fp) || !std::isfinite(fm)) {
    throw NumericError("numeric_derivative: loss returned a non-finite value");
  }
  return (fp - fm) / (2.0 * h);
}

// Coordinate-wise central differences of f: R^n -> R.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h = 1e-6) {
  Vector g(x.size());
  Vector p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    p[i] = xi + h;
    const double fp = f(p);
    p[i] = xi - h;
    const double fm = f(p);
    p[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("numeric_gradient: loss returned a non-finite value");
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Largest coordinate-wise relative error, with a floor on the denominator so
// near-zero reference entries do not blow the ratio up.
inline double max_rel_error(const Vector& analytic, const Vector& reference,
                            double denom_floor = 1e-8) {
  if (analytic.size() != reference.size()) {
    throw ShapeError("max_rel_error: size mismatch");
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(denom_floor, std::abs(reference[i]));
    worst = std::max(worst, std::abs(analytic[i] - reference[i]) / denom);
  }
  return worst;
}

}  // namespace fastclip
