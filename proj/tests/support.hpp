#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

namespace smelu::testing {

/// Central difference with step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// |a - b| relative to the larger magnitude, with a floor so values that are
/// both near zero compare on an absolute scale.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace smelu::testing
