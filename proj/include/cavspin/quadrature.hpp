#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace cavspin {

struct QuadratureOptions {
  double rel_tol = 1e-8;
  double abs_tol = 0.0;
  int max_subintervals = 4000;
};

struct QuadratureResult {
  std::complex<double> value;
  double error_estimate = 0.0;
  int subintervals = 0;
  int evaluations = 0;
};

using ComplexIntegrand = std::function<std::complex<double>(double)>;

/// Globally adaptive 7/15-point Gauss-Kronrod integration of a complex-valued
/// function over [lo, hi] (hi < lo gives the negated integral). `breakpoints` (any order, values outside the open
/// interval are ignored) seed the initial partition so that narrow features
/// at known locations are never stepped over.
///
/// Throws QuadratureError when the subinterval cap is reached before the
/// tolerance max(abs_tol, rel_tol * |value|) is met.
QuadratureResult integrate_adaptive(const ComplexIntegrand& f, double lo, double hi,
                                    std::span<const double> breakpoints = {},
                                    const QuadratureOptions& options = {});

}  // namespace cavspin
