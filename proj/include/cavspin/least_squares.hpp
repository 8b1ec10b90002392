#pragma once

// Bounded Levenberg-Marquardt on a residual vector, shared by the spectral
// and Lorentzian fits.

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cavspin {

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

enum class Termination { gradient, relative_decrease, zero_residual, iteration_cap, stalled };

std::string_view to_string(Termination t);

struct LeastSquaresOptions {
  int max_iterations = 500;
  double relative_decrease_tol = 1e-10;
  double gradient_tol = 1e-8;  // infinity norm, scaled parameters
  double initial_damping = 1e-3;
};

struct LeastSquaresResult {
  Eigen::VectorXd x;             // native units
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;      // d r / d x at the solution, native units
  Eigen::VectorXd standard_errors;
  std::vector<double> cost_history;  // 0.5 |r|^2 after each accepted step
  int iterations = 0;
  Termination termination = Termination::iteration_cap;

  bool converged() const {
    return termination == Termination::gradient || termination == Termination::relative_decrease ||
           termination == Termination::zero_residual;
  }
  double residual_norm() const { return residuals.norm(); }
};

/// Forward difference with step max(1e-6 |x_k|, 1e-9), taken backwards when
/// the forward point would leave [lower, upper].
Eigen::MatrixXd forward_difference_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& r0, const Eigen::VectorXd& lower,
                                            const Eigen::VectorXd& upper);

/// Minimizes 0.5 |f(x)|^2 subject to lower <= x <= upper. Iterates in
/// parameters divided by `scale` (|x0| by default, 1 where x0 = 0). Steps are
/// projected onto the bounds and accepted only if they lower the cost; a
/// failed solve or an exception from f at a trial point raises the damping.
/// After the iteration cap the best iterate is returned.
LeastSquaresResult levenberg_marquardt(const ResidualFunction& f, const Eigen::VectorXd& x0,
                                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                       const LeastSquaresOptions& options = {},
                                       const Eigen::VectorXd& scale = {});

}  // namespace cavspin
