#include "cavspin/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cavspin {
namespace {

constexpr double kMaxDamping = 1e16;

double half_squared_norm(const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); }

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& j, const Eigen::VectorXd& r) {
  const auto m = j.rows();
  const auto n = j.cols();
  Eigen::VectorXd se = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  if (m <= n) return se;
  const double s2 = r.squaredNorm() / static_cast<double>(m - n);
  // Column scaling keeps the normal matrix conditioned across unit spreads.
  Eigen::VectorXd col = j.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (col[k] == 0.0) col[k] = 1.0;
  }
  const Eigen::MatrixXd js = j * col.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd cov = (js.transpose() * js).completeOrthogonalDecomposition().pseudoInverse();
  for (Eigen::Index k = 0; k < n; ++k) se[k] = std::sqrt(std::max(0.0, s2 * cov(k, k))) / col[k];
  return se;
}

}  // namespace

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::gradient: return "gradient";
    case Termination::relative_decrease: return "relative_decrease";
    case Termination::zero_residual: return "zero_residual";
    case Termination::iteration_cap: return "iteration_cap";
    case Termination::stalled: return "stalled";
  }
  return "unknown";
}

Eigen::MatrixXd forward_difference_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& r0, const Eigen::VectorXd& lower,
                                            const Eigen::VectorXd& upper) {
  Eigen::MatrixXd j(r0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    double h = std::max(1e-6 * std::abs(x[k]), 1e-9);
    if (x[k] + h > upper[k] && x[k] - h >= lower[k]) h = -h;
    Eigen::VectorXd xp = x;
    xp[k] += h;
    // Exact step actually taken.
    const double dx = xp[k] - x[k];
    j.col(k) = (f(xp) - r0) / dx;
  }
  return j;
}

LeastSquaresResult levenberg_marquardt(const ResidualFunction& f, const Eigen::VectorXd& x0,
                                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                       const LeastSquaresOptions& options, const Eigen::VectorXd& scale_in) {
  const Eigen::Index n = x0.size();
  if (n == 0) throw std::invalid_argument("levenberg_marquardt: no parameters");
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("levenberg_marquardt: bounds size mismatch");
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(lower[k] <= x0[k] && x0[k] <= upper[k])) {
      throw std::invalid_argument("levenberg_marquardt: initial guess outside bounds");
    }
  }

  Eigen::VectorXd scale = scale_in.size() == n ? scale_in : x0.cwiseAbs();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(scale[k] > 0.0) || !std::isfinite(scale[k])) scale[k] = 1.0;
  }

  auto project = [&](Eigen::VectorXd x) {
    for (Eigen::Index k = 0; k < n; ++k) x[k] = std::clamp(x[k], lower[k], upper[k]);
    return x;
  };

  LeastSquaresResult result;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd r = f(x);
  if (!all_finite(r)) throw std::domain_error("levenberg_marquardt: non-finite residuals at the initial guess");
  double cost = half_squared_norm(r);
  result.cost_history.push_back(cost);
  double damping = options.initial_damping;

  Termination termination = Termination::iteration_cap;
  int iteration = 0;
  while (iteration < options.max_iterations) {
    if (cost == 0.0) {
      termination = Termination::zero_residual;
      break;
    }
    // Jacobian in scaled parameters: d r / d (x / scale).
    const Eigen::MatrixXd j = forward_difference_jacobian(f, x, r, lower, upper) * scale.asDiagonal();
    const Eigen::VectorXd g = j.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
      termination = Termination::gradient;
      break;
    }
    const Eigen::MatrixXd a = j.transpose() * j;
    Eigen::VectorXd diag = a.diagonal();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!(diag[k] > 0.0)) diag[k] = 1.0;
    }

    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      ++iteration;
      Eigen::MatrixXd damped = a;
      damped.diagonal() += damping * diag;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      Eigen::VectorXd step = ldlt.info() == Eigen::Success ? Eigen::VectorXd(ldlt.solve(-g)) : Eigen::VectorXd();
      bool trial_ok = step.size() == n && all_finite(step);
      if (trial_ok) {
        const Eigen::VectorXd x_trial = project(x + scale.cwiseProduct(step));
        Eigen::VectorXd r_trial;
        try {
          r_trial = f(x_trial);
        } catch (const std::exception&) {
          trial_ok = false;
        }
        if (trial_ok && all_finite(r_trial)) {
          const double cost_trial = half_squared_norm(r_trial);
          if (cost_trial < cost) {
            const double relative = (cost - cost_trial) / cost;
            x = x_trial;
            r = std::move(r_trial);
            cost = cost_trial;
            result.cost_history.push_back(cost);
            damping = std::max(damping / 10.0, 1e-15);
            accepted = true;
            if (relative < options.relative_decrease_tol) {
              termination = Termination::relative_decrease;
              stop = true;
            }
            break;
          }
        }
      }
      damping *= 10.0;
      if (damping > kMaxDamping) {
        termination = Termination::stalled;
        stop = true;
        break;
      }
      if (iteration >= options.max_iterations) {
        stop = true;
        break;
      }
    }
    if (stop) break;
  }

  result.x = x;
  result.residuals = r;
  result.iterations = iteration;
  result.termination = termination;
  result.jacobian = forward_difference_jacobian(f, x, r, lower, upper);
  result.standard_errors = standard_errors(result.jacobian, r);
  return result;
}

}  // namespace cavspin
