#include "cavspin/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavspin/errors.hpp"
#include "cavspin/quadrature.hpp"

namespace cavspin {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

constexpr double kQuadratureRelTol = 1e-8;
constexpr double kWindowFwhms = 5.0;

// Per-packet response 1 / (k_s/2 + i x + S(x)) for a packet detuned by x from
// the drive, with the saturation term written as the nested fraction.
struct PacketKernel {
  double half_kappa_s;
  double saturation;  // g_s^2 n_cav k_s / (2 k_op)

  Complex operator()(double x) const {
    const Complex s = saturation / Complex(half_kappa_s, -x);
    return 1.0 / (Complex(half_kappa_s, x) + s);
  }

  // Half width of the (power-broadened) packet response.
  double half_width() const { return std::sqrt(half_kappa_s * half_kappa_s + saturation); }
};

double gaussian_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

// q-Gaussian with FWHM `fwhm`: rho(u) = sqrt(beta)/C_q * e_q(-beta u^2).
struct QGaussian {
  double q;
  double beta;
  double norm;  // sqrt(beta) / C_q

  QGaussian(double q_in, double fwhm) : q(q_in) {
    const double half = 0.5 * fwhm;
    if (std::abs(q - 1.0) < 1e-12) {
      beta = std::log(2.0) / (half * half);
    } else {
      beta = (1.0 - std::pow(2.0, q - 1.0)) / ((1.0 - q) * half * half);
    }
    double c_q = 0.0;
    if (q < 1.0) {
      c_q = 2.0 * std::sqrt(kPi) * std::tgamma(1.0 / (1.0 - q)) /
            ((3.0 - q) * std::sqrt(1.0 - q) * std::tgamma((3.0 - q) / (2.0 * (1.0 - q))));
    } else if (std::abs(q - 1.0) < 1e-12) {
      c_q = std::sqrt(kPi);
    } else {
      c_q = std::sqrt(kPi) * std::tgamma((3.0 - q) / (2.0 * (q - 1.0))) /
            (std::sqrt(q - 1.0) * std::tgamma(1.0 / (q - 1.0)));
    }
    norm = std::sqrt(beta) / c_q;
  }

  double operator()(double u) const {
    const double arg = -beta * u * u;
    if (std::abs(q - 1.0) < 1e-12) return norm * std::exp(arg);
    const double base = 1.0 + (1.0 - q) * arg;
    if (base <= 0.0) return 0.0;
    return norm * std::pow(base, 1.0 / (1.0 - q));
  }

  double support_half_width() const { return 1.0 / std::sqrt((1.0 - q) * beta); }
};

// Offsets (relative to the packet resonance) used to seed the quadrature
// partition around the sharp feature of the kernel.
std::vector<double> packet_breakpoints(double center, double half_width) {
  std::vector<double> points{center};
  for (double m : {1.0, 4.0, 16.0, 64.0}) {
    points.push_back(center - m * half_width);
    points.push_back(center + m * half_width);
  }
  return points;
}

Complex average_over_line(const PacketKernel& kernel, double u_drive, double fwhm,
                          const Lineshape& shape) {
  // u = w - w_s is the spin offset from the ensemble center; the packet at u
  // sits at x = u - u_drive from the drive.
  const double b = kernel.half_width();
  const QuadratureOptions options{kQuadratureRelTol, 0.0, 4000};

  auto finite_window = [&](auto density, double half_extent) {
    const auto breaks = packet_breakpoints(u_drive, b);
    auto integrand = [&](double u) { return density(u) * kernel(u - u_drive); };
    return integrate_adaptive(integrand, -half_extent, half_extent, breaks, options).value;
  };

  // Heavy-tailed densities: integrate over the whole line with u = w tan(theta).
  auto tangent_map = [&](auto density, double w) {
    std::vector<double> breaks;
    for (double u : packet_breakpoints(u_drive, b)) breaks.push_back(std::atan(u / w));
    auto integrand = [&](double theta) {
      const double c = std::cos(theta);
      const double u = w * std::tan(theta);
      return density(u) * (w / (c * c)) * kernel(u - u_drive);
    };
    return integrate_adaptive(integrand, -0.5 * kPi, 0.5 * kPi, breaks, options).value;
  };

  switch (shape.kind) {
    case Lineshape::Kind::gaussian: {
      const double sigma = gaussian_sigma(fwhm);
      const double scale = 1.0 / (sigma * std::sqrt(kTwoPi));
      auto density = [&](double u) { return scale * std::exp(-0.5 * (u / sigma) * (u / sigma)); };
      return finite_window(density, kWindowFwhms * fwhm);
    }
    case Lineshape::Kind::lorentzian: {
      // rho(u) du = d(theta) / pi under u = a tan(theta).
      const double a = 0.5 * fwhm;
      std::vector<double> breaks;
      for (double u : packet_breakpoints(u_drive, b)) breaks.push_back(std::atan(u / a));
      auto integrand = [&](double theta) { return kernel(a * std::tan(theta) - u_drive) / kPi; };
      return integrate_adaptive(integrand, -0.5 * kPi, 0.5 * kPi, breaks, options).value;
    }
    case Lineshape::Kind::q_gaussian: {
      const QGaussian density(shape.q, fwhm);
      if (shape.q < 1.0) return finite_window(density, density.support_half_width());
      if (std::abs(shape.q - 1.0) < 1e-12) return finite_window(density, kWindowFwhms * fwhm);
      return tangent_map(density, 0.5 * fwhm);
    }
    case Lineshape::Kind::delta:
      break;
  }
  return kernel(-u_drive);
}

}  // namespace

// ---------------------------------------------------------------------------

void CavityParams::validate() const {
  require(omega_c > 0.0, "cavity: omega_c must be positive");
  require(kappa_c0 >= 0.0 && kappa_c1 >= 0.0 && kappa_c2 >= 0.0,
          "cavity: loss rates must be non-negative");
  require(kappa_c() > 0.0, "cavity: total loss rate must be positive");
}

double SpinEnsembleParams::g_eff() const { return collective_coupling(g_s, n_spins); }

double SpinEnsembleParams::effective_inhomogeneous_width() const {
  return lineshape.kind == Lineshape::Kind::delta ? 0.0 : kappa_s_star;
}

void SpinEnsembleParams::validate() const {
  require(n_spins >= 0.0, "spin: N must be non-negative");
  require(g_s >= 0.0, "spin: g_s must be non-negative");
  require(kappa_s > 0.0, "spin: kappa_s must be positive");
  require(kappa_s_star >= 0.0, "spin: kappa_s_star must be non-negative");
  require(kappa_op > 0.0, "spin: kappa_op must be positive");
  require(n_perp > 0.0 && n_perp <= 1.0, "spin: n_perp must lie in (0, 1]");
  if (lineshape.kind == Lineshape::Kind::q_gaussian) {
    require(lineshape.q <= 2.0, "spin: q-Gaussian lineshape supports q <= 2");
  }
}

void DriveParams::validate() const {
  require(omega_d > 0.0, "drive: omega_d must be positive");
  require(power_in >= 0.0, "drive: power must be non-negative");
  if (const auto* fixed = std::get_if<FixedPhotonNumber>(&photon_mode)) {
    require(fixed->n >= 0.0, "drive: fixed photon number must be non-negative");
  }
}

double collective_coupling(double g_s, double n_spins) {
  require(g_s >= 0.0 && n_spins >= 0.0, "collective_coupling: arguments must be non-negative");
  return g_s * std::sqrt(n_spins);
}

double single_spin_coupling(double gamma_e, double n_perp, double omega_c, double mode_volume) {
  require(mode_volume > 0.0, "single_spin_coupling: mode volume must be positive");
  require(gamma_e > 0.0 && omega_c > 0.0, "single_spin_coupling: gamma_e and omega_c must be positive");
  require(n_perp >= 0.0 && n_perp <= 1.0, "single_spin_coupling: n_perp must lie in [0, 1]");
  return 0.5 * gamma_e * n_perp * std::sqrt(kHbar * omega_c * kMu0 / mode_volume);
}

double cooperativity(double g_eff, double kappa_s, double kappa_c) {
  require(kappa_s > 0.0 && kappa_c > 0.0, "cooperativity: linewidths must be positive");
  return 4.0 * g_eff * g_eff / (kappa_s * kappa_c);
}

double dispersive_im_gamma_approx(double g_eff, double kappa_s_star, double kappa_c,
                                  double cavity_spin_detuning) {
  require(kappa_s_star != 0.0, "dispersive_im_gamma_approx: kappa_s_star must be nonzero");
  require(kappa_c != 0.0, "dispersive_im_gamma_approx: kappa_c must be nonzero");
  return 8.0 * g_eff * g_eff / (kappa_s_star * kappa_s_star * kappa_c) * cavity_spin_detuning;
}

double photon_flux(double power, double omega) {
  require(power >= 0.0, "photon_flux: power must be non-negative");
  require(omega > 0.0, "photon_flux: omega must be positive");
  return power / (kHbar * omega);
}

double quality_factor(double omega, double kappa) {
  require(omega > 0.0 && kappa > 0.0, "quality_factor: arguments must be positive");
  return omega / kappa;
}

double linewidth_from_quality_factor(double omega, double q) {
  require(omega > 0.0 && q > 0.0, "linewidth_from_quality_factor: arguments must be positive");
  return omega / q;
}

Complex spin_susceptibility(const SpinEnsembleParams& spin, double omega_d, double omega_s,
                            double n_cav) {
  require(n_cav >= 0.0, "spin_susceptibility: n_cav must be non-negative");
  const double g_eff = spin.g_eff();
  if (g_eff == 0.0) return {0.0, 0.0};

  const PacketKernel kernel{0.5 * spin.kappa_s,
                            spin.g_s * spin.g_s * n_cav * spin.kappa_s / (2.0 * spin.kappa_op)};
  const double g2 = g_eff * g_eff;
  const double fwhm = spin.effective_inhomogeneous_width();
  if (fwhm == 0.0) return g2 * kernel(omega_s - omega_d);
  return g2 * average_over_line(kernel, omega_d - omega_s, fwhm, spin.lineshape);
}

namespace {

Complex cavity_denominator(const CavityParams& cavity, const SpinEnsembleParams& spin,
                           double omega_d, double omega_s, double n_cav) {
  return Complex(0.5 * cavity.kappa_c(), cavity.omega_c - omega_d) +
         spin_susceptibility(spin, omega_d, omega_s, n_cav);
}

}  // namespace

Complex reflection_coefficient(const CavityParams& cavity, const SpinEnsembleParams& spin,
                               double omega_d, double omega_s, double n_cav) {
  return 1.0 - cavity.kappa_c1 / cavity_denominator(cavity, spin, omega_d, omega_s, n_cav);
}

Complex transmission_coefficient(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                 double omega_d, double omega_s, double n_cav) {
  require(cavity.kappa_c1 > 0.0, "transmission_coefficient: kappa_c1 must be positive");
  require(cavity.kappa_c2 > 0.0, "transmission_coefficient: no output port (kappa_c2 = 0)");
  return std::sqrt(cavity.kappa_c1 * cavity.kappa_c2) /
         cavity_denominator(cavity, spin, omega_d, omega_s, n_cav);
}

double solve_cavity_photon_number(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                  const DriveParams& drive, double omega_s,
                                  std::optional<double> initial_guess) {
  require(drive.power_in >= 0.0, "solve_cavity_photon_number: power must be non-negative");
  if (drive.power_in == 0.0 || cavity.kappa_c1 == 0.0) return 0.0;

  constexpr double kRelTol = 1e-10;
  constexpr int kMaxIterations = 10000;

  const double drive_rate = cavity.kappa_c1 * photon_flux(drive.power_in, drive.omega_d);
  auto update = [&](double n) {
    return drive_rate / std::norm(cavity_denominator(cavity, spin, drive.omega_d, omega_s, n));
  };

  const double bare = drive_rate / std::norm(Complex(0.5 * cavity.kappa_c(),
                                                     cavity.omega_c - drive.omega_d));
  double n = initial_guess.value_or(bare);
  double damping = 1.0;
  double previous = n;
  double last_residual = std::numeric_limits<double>::infinity();

  for (int iteration = 0; iteration < kMaxIterations; ++iteration) {
    const double target = update(n);
    const double residual = target - n;
    if (std::abs(residual) <= kRelTol * std::max(std::abs(target), 1e-300)) return target;
    if (std::abs(residual) >= last_residual) damping = std::max(0.5 * damping, 1e-4);
    last_residual = std::abs(residual);
    previous = n;
    n += damping * residual;
  }
  throw ConvergenceError("cavity photon number did not converge",
                         {{"last_iterate", n},
                          {"previous_iterate", previous},
                          {"omega_d", drive.omega_d},
                          {"omega_s", omega_s}});
}

double resolve_photon_number(const CavityParams& cavity, const SpinEnsembleParams& spin,
                             const DriveParams& drive, double omega_s,
                             std::optional<double> initial_guess) {
  if (const auto* fixed = std::get_if<FixedPhotonNumber>(&drive.photon_mode)) return fixed->n;
  return solve_cavity_photon_number(cavity, spin, drive, omega_s, initial_guess);
}

ComplexResponse evaluate_response(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                  const DriveParams& drive, double omega_s,
                                  std::optional<double> n_cav_guess) {
  ComplexResponse r;
  r.n_cav = resolve_photon_number(cavity, spin, drive, omega_s, n_cav_guess);
  const Complex denominator = cavity_denominator(cavity, spin, drive.omega_d, omega_s, r.n_cav);
  r.gamma = 1.0 - cavity.kappa_c1 / denominator;
  if (cavity.kappa_c2 > 0.0) r.t = std::sqrt(cavity.kappa_c1 * cavity.kappa_c2) / denominator;
  return r;
}

}  // namespace cavspin
