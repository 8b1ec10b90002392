#pragma once

// Steady-state input-output response of a cavity coupled to an optically
// polarized spin ensemble. All frequencies and rates are angular (rad/s);
// conversion to Hz happens at the configuration boundary.

#include <complex>
#include <optional>
#include <variant>

#include "cavspin/units.hpp"

namespace cavspin {

using Complex = std::complex<double>;

struct CavityParams {
  double omega_c = 0.0;   // bare cavity frequency
  double kappa_c0 = 0.0;  // unloaded (internal) loss
  double kappa_c1 = 0.0;  // input port
  double kappa_c2 = 0.0;  // output port

  double kappa_c() const { return kappa_c0 + kappa_c1 + kappa_c2; }
  double unloaded_q() const { return omega_c / kappa_c0; }
  double loaded_q() const { return omega_c / kappa_c(); }

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Distribution of spin resonance frequencies around the ensemble center.
/// `q` is only read for the q-Gaussian family (q -> 1 is Gaussian, q = 2 is
/// Lorentzian); supported range is q < 1 (compact) and 1 <= q <= 2.
struct Lineshape {
  enum class Kind { delta, lorentzian, gaussian, q_gaussian };
  Kind kind = Kind::gaussian;
  double q = 1.0;

  static Lineshape delta() { return {Kind::delta, 1.0}; }
  static Lineshape lorentzian() { return {Kind::lorentzian, 2.0}; }
  static Lineshape gaussian() { return {Kind::gaussian, 1.0}; }
  static Lineshape q_gaussian(double q) { return {Kind::q_gaussian, q}; }
};

struct SpinEnsembleParams {
  double n_spins = 0.0;       // polarized spin count N
  double g_s = 0.0;           // single-spin coupling
  double kappa_s = 0.0;       // homogeneous FWHM (2/T2)
  double kappa_s_star = 0.0;  // inhomogeneous FWHM
  double kappa_op = 0.0;      // optical repolarization rate (1/T1_op)
  Lineshape lineshape = Lineshape::gaussian();
  double zero_field_splitting = hz_to_angular(kNvZeroFieldSplittingHz);
  double gamma_e = hz_to_angular(kElectronGyromagneticHzPerTesla);  // rad/s/T
  double n_perp = 1.0;

  double g_eff() const;
  /// Inhomogeneous width actually used by the model (0 for the delta lineshape).
  double effective_inhomogeneous_width() const;
  void validate() const;
};

struct FixedPhotonNumber {
  double n = 0.0;
};
struct SelfConsistentPhotonNumber {};
using PhotonNumberMode = std::variant<FixedPhotonNumber, SelfConsistentPhotonNumber>;

struct DriveParams {
  double omega_d = 0.0;
  double power_in = 0.0;  // W
  PhotonNumberMode photon_mode = SelfConsistentPhotonNumber{};

  void validate() const;
};

struct ComplexResponse {
  Complex gamma{0.0, 0.0};
  Complex t{0.0, 0.0};
  double n_cav = 0.0;

  double reflected_fraction() const { return std::norm(gamma); }
  double transmitted_fraction() const { return std::norm(t); }
  double reflection_phase() const { return std::arg(gamma); }
  double transmission_phase() const { return std::arg(t); }

  bool operator==(const ComplexResponse&) const = default;
};

// ---------------------------------------------------------------------------
// Scalar coupling relations and figures of merit

double collective_coupling(double g_s, double n_spins);

/// (gamma_e / 2) * n_perp * sqrt(hbar * omega_c * mu0 / V_cav)
double single_spin_coupling(double gamma_e, double n_perp, double omega_c, double mode_volume);

double cooperativity(double g_eff, double kappa_s, double kappa_c);

/// Small-detuning approximation of Im[Gamma] for a critically coupled,
/// single-port cavity driven on resonance:
///   8 g_eff^2 / (kappa_s*^2 kappa_c) * (omega_c - omega_s)
double dispersive_im_gamma_approx(double g_eff, double kappa_s_star, double kappa_c,
                                  double cavity_spin_detuning);

/// Incident photons per second for `power` watts at angular frequency omega.
double photon_flux(double power, double omega);

double quality_factor(double omega, double kappa);
double linewidth_from_quality_factor(double omega, double q);

// ---------------------------------------------------------------------------
// Response model

/// Ensemble susceptibility seen by the cavity field. For the delta lineshape
///   g_eff^2 / (k_s/2 + i(w_s - w_d) + S(w_s)),
///   S(w) = g_s^2 n_cav k_s / (2 k_op) / (k_s/2 - i(w - w_d)),
/// otherwise the same per-packet kernel averaged over the unit-normalized
/// frequency distribution centered at omega_s. Throws QuadratureError if the
/// average does not converge.
Complex spin_susceptibility(const SpinEnsembleParams& spin, double omega_d, double omega_s,
                            double n_cav);

Complex reflection_coefficient(const CavityParams& cavity, const SpinEnsembleParams& spin,
                               double omega_d, double omega_s, double n_cav);

/// Requires an output port (kappa_c2 > 0).
Complex transmission_coefficient(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                 double omega_d, double omega_s, double n_cav);

/// Damped fixed-point solution of
///   n = kappa_c1 (P / hbar w_d) / |kappa_c/2 + i(w_c - w_d) + chi(n)|^2.
/// `initial_guess` defaults to the bare-cavity value. Throws ConvergenceError
/// with the last two iterates when the iteration cap is reached.
double solve_cavity_photon_number(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                  const DriveParams& drive, double omega_s,
                                  std::optional<double> initial_guess = std::nullopt);

/// Photon number used for a given drive: the fixed value, or the
/// self-consistent solution.
double resolve_photon_number(const CavityParams& cavity, const SpinEnsembleParams& spin,
                             const DriveParams& drive, double omega_s,
                             std::optional<double> initial_guess = std::nullopt);

/// Gamma and T at one (drive, spin frequency) point with n_cav resolved per the
/// drive's photon-number mode. T is reported as 0 for a cavity without an
/// output port.
ComplexResponse evaluate_response(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                  const DriveParams& drive, double omega_s,
                                  std::optional<double> n_cav_guess = std::nullopt);

}  // namespace cavspin
