#pragma once

// Field-to-frequency mapping, IQ readout, simulated magnetometry runs,
// spectral estimation and the field-referred noise budget.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspin/model.hpp"

namespace cavspin {

struct FieldConfig {
  double b_perm = 0.0;  // T
  double b_coil = 0.0;  // T
  double projection = kProjection100;
  double coil_range = std::numeric_limits<double>::infinity();  // |b_coil| limit, T

  double total() const { return b_perm + b_coil; }
  void validate() const;
};

/// D + gamma_e * projection * (B_perm + B_coil), the |0> <-> |+1> line.
double field_to_spin_frequency(const FieldConfig& field, const SpinEnsembleParams& spin);

/// d omega_s / d B_coil (rad/s per T).
double spin_frequency_slope(const FieldConfig& field, const SpinEnsembleParams& spin);

/// Coil field that places the spin line at omega_s.
double coil_field_for(const FieldConfig& field, const SpinEnsembleParams& spin, double omega_s);

struct IQSample {
  double i = 0.0;  // V
  double q = 0.0;  // V
};

/// (I + iQ) = gain * v_in * Gamma * exp(-i lo_phase).
IQSample iq_demodulate(Complex gamma, double v_in, double lo_phase, double chain_gain = 1.0);

/// Everything needed to turn a spin frequency into a digitizer voltage.
/// The operating point is omega_s = omega_c.
struct Readout {
  CavityParams cavity;
  SpinEnsembleParams spin;
  DriveParams drive;
  FieldConfig field;  // b_coil is ignored; the bias is set by coil_field_for
  double chain_gain = 1.0;
  double impedance = 50.0;  // ohm

  /// RMS voltage of the incident drive across the line impedance.
  double v_in() const;
  double operating_coil_field() const;
  void validate() const;
};

/// Q-channel voltage with the spin line at omega_s.
double quadrature_voltage(const Readout& readout, double lo_phase, double omega_s,
                          std::optional<double> n_cav_guess = std::nullopt);

/// LO phase that zeroes Q at omega_s = omega_c with I > 0. Scans the phase
/// for a sign change and refines it by bracketing root search to 1e-10 rad.
/// Throws FeatureError if no bracket exists.
double calibrate_lo_phase(const Readout& readout);

/// Signed dQ/dB_coil (V/T) at the operating point, central difference with a
/// frequency step of kappa_s*/1000 (kappa_s/1000 for an unbroadened line).
double responsivity(const Readout& readout, double lo_phase);

/// Incident photon flux times |d Im[Gamma e^{-i phi}] / dB| ((photons/s) / T).
double photonic_responsivity(const Readout& readout, double lo_phase);

// ---------------------------------------------------------------------------
// Time series and spectra

struct Tone {
  double frequency = 0.0;  // Hz
  double rms = 0.0;        // T
  double phase = 0.0;      // rad
};

/// Coil-field perturbation around the operating point.
struct FieldWaveform {
  double offset = 0.0;  // T
  std::vector<Tone> tones;

  double operator()(double t) const;
  double highest_frequency() const;
};

struct TimeSeries {
  double sample_rate = 0.0;  // Hz
  std::vector<double> volts;
  std::uint64_t seed = 0;

  double time(std::size_t k) const { return static_cast<double>(k) / sample_rate; }
  bool operator==(const TimeSeries&) const = default;
};

/// Q-channel record with the spin line following the waveform, plus white
/// noise of single-sided density noise_floor (V/sqrt(Hz)). Noise is drawn
/// from a generator keyed by `seed` independently of the signal.
TimeSeries simulate_timeseries(const Readout& readout, double lo_phase, const FieldWaveform& waveform,
                               double duration, double sample_rate, double noise_floor,
                               std::uint64_t seed);

struct Spectrum {
  std::vector<double> frequency;  // Hz
  std::vector<double> asd;        // V/sqrt(Hz), single-sided
  double resolution = 0.0;        // Hz per bin
  double enbw = 0.0;              // Hz
  int segments = 0;

  bool operator==(const Spectrum&) const = default;
};

/// Welch estimate: Hann window, 50% overlap, per-segment mean removed. A
/// sine of RMS amplitude A shows A / sqrt(enbw) at its bin.
Spectrum amplitude_spectral_density(std::span<const double> series, double sample_rate,
                                    std::size_t segment_length);

/// RMS amplitude of a tone from the PSD summed over +-3 bins.
double tone_rms(const Spectrum& spectrum, double tone_frequency);

/// Median ASD over [band_lo, band_hi] times b_test / v_dig.
double sensitivity_from_test_tone(const Spectrum& spectrum, double tone_frequency, double v_dig,
                                  double b_test, double band_lo, double band_hi);

// ---------------------------------------------------------------------------
// Noise limits (T/sqrt(Hz))

/// Thermal voltage density sqrt(4 k_B T R) (V/sqrt(Hz)).
double johnson_voltage_density(double temperature, double resistance);

/// Johnson density amplified by `gain` and referred to field by the
/// digitizer-side responsivity.
double johnson_noise_limit(double temperature, double resistance, double responsivity,
                           double gain = 1.0);

double photon_shot_noise_limit(double reflected_power, double omega, double photonic_responsivity);

struct SpinProjectionLimit {
  double central = 0.0;  // tau
  double lower = 0.0;    // 2 tau
  double upper = 0.0;    // tau / 2
};

/// 1 / (gamma_eff sqrt(N tau)); gamma_eff in rad/s per T.
double spin_projection_limit(double n_spins, double tau, double gamma_eff);
SpinProjectionLimit spin_projection_band(double n_spins, double tau, double gamma_eff);

struct JohnsonSource {
  double temperature = 290.0;  // K
  double resistance = 50.0;    // ohm
  double gain = 1.0;
};

struct ShotNoiseSource {
  double reflected_power = 0.0;  // W
  double omega = 0.0;            // rad/s
  double photonic_responsivity = 0.0;
};

struct SpinProjectionSource {
  double n_spins = 0.0;
  double tau = 0.0;        // s
  double gamma_eff = 0.0;  // rad/s per T
};

struct NoiseSources {
  double responsivity = 0.0;  // V/T at the digitizer
  std::optional<JohnsonSource> johnson;
  std::optional<ShotNoiseSource> photon_shot;
  std::optional<SpinProjectionSource> spin_projection;
  std::optional<double> electronics_floor;  // V/sqrt(Hz) at the digitizer
};

/// Inactive sources read 0.
struct NoiseBudget {
  double johnson = 0.0;
  double photon_shot = 0.0;
  double spin_projection = 0.0;
  double electronics_floor = 0.0;
  double total = 0.0;
  double responsivity = 0.0;

  bool operator==(const NoiseBudget&) const = default;
};

NoiseBudget noise_budget(const NoiseSources& sources);

void to_json(nlohmann::json& j, const NoiseBudget& budget);
void from_json(const nlohmann::json& j, NoiseBudget& budget);

}  // namespace cavspin
