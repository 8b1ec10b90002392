#pragma once

// Run configuration in user units (Hz, gauss, dBm, kelvin, seconds) and its
// conversion to the angular SI parameters used by the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspin/fit.hpp"
#include "cavspin/magnetometer.hpp"
#include "cavspin/model.hpp"
#include "cavspin/sweep.hpp"

namespace cavspin {

struct ConfigDiagnostic {
  std::string path;  // JSON pointer to the offending field
  std::string message;
};

/// Invalid configuration. Carries one diagnostic per bad field.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<ConfigDiagnostic> diagnostics);
  ConfigError(std::string path, std::string message)
      : ConfigError(std::vector<ConfigDiagnostic>{{std::move(path), std::move(message)}}) {}
  const std::vector<ConfigDiagnostic>& diagnostics() const noexcept { return diagnostics_; }
  nlohmann::json report() const;

private:
  std::vector<ConfigDiagnostic> diagnostics_;
};

/// Evenly spaced axis: either `points` or `step` alongside start and stop.
struct AxisSpec {
  double start = 0.0;
  double stop = 0.0;
  int points = 1;

  std::vector<double> values() const;
};

struct SystemConfig {
  CavityParams cavity;
  SpinEnsembleParams spin;
  FieldConfig field;
  DriveParams drive;
  double t1_op = 0.0;  // s, 1 / kappa_op
};

struct SimulateConfig {
  double spin_detuning = 0.0;  // rad/s from omega_c
};

struct SweepConfig {
  enum class Mode { map, field_scan };
  Mode mode = Mode::map;
  AxisSpec drive_detuning;  // rad/s from omega_c (map mode)
  AxisSpec field_offset;    // T, added to the coil field that centers the spin line
  bool normalize = true;
  bool extract_splitting = true;
  Channel splitting_channel = Channel::transmission;
  double leakage_floor = 0.0;  // W (field scan)
  /// Alternative to leakage_floor: P_in * 10^(-isolation/10).
  std::optional<double> isolation_db;
  std::optional<double> odmr_contrast;
  std::optional<double> odmr_fwhm;  // rad/s

  double leakage_power(double power_in) const {
    return isolation_db ? power_in * std::pow(10.0, -*isolation_db / 10.0) : leakage_floor;
  }
};

struct FitConfig {
  std::vector<FitParameter> free;
  std::vector<Bounds> bounds;         // rad/s
  std::vector<double> initial_guess;  // rad/s
  std::vector<Channel> channels;
  std::optional<std::filesystem::path> reflection_grid;    // stems
  std::optional<std::filesystem::path> transmission_grid;
  std::optional<std::filesystem::path> odmr_trace;
  /// Synthetic data from the system block on the sweep axes when no grid
  /// files are given; RMS multiplicative noise.
  double synthetic_noise = 0.0;
  bool multistart = false;
  int max_iterations = 500;
};

struct MagnetometerConfig {
  double chain_gain = 1.0;
  /// Alternative to chain_gain: pick the gain that gives this |dQ/dB| (V/T).
  std::optional<double> target_responsivity;
  double impedance = 50.0;  // ohm
  FieldWaveform waveform;   // T
  double duration = 10.0;   // s
  double sample_rate = 2000.0;
  double noise_floor = 0.0;  // V/sqrt(Hz)
  std::size_t segment_length = 4096;
  double band_lo = 20.0;  // Hz
  double band_hi = 400.0;
};

struct BudgetConfig {
  bool johnson = true;
  double temperature = 290.0;
  double resistance = 50.0;
  double johnson_gain = 1.0;
  std::optional<double> electronics_floor;  // V/sqrt(Hz)
  bool photon_shot = true;
  std::optional<double> reflected_power;  // W; model value at the operating point if unset
  bool spin_projection = true;
};

struct RunConfig {
  SystemConfig system;
  std::optional<SimulateConfig> simulate;
  std::optional<SweepConfig> sweep;
  std::optional<FitConfig> fit;
  std::optional<MagnetometerConfig> magnetometer;
  std::optional<BudgetConfig> budget;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  nlohmann::json source;            // the parsed document
  std::filesystem::path base_dir;   // relative data paths resolve here
};

/// Throws ConfigError listing every invalid or unknown field. Keys named
/// "comment" are accepted anywhere and ignored.
RunConfig parse_config(const nlohmann::json& document, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Applies target_responsivity, if set, by calibrating the LO phase and
/// scaling the chain gain.
Readout make_readout(const SystemConfig& system, const MagnetometerConfig& magnetometer);

/// Coil field that puts the spin line on the bare cavity.
double operating_coil_field(const SystemConfig& system);
/// Spin frequencies for coil-field offsets (T) around operating_coil_field().
std::vector<double> spin_axis(const SystemConfig& system, const std::vector<double>& field_offsets);
/// Absolute drive frequencies for the sweep's detuning axis.
std::vector<double> drive_axis(const SystemConfig& system, const SweepConfig& sweep);

/// 64-bit FNV-1a of the canonical (sorted, compact) JSON dump.
std::uint64_t config_hash(const nlohmann::json& document);

}  // namespace cavspin
