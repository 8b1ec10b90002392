#pragma once

// Response maps over drive and spin-frequency axes, and the features read
// off them: branch splitting, linewidths, contrast.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspin/magnetometer.hpp"
#include "cavspin/model.hpp"

namespace cavspin {

enum class Channel { reflection, transmission };

struct SweepGrid {
  std::vector<double> drive_axis;  // rad/s, strictly monotonic
  std::vector<double> spin_axis;   // rad/s, strictly monotonic
  /// Row-major, drive index outer: cells[i * spin_axis.size() + j].
  std::vector<ComplexResponse> cells;
  nlohmann::json metadata = nlohmann::json::object();

  /// Power normalization. Stored cells are never rescaled; power() divides by
  /// the channel scale, which is 1 until normalize_unity() is applied.
  bool normalized = false;
  double reflection_scale = 1.0;
  double transmission_scale = 1.0;

  const ComplexResponse& at(std::size_t drive_index, std::size_t spin_index) const {
    return cells[drive_index * spin_axis.size() + spin_index];
  }

  /// |Gamma|^2 or |T|^2 divided by the channel scale.
  double power(Channel channel, std::size_t drive_index, std::size_t spin_index) const;

  void validate() const;

  bool operator==(const SweepGrid&) const = default;
};

enum class EvaluationOrder { row_major, column_major };

/// Evaluates every (drive, spin) cell. The drive's photon-number mode is
/// resolved independently per cell, so the result does not depend on the
/// evaluation order. Cells may be evaluated concurrently. A numerical failure
/// is rethrown with the cell indices and frequencies added to its payload.
SweepGrid sweep_2d(const CavityParams& cavity, const SpinEnsembleParams& spin,
                   const DriveParams& drive, std::span<const double> drive_axis,
                   std::span<const double> spin_axis,
                   EvaluationOrder order = EvaluationOrder::row_major);

/// Rescales both channels so that each maximum is exactly 1. A channel that
/// is identically zero (no output port) keeps scale 1. Idempotent.
SweepGrid normalize_unity(SweepGrid grid);

/// Minimum separation (rad/s) over spin columns between the two strongest
/// branches along the drive axis: |T|^2 maxima for transmission, |Gamma|^2
/// minima for reflection. Peaks are refined by 3-point parabolic
/// interpolation; equal peaks resolve to the lower frequency first. Throws
/// UnresolvedSplitting when no column has two branches.
double avoided_crossing_splitting(const SweepGrid& grid, Channel channel = Channel::transmission);

/// Peak positions along a 1D sampled signal, parabolically interpolated,
/// strongest first.
std::vector<double> interpolated_peaks(std::span<const double> axis, std::span<const double> values);

// ---------------------------------------------------------------------------
// 1D traces

enum class TraceKind { reflected_power, transmitted_power, odmr_fluorescence, iq_quadrature };

std::string_view to_string(TraceKind kind);
TraceKind trace_kind_from_string(std::string_view name);

struct ResonanceTrace {
  std::vector<double> axis;
  std::vector<double> values;
  TraceKind kind = TraceKind::reflected_power;

  void validate() const;
  bool operator==(const ResonanceTrace&) const = default;
};

/// Reflected power |Gamma|^2 P_in + leakage_floor (W) versus coil field (T),
/// with the spin frequency following `field` with B_coil replaced by each
/// axis value.
ResonanceTrace magnetic_resonance_scan(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                       const DriveParams& drive, const FieldConfig& field,
                                       std::span<const double> coil_field_axis,
                                       double leakage_floor = 0.0);

/// Lorentzian fluorescence dip 1 - C (w/2)^2 / ((x - center)^2 + (w/2)^2).
ResonanceTrace odmr_scan(double contrast, double fwhm, double center, std::span<const double> axis);

enum class Polarity { dip, peak };

/// Full width at half depth (or height) around the global extremum. The half
/// level is the midpoint between the trace maximum and minimum; crossings are
/// the first ones outward from the extremum, linearly interpolated. Throws
/// FeatureError when the extremum sits on the boundary or a crossing is
/// missing.
double extract_fwhm(const ResonanceTrace& trace, Polarity polarity = Polarity::dip);

/// (max - min) / max.
double contrast(const ResonanceTrace& trace);

}  // namespace cavspin
