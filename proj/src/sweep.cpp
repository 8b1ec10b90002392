#include "cavspin/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <string>

#include "cavspin/errors.hpp"

namespace cavspin {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

bool strictly_monotonic(std::span<const double> axis) {
  if (axis.size() < 2) return true;
  const bool increasing = axis[1] > axis[0];
  for (std::size_t k = 1; k < axis.size(); ++k) {
    if (increasing ? !(axis[k] > axis[k - 1]) : !(axis[k] < axis[k - 1])) return false;
  }
  return true;
}

nlohmann::json snapshot(const CavityParams& c, const SpinEnsembleParams& s, const DriveParams& d) {
  static constexpr const char* kLineshapes[] = {"delta", "lorentzian", "gaussian", "q_gaussian"};
  nlohmann::json mode;
  if (const auto* fixed = std::get_if<FixedPhotonNumber>(&d.photon_mode)) {
    mode = {{"fixed", fixed->n}};
  } else {
    mode = "self_consistent";
  }
  return {
      {"units", "rad/s, W"},
      {"cavity", {{"omega_c", c.omega_c}, {"kappa_c0", c.kappa_c0}, {"kappa_c1", c.kappa_c1}, {"kappa_c2", c.kappa_c2}}},
      {"spin",
       {{"n_spins", s.n_spins},
        {"g_s", s.g_s},
        {"kappa_s", s.kappa_s},
        {"kappa_s_star", s.kappa_s_star},
        {"kappa_op", s.kappa_op},
        {"lineshape", kLineshapes[static_cast<int>(s.lineshape.kind)]},
        {"q", s.lineshape.q}}},
      {"drive", {{"power_in", d.power_in}, {"photon_number", mode}}},
  };
}

double channel_power(const ComplexResponse& r, Channel channel) {
  return channel == Channel::reflection ? r.reflected_fraction() : r.transmitted_fraction();
}

}  // namespace

double SweepGrid::power(Channel channel, std::size_t drive_index, std::size_t spin_index) const {
  const double scale = channel == Channel::reflection ? reflection_scale : transmission_scale;
  return channel_power(at(drive_index, spin_index), channel) / scale;
}

void SweepGrid::validate() const {
  require(!drive_axis.empty() && !spin_axis.empty(), "grid: axes must be non-empty");
  require(strictly_monotonic(drive_axis), "grid: drive axis must be strictly monotonic");
  require(strictly_monotonic(spin_axis), "grid: spin axis must be strictly monotonic");
  require(cells.size() == drive_axis.size() * spin_axis.size(), "grid: cell count does not match axes");
  require(reflection_scale > 0.0 && transmission_scale > 0.0, "grid: scales must be positive");
}

SweepGrid sweep_2d(const CavityParams& cavity, const SpinEnsembleParams& spin, const DriveParams& drive,
                   std::span<const double> drive_axis, std::span<const double> spin_axis,
                   EvaluationOrder order) {
  cavity.validate();
  spin.validate();

  SweepGrid grid;
  grid.drive_axis.assign(drive_axis.begin(), drive_axis.end());
  grid.spin_axis.assign(spin_axis.begin(), spin_axis.end());
  grid.cells.resize(drive_axis.size() * spin_axis.size());
  grid.validate();
  grid.metadata = snapshot(cavity, spin, drive);

  const std::size_t rows = drive_axis.size();
  const std::size_t cols = spin_axis.size();
  const auto total = static_cast<std::ptrdiff_t>(rows * cols);

  // Lowest failing cell in evaluation order wins, independent of scheduling.
  std::ptrdiff_t failed_at = total;
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const std::size_t i = order == EvaluationOrder::row_major ? uk / cols : uk % rows;
    const std::size_t j = order == EvaluationOrder::row_major ? uk % cols : uk / rows;
    DriveParams d = drive;
    d.omega_d = drive_axis[i];
    try {
      grid.cells[i * cols + j] = evaluate_response(cavity, spin, d, spin_axis[j]);
    } catch (const NumericalError& e) {
      nlohmann::json payload = e.payload();
      payload["drive_index"] = i;
      payload["spin_index"] = j;
      payload["omega_d"] = drive_axis[i];
      payload["omega_s"] = spin_axis[j];
      const auto wrapped = std::make_exception_ptr(NumericalError(e.what(), payload));
#pragma omp critical(cavspin_sweep_failure)
      if (k < failed_at) {
        failed_at = k;
        failure = wrapped;
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return grid;
}

SweepGrid normalize_unity(SweepGrid grid) {
  grid.validate();
  double max_reflection = 0.0;
  double max_transmission = 0.0;
  for (std::size_t i = 0; i < grid.drive_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.spin_axis.size(); ++j) {
      max_reflection = std::max(max_reflection, grid.power(Channel::reflection, i, j));
      max_transmission = std::max(max_transmission, grid.power(Channel::transmission, i, j));
    }
  }
  require(max_reflection > 0.0 || max_transmission > 0.0, "normalize_unity: grid is identically zero");
  if (max_reflection > 0.0) grid.reflection_scale *= max_reflection;
  if (max_transmission > 0.0) grid.transmission_scale *= max_transmission;
  grid.normalized = true;
  return grid;
}

std::vector<double> interpolated_peaks(std::span<const double> axis, std::span<const double> values) {
  require(axis.size() == values.size(), "interpolated_peaks: length mismatch");
  struct Peak {
    double height;
    double position;
  };
  std::vector<Peak> peaks;
  for (std::size_t k = 1; k + 1 < values.size(); ++k) {
    const double left = values[k - 1];
    const double mid = values[k];
    const double right = values[k + 1];
    if (!(mid > left && mid >= right)) continue;
    // Vertex of the parabola through the three samples, in index units.
    const double denom = left - 2.0 * mid + right;
    const double offset = denom != 0.0 ? 0.5 * (left - right) / denom : 0.0;
    const double height = mid - 0.25 * (left - right) * offset;
    const double step = offset >= 0.0 ? axis[k + 1] - axis[k] : axis[k] - axis[k - 1];
    peaks.push_back({height, axis[k] + offset * step});
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.height != b.height) return a.height > b.height;
    return a.position < b.position;
  });
  std::vector<double> positions;
  positions.reserve(peaks.size());
  for (const Peak& p : peaks) positions.push_back(p.position);
  return positions;
}

double avoided_crossing_splitting(const SweepGrid& grid, Channel channel) {
  grid.validate();
  const std::size_t rows = grid.drive_axis.size();
  const double sign = channel == Channel::transmission ? 1.0 : -1.0;

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> column(rows);
  for (std::size_t j = 0; j < grid.spin_axis.size(); ++j) {
    for (std::size_t i = 0; i < rows; ++i) column[i] = sign * grid.power(channel, i, j);
    const std::vector<double> peaks = interpolated_peaks(grid.drive_axis, column);
    if (peaks.size() < 2) continue;
    best = std::min(best, std::abs(peaks[0] - peaks[1]));
  }
  if (!std::isfinite(best)) {
    throw UnresolvedSplitting("no spin column shows two branches",
                              {{"columns", grid.spin_axis.size()}, {"drive_points", rows},
                               {"channel", channel == Channel::transmission ? "transmission" : "reflection"}});
  }
  return best;
}

std::string_view to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::reflected_power: return "reflected_power";
    case TraceKind::transmitted_power: return "transmitted_power";
    case TraceKind::odmr_fluorescence: return "odmr_fluorescence";
    case TraceKind::iq_quadrature: return "iq_quadrature";
  }
  return "unknown";
}

TraceKind trace_kind_from_string(std::string_view name) {
  for (TraceKind k : {TraceKind::reflected_power, TraceKind::transmitted_power, TraceKind::odmr_fluorescence,
                      TraceKind::iq_quadrature}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown trace kind: " + std::string(name));
}

void ResonanceTrace::validate() const {
  require(axis.size() == values.size(), "trace: axis and values differ in length");
  require(strictly_monotonic(axis), "trace: axis must be strictly monotonic");
}

ResonanceTrace magnetic_resonance_scan(const CavityParams& cavity, const SpinEnsembleParams& spin,
                                       const DriveParams& drive, const FieldConfig& field,
                                       std::span<const double> coil_field_axis, double leakage_floor) {
  require(leakage_floor >= 0.0, "magnetic_resonance_scan: leakage floor must be non-negative");
  ResonanceTrace trace;
  trace.kind = TraceKind::reflected_power;
  trace.axis.assign(coil_field_axis.begin(), coil_field_axis.end());
  trace.values.resize(trace.axis.size());
  trace.validate();

  std::vector<double> spin_frequencies(trace.axis.size());
  for (std::size_t k = 0; k < trace.axis.size(); ++k) {
    FieldConfig f = field;
    f.b_coil = trace.axis[k];
    f.validate();
    spin_frequencies[k] = field_to_spin_frequency(f, spin);
  }
  const SweepGrid row = sweep_2d(cavity, spin, drive, std::span<const double>(&drive.omega_d, 1),
                                 spin_frequencies);
  for (std::size_t k = 0; k < trace.axis.size(); ++k) {
    trace.values[k] = row.cells[k].reflected_fraction() * drive.power_in + leakage_floor;
  }
  return trace;
}

ResonanceTrace odmr_scan(double contrast_c, double fwhm, double center, std::span<const double> axis) {
  require(contrast_c >= 0.0 && contrast_c <= 1.0, "odmr_scan: contrast must lie in [0, 1]");
  require(fwhm > 0.0, "odmr_scan: fwhm must be positive");
  ResonanceTrace trace;
  trace.kind = TraceKind::odmr_fluorescence;
  trace.axis.assign(axis.begin(), axis.end());
  const double hw2 = 0.25 * fwhm * fwhm;
  trace.values.reserve(axis.size());
  for (double x : axis) {
    const double d = x - center;
    trace.values.push_back(1.0 - contrast_c * hw2 / (d * d + hw2));
  }
  trace.validate();
  return trace;
}

double extract_fwhm(const ResonanceTrace& trace, Polarity polarity) {
  trace.validate();
  require(trace.values.size() >= 3, "extract_fwhm: need at least three samples");
  const auto& v = trace.values;
  const auto& x = trace.axis;

  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const std::size_t extremum = static_cast<std::size_t>((polarity == Polarity::dip ? lo_it : hi_it) - v.begin());
  if (extremum == 0 || extremum + 1 == v.size()) {
    throw FeatureError("extremum at the axis boundary", {{"index", extremum}, {"samples", v.size()}});
  }
  const double half = 0.5 * (*lo_it + *hi_it);
  // Inside the feature when on the extremum's side of the half level.
  auto inside = [&](double value) { return polarity == Polarity::dip ? value < half : value > half; };

  auto crossing = [&](std::size_t a, std::size_t b) {
    const double t = (half - v[a]) / (v[b] - v[a]);
    return x[a] + t * (x[b] - x[a]);
  };

  std::optional<double> left;
  for (std::size_t k = extremum; k > 0; --k) {
    if (!inside(v[k - 1])) {
      left = crossing(k, k - 1);
      break;
    }
  }
  std::optional<double> right;
  for (std::size_t k = extremum; k + 1 < v.size(); ++k) {
    if (!inside(v[k + 1])) {
      right = crossing(k, k + 1);
      break;
    }
  }
  if (!left || !right) {
    throw FeatureError("half-level crossing not found on both sides",
                       {{"index", extremum}, {"half_level", half}, {"left_found", left.has_value()},
                        {"right_found", right.has_value()}});
  }
  return std::abs(*right - *left);
}

double contrast(const ResonanceTrace& trace) {
  trace.validate();
  require(!trace.values.empty(), "contrast: empty trace");
  const auto [lo, hi] = std::minmax_element(trace.values.begin(), trace.values.end());
  require(*hi > 0.0, "contrast: trace maximum must be positive");
  return (*hi - *lo) / *hi;
}

}  // namespace cavspin
