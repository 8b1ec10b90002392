#pragma once

// Parameter estimation from power maps and ODMR traces.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspin/least_squares.hpp"
#include "cavspin/model.hpp"
#include "cavspin/sweep.hpp"

namespace cavspin {

enum class FitParameter { g_eff, kappa_c0, kappa_c1, kappa_c2, kappa_s, omega_c };

std::string_view to_string(FitParameter p);
FitParameter fit_parameter_from_string(std::string_view name);

/// Reads a parameter in rad/s from the model.
double get_parameter(const CavityParams& cavity, const SpinEnsembleParams& spin, FitParameter p);
/// g_eff is applied through g_s = g_eff / sqrt(N), so N must be positive.
void set_parameter(CavityParams& cavity, SpinEnsembleParams& spin, FitParameter p, double value);

/// Measured |Gamma|^2 or |T|^2 on a (drive, spin) grid, row-major with the
/// drive index outer. The model power is divided by `scale` before comparison.
struct PowerMap {
  Channel channel = Channel::reflection;
  std::vector<double> drive_axis;
  std::vector<double> spin_axis;
  std::vector<double> values;
  std::vector<double> weights;  // empty means unit weights
  double scale = 1.0;

  void validate() const;
};

/// Power in `channel` at every cell, honoring the grid normalization.
PowerMap power_map(const SweepGrid& grid, Channel channel);

struct Bounds {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

struct FitSettings {
  LeastSquaresOptions solver;
  /// Latin-hypercube restarts within the bounds if the first start fails.
  bool multistart = false;
  int multistart_points = 8;
  std::uint64_t seed = 0;
};

/// Immutable after construction.
class FitProblem {
public:
  /// Throws std::invalid_argument for no data, no free parameters, mismatched
  /// bounds, or an initial guess outside its bounds.
  FitProblem(CavityParams cavity, SpinEnsembleParams spin, DriveParams drive, std::vector<PowerMap> data,
             std::vector<FitParameter> free, std::vector<Bounds> bounds, std::vector<double> initial_guess,
             FitSettings settings = {});

  const CavityParams& cavity() const { return cavity_; }
  const SpinEnsembleParams& spin() const { return spin_; }
  const DriveParams& drive() const { return drive_; }
  const std::vector<PowerMap>& data() const { return data_; }
  const std::vector<FitParameter>& free_parameters() const { return free_; }
  const std::vector<Bounds>& bounds() const { return bounds_; }
  const std::vector<double>& initial_guess() const { return initial_guess_; }
  const FitSettings& settings() const { return settings_; }
  std::size_t residual_count() const;

private:
  CavityParams cavity_;
  SpinEnsembleParams spin_;
  DriveParams drive_;
  std::vector<PowerMap> data_;
  std::vector<FitParameter> free_;
  std::vector<Bounds> bounds_;
  std::vector<double> initial_guess_;
  FitSettings settings_;
};

/// weight * (model - data) for every cell of every map, maps in order, each
/// map row-major. A model failure is rethrown with the map and cell indices.
std::vector<double> residuals(const FitProblem& problem, std::span<const double> params);

struct FitResult {
  std::vector<FitParameter> parameters;
  std::vector<double> estimates;
  std::vector<double> standard_errors;
  double residual_norm = 0.0;
  int n_iterations = 0;
  bool converged = false;
  Termination termination = Termination::iteration_cap;
  std::vector<double> cost_history;
  int starts = 1;
  std::uint64_t seed = 0;

  std::optional<double> estimate(FitParameter p) const;
};

FitResult fit_spectra_2d(const FitProblem& problem);

void to_json(nlohmann::json& j, const FitResult& r);
void from_json(const nlohmann::json& j, FitResult& r);

// ---------------------------------------------------------------------------

/// offset - depth * (w/2)^2 / ((x - center)^2 + (w/2)^2). For a trace from
/// odmr_scan, offset = 1 and depth equals its contrast C.
struct LorentzianFit {
  double center = 0.0;
  double fwhm = 0.0;
  double contrast = 0.0;
  double offset = 0.0;
  std::vector<double> standard_errors;  // center, fwhm, contrast, offset
  double residual_norm = 0.0;
  int n_iterations = 0;
  bool converged = false;
};

double lorentzian_dip(double x, double center, double fwhm, double depth, double offset);

/// Starting point from the trace minimum and its half-depth width.
LorentzianFit fit_lorentzian(const ResonanceTrace& trace, const LeastSquaresOptions& options = {});

}  // namespace cavspin
