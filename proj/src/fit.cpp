#include "cavspin/fit.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "cavspin/errors.hpp"

namespace cavspin {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

constexpr FitParameter kAllParameters[] = {FitParameter::g_eff,    FitParameter::kappa_c0, FitParameter::kappa_c1,
                                           FitParameter::kappa_c2, FitParameter::kappa_s,  FitParameter::omega_c};

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double json_number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

struct Start {
  LeastSquaresResult result;
  double cost;
};

}  // namespace

std::string_view to_string(FitParameter p) {
  switch (p) {
    case FitParameter::g_eff: return "g_eff";
    case FitParameter::kappa_c0: return "kappa_c0";
    case FitParameter::kappa_c1: return "kappa_c1";
    case FitParameter::kappa_c2: return "kappa_c2";
    case FitParameter::kappa_s: return "kappa_s";
    case FitParameter::omega_c: return "omega_c";
  }
  return "unknown";
}

FitParameter fit_parameter_from_string(std::string_view name) {
  for (FitParameter p : kAllParameters) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown fit parameter: " + std::string(name));
}

double get_parameter(const CavityParams& cavity, const SpinEnsembleParams& spin, FitParameter p) {
  switch (p) {
    case FitParameter::g_eff: return spin.g_eff();
    case FitParameter::kappa_c0: return cavity.kappa_c0;
    case FitParameter::kappa_c1: return cavity.kappa_c1;
    case FitParameter::kappa_c2: return cavity.kappa_c2;
    case FitParameter::kappa_s: return spin.kappa_s;
    case FitParameter::omega_c: return cavity.omega_c;
  }
  throw std::invalid_argument("unknown fit parameter");
}

void set_parameter(CavityParams& cavity, SpinEnsembleParams& spin, FitParameter p, double value) {
  switch (p) {
    case FitParameter::g_eff:
      require(spin.n_spins > 0.0, "g_eff can only be set with a positive spin count");
      spin.g_s = value / std::sqrt(spin.n_spins);
      return;
    case FitParameter::kappa_c0: cavity.kappa_c0 = value; return;
    case FitParameter::kappa_c1: cavity.kappa_c1 = value; return;
    case FitParameter::kappa_c2: cavity.kappa_c2 = value; return;
    case FitParameter::kappa_s: spin.kappa_s = value; return;
    case FitParameter::omega_c: cavity.omega_c = value; return;
  }
}

void PowerMap::validate() const {
  require(!drive_axis.empty() && !spin_axis.empty(), "power map: axes must be non-empty");
  require(values.size() == drive_axis.size() * spin_axis.size(), "power map: value count does not match axes");
  require(weights.empty() || weights.size() == values.size(), "power map: weight count does not match values");
  require(scale > 0.0, "power map: scale must be positive");
}

PowerMap power_map(const SweepGrid& grid, Channel channel) {
  grid.validate();
  PowerMap map;
  map.channel = channel;
  map.drive_axis = grid.drive_axis;
  map.spin_axis = grid.spin_axis;
  map.scale = channel == Channel::reflection ? grid.reflection_scale : grid.transmission_scale;
  map.values.reserve(grid.cells.size());
  for (std::size_t i = 0; i < grid.drive_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.spin_axis.size(); ++j) map.values.push_back(grid.power(channel, i, j));
  }
  return map;
}

FitProblem::FitProblem(CavityParams cavity, SpinEnsembleParams spin, DriveParams drive, std::vector<PowerMap> data,
                       std::vector<FitParameter> free, std::vector<Bounds> bounds, std::vector<double> initial_guess,
                       FitSettings settings)
    : cavity_(cavity),
      spin_(spin),
      drive_(std::move(drive)),
      data_(std::move(data)),
      free_(std::move(free)),
      bounds_(std::move(bounds)),
      initial_guess_(std::move(initial_guess)),
      settings_(settings) {
  require(!free_.empty(), "fit problem: at least one free parameter is required");
  require(!data_.empty(), "fit problem: no data");
  for (const PowerMap& m : data_) m.validate();
  require(bounds_.size() == free_.size(), "fit problem: one bound pair per free parameter");
  require(initial_guess_.size() == free_.size(), "fit problem: one initial value per free parameter");
  for (std::size_t a = 0; a < free_.size(); ++a) {
    for (std::size_t b = a + 1; b < free_.size(); ++b) {
      require(free_[a] != free_[b], "fit problem: duplicate free parameter");
    }
    require(bounds_[a].lower <= bounds_[a].upper, "fit problem: empty bounds");
    require(bounds_[a].lower <= initial_guess_[a] && initial_guess_[a] <= bounds_[a].upper,
            "fit problem: initial guess outside bounds for " + std::string(to_string(free_[a])));
    if (settings_.multistart) {
      require(std::isfinite(bounds_[a].lower) && std::isfinite(bounds_[a].upper),
              "fit problem: multistart needs finite bounds");
    }
  }
  require(settings_.multistart_points > 0, "fit problem: multistart needs at least one point");
  cavity_.validate();
  spin_.validate();
  drive_.validate();
}

std::size_t FitProblem::residual_count() const {
  std::size_t n = 0;
  for (const PowerMap& m : data_) n += m.values.size();
  return n;
}

std::vector<double> residuals(const FitProblem& problem, std::span<const double> params) {
  require(params.size() == problem.free_parameters().size(), "residuals: parameter count mismatch");
  CavityParams cavity = problem.cavity();
  SpinEnsembleParams spin = problem.spin();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Bounds& b = problem.bounds()[k];
    require(b.lower <= params[k] && params[k] <= b.upper,
            "residuals: " + std::string(to_string(problem.free_parameters()[k])) + " outside bounds");
    set_parameter(cavity, spin, problem.free_parameters()[k], params[k]);
  }

  std::vector<double> out(problem.residual_count());
  std::size_t base = 0;
  for (std::size_t m = 0; m < problem.data().size(); ++m) {
    const PowerMap& map = problem.data()[m];
    const std::size_t cols = map.spin_axis.size();
    const auto cells = static_cast<std::ptrdiff_t>(map.values.size());
    std::ptrdiff_t failed_at = cells;
    std::exception_ptr failure;

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < cells; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      DriveParams drive = problem.drive();
      drive.omega_d = map.drive_axis[uk / cols];
      try {
        const ComplexResponse r = evaluate_response(cavity, spin, drive, map.spin_axis[uk % cols]);
        const double model =
            (map.channel == Channel::reflection ? r.reflected_fraction() : r.transmitted_fraction()) / map.scale;
        const double w = map.weights.empty() ? 1.0 : map.weights[uk];
        out[base + uk] = w * (model - map.values[uk]);
      } catch (const NumericalError& e) {
        nlohmann::json payload = e.payload();
        payload["map"] = m;
        payload["drive_index"] = uk / cols;
        payload["spin_index"] = uk % cols;
        const auto wrapped = std::make_exception_ptr(NumericalError(e.what(), payload));
#pragma omp critical(cavspin_residual_failure)
        if (k < failed_at) {
          failed_at = k;
          failure = wrapped;
        }
      }
    }
    if (failure) std::rethrow_exception(failure);
    base += map.values.size();
  }
  return out;
}

std::optional<double> FitResult::estimate(FitParameter p) const {
  for (std::size_t k = 0; k < parameters.size(); ++k) {
    if (parameters[k] == p) return estimates[k];
  }
  return std::nullopt;
}

FitResult fit_spectra_2d(const FitProblem& problem) {
  const std::size_t n = problem.free_parameters().size();
  Eigen::VectorXd lower(n);
  Eigen::VectorXd upper(n);
  for (std::size_t k = 0; k < n; ++k) {
    lower[static_cast<Eigen::Index>(k)] = problem.bounds()[k].lower;
    upper[static_cast<Eigen::Index>(k)] = problem.bounds()[k].upper;
  }
  const ResidualFunction f = [&problem](const Eigen::VectorXd& x) {
    const std::vector<double> r = residuals(problem, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    return to_eigen(r);
  };

  const Eigen::VectorXd x0 = to_eigen(problem.initial_guess());
  Start best{levenberg_marquardt(f, x0, lower, upper, problem.settings().solver), 0.0};
  best.cost = best.result.residuals.squaredNorm();
  int starts = 1;

  if (problem.settings().multistart && !best.result.converged()) {
    const int points = problem.settings().multistart_points;
    std::mt19937_64 rng(problem.settings().seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Latin hypercube: one stratum per point along every axis.
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(points), std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<int> strata(static_cast<std::size_t>(points));
      std::iota(strata.begin(), strata.end(), 0);
      std::shuffle(strata.begin(), strata.end(), rng);
      for (int p = 0; p < points; ++p) {
        const double u = (strata[static_cast<std::size_t>(p)] + unit(rng)) / points;
        samples[static_cast<std::size_t>(p)][k] = lower[static_cast<Eigen::Index>(k)] +
                                                  u * (upper[static_cast<Eigen::Index>(k)] - lower[static_cast<Eigen::Index>(k)]);
      }
    }
    for (const auto& sample : samples) {
      ++starts;
      try {
        LeastSquaresResult r = levenberg_marquardt(f, to_eigen(sample), lower, upper, problem.settings().solver);
        const double cost = r.residuals.squaredNorm();
        const bool better = (r.converged() && !best.result.converged()) ||
                            (r.converged() == best.result.converged() && cost < best.cost);
        if (better) best = {std::move(r), cost};
      } catch (const std::exception&) {
        // A start whose initial point cannot be evaluated is skipped.
      }
    }
  }

  FitResult out;
  out.parameters = problem.free_parameters();
  out.estimates = to_vector(best.result.x);
  out.standard_errors = to_vector(best.result.standard_errors);
  out.residual_norm = best.result.residual_norm();
  out.n_iterations = best.result.iterations;
  out.converged = best.result.converged();
  out.termination = best.result.termination;
  out.cost_history = best.result.cost_history;
  out.starts = starts;
  out.seed = problem.settings().seed;
  return out;
}

void to_json(nlohmann::json& j, const FitResult& r) {
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t k = 0; k < r.parameters.size(); ++k) {
    params.push_back({{"name", std::string(to_string(r.parameters[k]))},
                      {"estimate", r.estimates[k]},
                      {"standard_error", std::isfinite(r.standard_errors[k]) ? nlohmann::json(r.standard_errors[k])
                                                                            : nlohmann::json(nullptr)}});
  }
  j = {{"units", "rad/s"},
       {"parameters", params},
       {"residual_norm", r.residual_norm},
       {"iterations", r.n_iterations},
       {"converged", r.converged},
       {"termination", std::string(to_string(r.termination))},
       {"cost_history", r.cost_history},
       {"starts", r.starts},
       {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, FitResult& r) {
  r = FitResult{};
  for (const auto& p : j.at("parameters")) {
    r.parameters.push_back(fit_parameter_from_string(p.at("name").get<std::string>()));
    r.estimates.push_back(json_number_or_nan(p.at("estimate")));
    r.standard_errors.push_back(json_number_or_nan(p.at("standard_error")));
  }
  r.residual_norm = json_number_or_nan(j.at("residual_norm"));
  r.n_iterations = j.at("iterations").get<int>();
  r.converged = j.at("converged").get<bool>();
  const auto termination = j.at("termination").get<std::string>();
  for (Termination t : {Termination::gradient, Termination::relative_decrease, Termination::zero_residual,
                        Termination::iteration_cap, Termination::stalled}) {
    if (to_string(t) == termination) r.termination = t;
  }
  for (const auto& c : j.at("cost_history")) r.cost_history.push_back(json_number_or_nan(c));
  r.starts = j.at("starts").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
}

double lorentzian_dip(double x, double center, double fwhm, double depth, double offset) {
  const double hw2 = 0.25 * fwhm * fwhm;
  const double d = x - center;
  return offset - depth * hw2 / (d * d + hw2);
}

LorentzianFit fit_lorentzian(const ResonanceTrace& trace, const LeastSquaresOptions& options) {
  trace.validate();
  require(trace.values.size() >= 5, "fit_lorentzian: need at least five samples");

  const auto [lo_it, hi_it] = std::minmax_element(trace.values.begin(), trace.values.end());
  const double center0 = trace.axis[static_cast<std::size_t>(lo_it - trace.values.begin())];
  const double offset0 = *hi_it;
  const double depth0 = *hi_it - *lo_it;
  double width0 = 0.0;
  try {
    width0 = extract_fwhm(trace, Polarity::dip);
  } catch (const FeatureError&) {
    width0 = 0.1 * std::abs(trace.axis.back() - trace.axis.front());
  }
  require(width0 > 0.0 && depth0 > 0.0, "fit_lorentzian: trace has no dip");

  // Internal parameters: center offset and width in units of the initial
  // width, then depth and offset as is.
  const ResidualFunction f = [&](const Eigen::VectorXd& p) {
    const double center = center0 + p[0] * width0;
    const double fwhm = p[1] * width0;
    Eigen::VectorXd r(static_cast<Eigen::Index>(trace.values.size()));
    for (std::size_t k = 0; k < trace.values.size(); ++k) {
      r[static_cast<Eigen::Index>(k)] = lorentzian_dip(trace.axis[k], center, fwhm, p[2], p[3]) - trace.values[k];
    }
    return r;
  };
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::Vector4d x0(0.0, 1.0, depth0, offset0);
  Eigen::Vector4d lower(-inf, 1e-12, -inf, -inf);
  Eigen::Vector4d upper(inf, inf, inf, inf);
  const LeastSquaresResult r = levenberg_marquardt(f, x0, lower, upper, options);

  LorentzianFit fit;
  fit.center = center0 + r.x[0] * width0;
  fit.fwhm = r.x[1] * width0;
  fit.contrast = r.x[2];
  fit.offset = r.x[3];
  fit.standard_errors = {r.standard_errors[0] * width0, r.standard_errors[1] * width0, r.standard_errors[2],
                         r.standard_errors[3]};
  fit.residual_norm = r.residual_norm();
  fit.n_iterations = r.iterations;
  fit.converged = r.converged();
  return fit;
}

}  // namespace cavspin
