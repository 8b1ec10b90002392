#include "cavspin/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <random>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>
#include <fftw3.h>

#include "cavspin/errors.hpp"
#include "cavspin/io.hpp"

namespace cavspin::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

const char* const kCommands[] = {"simulate", "sweep", "fit", "magnetometer", "budget"};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json versions() {
  return {{"cavspin", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"fftw", std::string(fftw_version)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

void write_json(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

template <typename Writer>
void write_stream(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  writer(out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
T require_block(const std::optional<T>& block, const char* name) {
  if (!block) throw ConfigError(std::string("/") + name, "required for this command");
  return *block;
}

Json hz_summary(const SystemConfig& sys) {
  const double g_eff = sys.spin.g_eff();
  return {{"g_eff_hz", angular_to_hz(g_eff)},
          {"kappa_c_hz", angular_to_hz(sys.cavity.kappa_c())},
          {"loaded_q", sys.cavity.loaded_q()},
          {"cooperativity", cooperativity(g_eff, sys.spin.kappa_s, sys.cavity.kappa_c())}};
}

std::vector<fs::path> run_simulate(const RunConfig& config, const fs::path& out) {
  const SystemConfig& sys = config.system;
  const double omega_s = config.simulate ? sys.cavity.omega_c + config.simulate->spin_detuning
                                         : field_to_spin_frequency(sys.field, sys.spin);
  SweepGrid grid = sweep_2d(sys.cavity, sys.spin, sys.drive, std::span<const double>(&sys.drive.omega_d, 1),
                            std::span<const double>(&omega_s, 1));
  save_grid(grid, out / "simulate");
  return {out / "simulate.csv", out / "simulate.json"};
}

std::vector<fs::path> run_sweep(const RunConfig& config, const fs::path& out) {
  const SystemConfig& sys = config.system;
  const SweepConfig sweep = require_block(config.sweep, "sweep");
  std::vector<fs::path> files;
  Json summary = hz_summary(sys);

  if (sweep.mode == SweepConfig::Mode::map) {
    const std::vector<double> drives = drive_axis(sys, sweep);
    const std::vector<double> spins = spin_axis(sys, sweep.field_offset.values());
    SweepGrid grid = sweep_2d(sys.cavity, sys.spin, sys.drive, drives, spins);
    if (sweep.normalize) grid = normalize_unity(std::move(grid));
    save_grid(grid, out / "sweep");
    files = {out / "sweep.csv", out / "sweep.json"};
    summary["shape"] = {drives.size(), spins.size()};
    if (sweep.extract_splitting) {
      try {
        summary["splitting_hz"] = angular_to_hz(avoided_crossing_splitting(grid, sweep.splitting_channel));
      } catch (const UnresolvedSplitting& e) {
        summary["splitting_hz"] = nullptr;
        summary["splitting_error"] = {{"message", e.what()}, {"payload", e.payload()}};
      }
    }
  } else {
    std::vector<double> coil = sweep.field_offset.values();
    const double bias = operating_coil_field(sys);
    for (double& b : coil) b += bias;
    const ResonanceTrace trace = magnetic_resonance_scan(sys.cavity, sys.spin, sys.drive, sys.field, coil,
                                                         sweep.leakage_power(sys.drive.power_in));
    write_stream(out / "trace.csv", [&](std::ostream& s) { write_trace_csv(s, trace); });
    files = {out / "trace.csv"};
    const double slope = spin_frequency_slope(sys.field, sys.spin);
    const double fwhm_field = extract_fwhm(trace, Polarity::dip);
    summary["fwhm_t"] = fwhm_field;
    summary["fwhm_hz"] = angular_to_hz(fwhm_field * slope);
    summary["contrast"] = contrast(trace);
    if (sweep.odmr_contrast && sweep.odmr_fwhm) {
      const ResonanceTrace odmr = odmr_scan(*sweep.odmr_contrast, *sweep.odmr_fwhm / slope, bias, coil);
      write_stream(out / "odmr.csv", [&](std::ostream& s) { write_trace_csv(s, odmr); });
      files.push_back(out / "odmr.csv");
      const double odmr_fwhm_field = extract_fwhm(odmr, Polarity::dip);
      summary["odmr_fwhm_hz"] = angular_to_hz(odmr_fwhm_field * slope);
      summary["odmr_contrast"] = contrast(odmr);
      summary["narrowing_ratio"] = odmr_fwhm_field / fwhm_field;
    }
  }
  write_json(out / "sweep_summary.json", summary);
  files.push_back(out / "sweep_summary.json");
  return files;
}

std::vector<fs::path> run_fit(const RunConfig& config, const fs::path& out) {
  const SystemConfig& sys = config.system;
  const FitConfig fit = require_block(config.fit, "fit");
  std::vector<fs::path> files;

  const bool from_files = fit.reflection_grid || fit.transmission_grid;
  if (from_files || config.sweep) {
    std::vector<PowerMap> data;
    if (from_files) {
      if (fit.reflection_grid) data.push_back(power_map(load_grid(*fit.reflection_grid), Channel::reflection));
      if (fit.transmission_grid) data.push_back(power_map(load_grid(*fit.transmission_grid), Channel::transmission));
    } else {
      const SweepConfig& sweep = *config.sweep;
      const SweepGrid grid = sweep_2d(sys.cavity, sys.spin, sys.drive, drive_axis(sys, sweep),
                                      spin_axis(sys, sweep.field_offset.values()));
      std::mt19937_64 rng(config.seed);
      std::normal_distribution<double> unit(0.0, 1.0);
      for (Channel channel : fit.channels) {
        PowerMap map = power_map(grid, channel);
        if (fit.synthetic_noise > 0.0) {
          for (double& v : map.values) v *= 1.0 + fit.synthetic_noise * unit(rng);
        }
        data.push_back(std::move(map));
      }
    }
    FitSettings settings;
    settings.multistart = fit.multistart;
    settings.seed = config.seed;
    settings.solver.max_iterations = fit.max_iterations;
    const FitProblem problem(sys.cavity, sys.spin, sys.drive, std::move(data), fit.free, fit.bounds,
                             fit.initial_guess, settings);
    const FitResult result = fit_spectra_2d(problem);
    Json report = result;
    Json hz = Json::object();
    for (std::size_t k = 0; k < result.parameters.size(); ++k) {
      hz[std::string(to_string(result.parameters[k]))] = angular_to_hz(result.estimates[k]);
    }
    report["estimates_hz"] = hz;
    write_json(out / "fit.json", report);
    files.push_back(out / "fit.json");
  }

  if (fit.odmr_trace) {
    std::ifstream in(*fit.odmr_trace, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + fit.odmr_trace->string());
    const LorentzianFit l = fit_lorentzian(read_trace_csv(in));
    write_json(out / "lorentzian.json", {{"center", l.center},
                                         {"fwhm", l.fwhm},
                                         {"contrast", l.contrast},
                                         {"offset", l.offset},
                                         {"standard_errors", l.standard_errors},
                                         {"residual_norm", l.residual_norm},
                                         {"iterations", l.n_iterations},
                                         {"converged", l.converged}});
    files.push_back(out / "lorentzian.json");
  }
  return files;
}

std::vector<fs::path> run_magnetometer(const RunConfig& config, const fs::path& out) {
  const MagnetometerConfig mag = require_block(config.magnetometer, "magnetometer");
  const Readout readout = make_readout(config.system, mag);
  const double phase = calibrate_lo_phase(readout);
  const double resp = responsivity(readout, phase);
  const TimeSeries series =
      simulate_timeseries(readout, phase, mag.waveform, mag.duration, mag.sample_rate, mag.noise_floor, config.seed);
  const Spectrum spectrum = amplitude_spectral_density(series.volts, series.sample_rate, mag.segment_length);

  write_stream(out / "timeseries.csv", [&](std::ostream& s) { write_timeseries_csv(s, series); });
  write_stream(out / "asd.csv", [&](std::ostream& s) { write_spectrum_csv(s, spectrum); });

  Json report = {{"lo_phase_rad", phase},
                 {"responsivity_v_per_t", resp},
                 {"v_in_rms", readout.v_in()},
                 {"chain_gain", readout.chain_gain},
                 {"seed", config.seed}};
  if (!mag.waveform.tones.empty()) {
    const Tone& tone = mag.waveform.tones.front();
    const double v_dig = tone_rms(spectrum, tone.frequency);
    report["tone_hz"] = tone.frequency;
    report["tone_rms_t"] = tone.rms;
    report["v_dig_rms"] = v_dig;
    report["sensitivity_t_per_rthz"] =
        sensitivity_from_test_tone(spectrum, tone.frequency, v_dig, tone.rms, mag.band_lo, mag.band_hi);
  }
  write_json(out / "magnetometer.json", report);
  return {out / "timeseries.csv", out / "asd.csv", out / "magnetometer.json"};
}

std::vector<fs::path> run_budget(const RunConfig& config, const fs::path& out) {
  const BudgetConfig b = require_block(config.budget, "budget");
  const MagnetometerConfig mag = config.magnetometer.value_or(MagnetometerConfig{});
  const SystemConfig& sys = config.system;
  const Readout readout = make_readout(sys, mag);
  const double phase = calibrate_lo_phase(readout);

  NoiseSources sources;
  sources.responsivity = responsivity(readout, phase);
  if (b.johnson) sources.johnson = JohnsonSource{b.temperature, b.resistance, b.johnson_gain};
  sources.electronics_floor = b.electronics_floor;
  double reflected = 0.0;
  if (b.photon_shot) {
    reflected = b.reflected_power.value_or(
        evaluate_response(sys.cavity, sys.spin, sys.drive, sys.cavity.omega_c).reflected_fraction() *
        sys.drive.power_in);
    sources.photon_shot = ShotNoiseSource{reflected, sys.drive.omega_d, photonic_responsivity(readout, phase)};
  }
  const double gamma_eff = spin_frequency_slope(sys.field, sys.spin);
  if (b.spin_projection) sources.spin_projection = SpinProjectionSource{sys.spin.n_spins, sys.t1_op, gamma_eff};

  const NoiseBudget budget = noise_budget(sources);
  Json report = budget;
  if (b.spin_projection) {
    const SpinProjectionLimit band = spin_projection_band(sys.spin.n_spins, sys.t1_op, gamma_eff);
    report["spin_projection_band"] = {{"lower", band.lower}, {"upper", band.upper}};
  }
  if (b.johnson) report["johnson_voltage_density"] = johnson_voltage_density(b.temperature, b.resistance);
  if (b.photon_shot) {
    report["reflected_power_w"] = reflected;
    report["reflected_photon_flux"] = photon_flux(reflected, sys.drive.omega_d);
  }
  write_json(out / "noise_budget.json", report);
  return {out / "noise_budget.json"};
}

void report_error(std::ostream& err, const fs::path& out_dir, const Json& report) {
  err << report.dump(2) << '\n';
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!ec) {
    try {
      write_json(out_dir / "error.json", report);
    } catch (const std::exception&) {
      // stderr already carries the report
    }
  }
}

}  // namespace

std::vector<fs::path> run_command(const std::string& command, const RunConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (command == "simulate") return run_simulate(config, out_dir);
  if (command == "sweep") return run_sweep(config, out_dir);
  if (command == "fit") return run_fit(config, out_dir);
  if (command == "magnetometer") return run_magnetometer(config, out_dir);
  if (command == "budget") return run_budget(config, out_dir);
  throw std::invalid_argument("unknown command: " + command);
}

int run(const Invocation& invocation, std::ostream& out, std::ostream& err) {
  fs::path out_dir = invocation.out.value_or(fs::path("out"));
  try {
    RunConfig config = load_config(invocation.config);
    if (!invocation.out) out_dir = config.output_dir;
    if (invocation.seed) config.seed = *invocation.seed;

    const auto start = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    const std::vector<fs::path> files = run_command(invocation.command, config, out_dir);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    Json names = Json::array();
    for (const fs::path& f : files) names.push_back(f.filename().string());
    write_json(out_dir / "manifest.json", {{"command", invocation.command},
                                           {"config", invocation.config.string()},
                                           {"config_hash", hex64(config_hash(config.source))},
                                           {"seed", config.seed},
                                           {"versions", versions()},
                                           {"started_utc", started},
                                           {"wall_time_s", wall},
                                           {"files", names}});
    for (const fs::path& f : files) out << f.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    report_error(err, out_dir, e.report());
    return kExitConfig;
  } catch (const NumericalError& e) {
    report_error(err, out_dir, {{"error", "numerical"}, {"message", e.what()}, {"payload", e.payload()}});
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    report_error(err, out_dir,
                 {{"error", "invalid_config"}, {"diagnostics", {{{"path", ""}, {"message", e.what()}}}}});
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error(err, out_dir, {{"error", "failure"}, {"message", e.what()}});
    return kExitFailure;
  }
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cavity readout of spin ensembles: forward model, fitting and magnetometry"};
  app.set_version_flag("--version", kVersion);
  Invocation inv;
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  app.add_option("command", inv.command, "simulate | sweep | fit | magnetometer | budget")
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(std::begin(kCommands), std::end(kCommands))));
  app.add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides seed)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  inv.config = config;
  if (out_opt->count() > 0) inv.out = out_dir;
  if (seed_opt->count() > 0) inv.seed = seed;
  return run(inv, out, err);
}

}  // namespace cavspin::cli
