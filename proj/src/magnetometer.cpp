#include "cavspin/magnetometer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/math/tools/toms748_solve.hpp>
#include <fftw3.h>

#include "cavspin/errors.hpp"

namespace cavspin {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

// fftw planning is not thread-safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

struct PlanDeleter {
  void operator()(fftw_plan p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

double frequency_step(const SpinEnsembleParams& spin) {
  const double width = spin.effective_inhomogeneous_width();
  return (width > 0.0 ? width : spin.kappa_s) / 1000.0;
}

double operating_photon_number(const Readout& r) {
  return resolve_photon_number(r.cavity, r.spin, r.drive, r.cavity.omega_c);
}

}  // namespace

void FieldConfig::validate() const {
  require(projection > 0.0 && projection <= 1.0, "field: projection must lie in (0, 1]");
  require(coil_range > 0.0, "field: coil range must be positive");
  require(std::abs(b_coil) <= coil_range, "field: |B_coil| exceeds the coil range");
}

double field_to_spin_frequency(const FieldConfig& field, const SpinEnsembleParams& spin) {
  return spin.zero_field_splitting + spin_frequency_slope(field, spin) * field.total();
}

double spin_frequency_slope(const FieldConfig& field, const SpinEnsembleParams& spin) {
  return spin.gamma_e * field.projection;
}

double coil_field_for(const FieldConfig& field, const SpinEnsembleParams& spin, double omega_s) {
  return (omega_s - spin.zero_field_splitting) / spin_frequency_slope(field, spin) - field.b_perm;
}

IQSample iq_demodulate(Complex gamma, double v_in, double lo_phase, double chain_gain) {
  require(v_in >= 0.0, "iq_demodulate: v_in must be non-negative");
  const Complex v = chain_gain * v_in * gamma * std::polar(1.0, -lo_phase);
  return {v.real(), v.imag()};
}

double Readout::v_in() const { return std::sqrt(drive.power_in * impedance); }

double Readout::operating_coil_field() const { return coil_field_for(field, spin, cavity.omega_c); }

void Readout::validate() const {
  cavity.validate();
  spin.validate();
  drive.validate();
  FieldConfig f = field;
  f.b_coil = operating_coil_field();
  f.validate();
  require(chain_gain > 0.0, "readout: chain gain must be positive");
  require(impedance > 0.0, "readout: impedance must be positive");
}

double quadrature_voltage(const Readout& readout, double lo_phase, double omega_s,
                          std::optional<double> n_cav_guess) {
  const ComplexResponse r = evaluate_response(readout.cavity, readout.spin, readout.drive, omega_s, n_cav_guess);
  return iq_demodulate(r.gamma, readout.v_in(), lo_phase, readout.chain_gain).q;
}

double calibrate_lo_phase(const Readout& readout) {
  readout.validate();
  const Complex gamma =
      evaluate_response(readout.cavity, readout.spin, readout.drive, readout.cavity.omega_c).gamma;
  // Gain and drive amplitude only scale Q; the root depends on Gamma alone.
  auto q = [&](double phi) { return (gamma * std::polar(1.0, -phi)).imag(); };
  auto i = [&](double phi) { return (gamma * std::polar(1.0, -phi)).real(); };

  constexpr int kScan = 16;
  for (int k = 0; k < kScan; ++k) {
    const double a = -kPi + kTwoPi * k / kScan;
    const double b = -kPi + kTwoPi * (k + 1) / kScan;
    const double qa = q(a);
    const double qb = q(b);
    if (qa == 0.0 && i(a) > 0.0) return a;
    if (!(qa > 0.0 && qb <= 0.0)) continue;
    if (qb == 0.0) {
      if (i(b) > 0.0) return b;
      continue;
    }
    boost::uintmax_t max_iter = 200;
    auto tol = [](double lo, double hi) { return std::abs(hi - lo) <= 1e-12; };
    const auto [lo, hi] = boost::math::tools::toms748_solve(q, a, b, qa, qb, tol, max_iter);
    const double root = 0.5 * (lo + hi);
    if (i(root) > 0.0) return root;
  }
  throw FeatureError("LO phase root not bracketed",
                     {{"re_gamma", gamma.real()}, {"im_gamma", gamma.imag()}});
}

double responsivity(const Readout& readout, double lo_phase) {
  readout.validate();
  const double h = frequency_step(readout.spin);
  const double w = readout.cavity.omega_c;
  const double n0 = operating_photon_number(readout);
  const double slope = (quadrature_voltage(readout, lo_phase, w + h, n0) - quadrature_voltage(readout, lo_phase, w - h, n0)) /
                       (2.0 * h);
  return slope * spin_frequency_slope(readout.field, readout.spin);
}

double photonic_responsivity(const Readout& readout, double lo_phase) {
  const double v = readout.v_in();
  require(v > 0.0, "photonic_responsivity: drive power must be positive");
  const double per_tesla = std::abs(responsivity(readout, lo_phase)) / (readout.chain_gain * v);
  return photon_flux(readout.drive.power_in, readout.drive.omega_d) * per_tesla;
}

double FieldWaveform::operator()(double t) const {
  double b = offset;
  for (const Tone& tone : tones) {
    b += std::sqrt(2.0) * tone.rms * std::sin(kTwoPi * tone.frequency * t + tone.phase);
  }
  return b;
}

double FieldWaveform::highest_frequency() const {
  double f = 0.0;
  for (const Tone& tone : tones) f = std::max(f, std::abs(tone.frequency));
  return f;
}

TimeSeries simulate_timeseries(const Readout& readout, double lo_phase, const FieldWaveform& waveform,
                               double duration, double sample_rate, double noise_floor, std::uint64_t seed) {
  readout.validate();
  require(duration > 0.0, "simulate_timeseries: duration must be positive");
  require(sample_rate > 2.0 * waveform.highest_frequency(),
          "simulate_timeseries: sample rate must exceed twice the highest waveform frequency");
  require(noise_floor >= 0.0, "simulate_timeseries: noise floor must be non-negative");

  const auto samples = static_cast<std::size_t>(std::llround(duration * sample_rate));
  require(samples > 0, "simulate_timeseries: no samples");

  TimeSeries series;
  series.sample_rate = sample_rate;
  series.seed = seed;
  series.volts.resize(samples);

  FieldConfig field = readout.field;
  const double bias = readout.operating_coil_field();
  // One warm start for every sample keeps each voltage a pure function of omega_s.
  const double n0 = operating_photon_number(readout);
  for (std::size_t k = 0; k < samples; ++k) {
    field.b_coil = bias + waveform(series.time(k));
    series.volts[k] = quadrature_voltage(readout, lo_phase, field_to_spin_frequency(field, readout.spin), n0);
  }

  if (noise_floor > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_floor * std::sqrt(0.5 * sample_rate));
    for (double& v : series.volts) v += noise(rng);
  }
  return series;
}

Spectrum amplitude_spectral_density(std::span<const double> series, double sample_rate, std::size_t segment_length) {
  require(sample_rate > 0.0, "amplitude_spectral_density: sample rate must be positive");
  require(segment_length >= 4, "amplitude_spectral_density: segment length must be at least 4");
  require(series.size() >= 2 * segment_length,
          "amplitude_spectral_density: series shorter than two segments");

  const std::size_t n = segment_length;
  const std::size_t step = n / 2;
  const std::size_t segments = (series.size() - n) / step + 1;
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n);
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    window[k] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(n)));
    sum_w += window[k];
    sum_w2 += window[k] * window[k];
  }

  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
  std::unique_ptr<fftw_complex, FftwFree> out(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  Plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  }
  if (!plan) throw std::runtime_error("fftw planning failed");

  std::vector<double> psd(bins, 0.0);
  for (std::size_t s = 0; s < segments; ++s) {
    const double* seg = series.data() + s * step;
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += seg[k];
    mean /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) in.get()[k] = (seg[k] - mean) * window[k];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = out.get()[k][0];
      const double im = out.get()[k][1];
      psd[k] += re * re + im * im;
    }
  }

  Spectrum spectrum;
  spectrum.resolution = sample_rate / static_cast<double>(n);
  spectrum.enbw = sample_rate * sum_w2 / (sum_w * sum_w);
  spectrum.segments = static_cast<int>(segments);
  spectrum.frequency.resize(bins);
  spectrum.asd.resize(bins);
  const double scale = 1.0 / (sample_rate * sum_w2 * static_cast<double>(segments));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == bins - 1);
    spectrum.frequency[k] = static_cast<double>(k) * spectrum.resolution;
    spectrum.asd[k] = std::sqrt(psd[k] * scale * (edge ? 1.0 : 2.0));
  }
  return spectrum;
}

double tone_rms(const Spectrum& spectrum, double tone_frequency) {
  require(!spectrum.asd.empty() && spectrum.resolution > 0.0, "tone_rms: empty spectrum");
  const auto center = static_cast<std::ptrdiff_t>(std::llround(tone_frequency / spectrum.resolution));
  const auto last = static_cast<std::ptrdiff_t>(spectrum.asd.size()) - 1;
  require(center >= 0 && center <= last, "tone_rms: tone outside the spectrum");
  double power = 0.0;
  for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, center - 3); k <= std::min(last, center + 3); ++k) {
    power += spectrum.asd[static_cast<std::size_t>(k)] * spectrum.asd[static_cast<std::size_t>(k)];
  }
  return std::sqrt(power * spectrum.resolution);
}

double sensitivity_from_test_tone(const Spectrum& spectrum, double tone_frequency, double v_dig, double b_test,
                                  double band_lo, double band_hi) {
  require(v_dig > 0.0 && b_test > 0.0, "sensitivity_from_test_tone: v_dig and b_test must be positive");
  require(band_lo < band_hi, "sensitivity_from_test_tone: empty band");
  require(tone_frequency < band_lo || tone_frequency > band_hi,
          "sensitivity_from_test_tone: band must exclude the tone");
  std::vector<double> in_band;
  for (std::size_t k = 0; k < spectrum.frequency.size(); ++k) {
    if (spectrum.frequency[k] >= band_lo && spectrum.frequency[k] <= band_hi) in_band.push_back(spectrum.asd[k]);
  }
  require(!in_band.empty(), "sensitivity_from_test_tone: no bins in band");
  const std::size_t mid = in_band.size() / 2;
  std::nth_element(in_band.begin(), in_band.begin() + static_cast<std::ptrdiff_t>(mid), in_band.end());
  double median = in_band[mid];
  if (in_band.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(in_band.begin(), in_band.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return median * b_test / v_dig;
}

double johnson_voltage_density(double temperature, double resistance) {
  require(temperature >= 0.0 && resistance >= 0.0, "johnson_voltage_density: arguments must be non-negative");
  return std::sqrt(4.0 * kBoltzmann * temperature * resistance);
}

double johnson_noise_limit(double temperature, double resistance, double responsivity_v_per_t, double gain) {
  require(responsivity_v_per_t != 0.0, "johnson_noise_limit: responsivity must be nonzero");
  require(gain > 0.0, "johnson_noise_limit: gain must be positive");
  return johnson_voltage_density(temperature, resistance) * gain / std::abs(responsivity_v_per_t);
}

double photon_shot_noise_limit(double reflected_power, double omega, double photonic_responsivity_value) {
  require(photonic_responsivity_value > 0.0, "photon_shot_noise_limit: responsivity must be positive");
  return std::sqrt(2.0 * photon_flux(reflected_power, omega)) / photonic_responsivity_value;
}

double spin_projection_limit(double n_spins, double tau, double gamma_eff) {
  require(n_spins > 0.0 && tau > 0.0 && gamma_eff > 0.0, "spin_projection_limit: arguments must be positive");
  return 1.0 / (gamma_eff * std::sqrt(n_spins * tau));
}

SpinProjectionLimit spin_projection_band(double n_spins, double tau, double gamma_eff) {
  return {spin_projection_limit(n_spins, tau, gamma_eff), spin_projection_limit(n_spins, 2.0 * tau, gamma_eff),
          spin_projection_limit(n_spins, 0.5 * tau, gamma_eff)};
}

NoiseBudget noise_budget(const NoiseSources& sources) {
  NoiseBudget b;
  b.responsivity = sources.responsivity;
  if (sources.johnson) {
    b.johnson = johnson_noise_limit(sources.johnson->temperature, sources.johnson->resistance, sources.responsivity,
                                    sources.johnson->gain);
  }
  if (sources.photon_shot) {
    b.photon_shot = photon_shot_noise_limit(sources.photon_shot->reflected_power, sources.photon_shot->omega,
                                            sources.photon_shot->photonic_responsivity);
  }
  if (sources.spin_projection) {
    b.spin_projection = spin_projection_limit(sources.spin_projection->n_spins, sources.spin_projection->tau,
                                              sources.spin_projection->gamma_eff);
  }
  if (sources.electronics_floor) {
    require(*sources.electronics_floor >= 0.0, "noise_budget: electronics floor must be non-negative");
    require(sources.responsivity != 0.0, "noise_budget: responsivity must be nonzero");
    b.electronics_floor = *sources.electronics_floor / std::abs(sources.responsivity);
  }
  b.total = std::sqrt(b.johnson * b.johnson + b.photon_shot * b.photon_shot + b.spin_projection * b.spin_projection +
                      b.electronics_floor * b.electronics_floor);
  return b;
}

void to_json(nlohmann::json& j, const NoiseBudget& b) {
  j = {{"units", "T/sqrt(Hz)"},
       {"johnson", b.johnson},
       {"photon_shot", b.photon_shot},
       {"spin_projection", b.spin_projection},
       {"electronics_floor", b.electronics_floor},
       {"total", b.total},
       {"responsivity_v_per_t", b.responsivity}};
}

void from_json(const nlohmann::json& j, NoiseBudget& b) {
  b.johnson = j.at("johnson").get<double>();
  b.photon_shot = j.at("photon_shot").get<double>();
  b.spin_projection = j.at("spin_projection").get<double>();
  b.electronics_floor = j.at("electronics_floor").get<double>();
  b.total = j.at("total").get<double>();
  b.responsivity = j.at("responsivity_v_per_t").get<double>();
}

}  // namespace cavspin
