#include "cavspin/config.hpp"

#include <cmath>
#include <memory>
#include <set>

#include "cavspin/io.hpp"

namespace cavspin {
namespace {

using Json = nlohmann::json;

std::string join_diagnostics(const std::vector<ConfigDiagnostic>& diagnostics) {
  std::string s = "invalid configuration:";
  for (const auto& d : diagnostics) s += "\n  " + d.path + ": " + d.message;
  return s;
}

using Diagnostics = std::vector<ConfigDiagnostic>;

// View over one JSON object that records which keys were read, so leftovers
// can be reported as unknown.
class Section {
public:
  Section(const Json* node, std::string path, Diagnostics& diagnostics)
      : node_(node), path_(std::move(path)), diagnostics_(diagnostics) {
    if (node_ != nullptr && !node_->is_object()) {
      error("", "expected an object");
      node_ = nullptr;
    }
  }

  bool present() const { return node_ != nullptr; }
  bool has(const std::string& key) const { return node_ != nullptr && node_->contains(key); }

  std::string path(const std::string& key) const { return path_ + "/" + key; }

  void error(const std::string& key, const std::string& message) {
    diagnostics_.push_back({key.empty() ? path_ : path(key), message});
  }

  const Json* raw(const std::string& key) {
    if (node_ == nullptr) return nullptr;
    used_.insert(key);
    const auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  std::optional<double> number(const std::string& key) {
    const Json* v = raw(key);
    if (v == nullptr) return std::nullopt;
    if (!v->is_number()) {
      error(key, "expected a number");
      return std::nullopt;
    }
    const double x = v->get<double>();
    if (!std::isfinite(x)) {
      error(key, "must be finite");
      return std::nullopt;
    }
    return x;
  }

  double number(const std::string& key, double fallback) { return number(key).value_or(fallback); }

  double required_number(const std::string& key) {
    if (!has(key)) {
      error(key, "required");
      raw(key);
      return 0.0;
    }
    return number(key).value_or(0.0);
  }

  std::optional<double> positive(const std::string& key) {
    auto v = number(key);
    if (v && !(*v > 0.0)) {
      error(key, "must be positive");
      return std::nullopt;
    }
    return v;
  }

  std::optional<double> non_negative(const std::string& key) {
    auto v = number(key);
    if (v && *v < 0.0) {
      error(key, "must be non-negative");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::string> string(const std::string& key) {
    const Json* v = raw(key);
    if (v == nullptr) return std::nullopt;
    if (!v->is_string()) {
      error(key, "expected a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<bool> boolean(const std::string& key) {
    const Json* v = raw(key);
    if (v == nullptr) return std::nullopt;
    if (!v->is_boolean()) {
      error(key, "expected true or false");
      return std::nullopt;
    }
    return v->get<bool>();
  }

  std::optional<std::int64_t> integer(const std::string& key) {
    const Json* v = raw(key);
    if (v == nullptr) return std::nullopt;
    if (!v->is_number_integer()) {
      error(key, "expected an integer");
      return std::nullopt;
    }
    return v->get<std::int64_t>();
  }

  Section child(const std::string& key) { return Section(raw(key), path(key), diagnostics_); }

  /// Reports every key that was never read.
  void finish() {
    if (node_ == nullptr) return;
    for (const auto& [key, value] : node_->items()) {
      if (key == "comment" || used_.count(key) != 0) continue;
      error(key, "unknown key");
    }
  }

private:
  const Json* node_;
  std::string path_;
  Diagnostics& diagnostics_;
  std::set<std::string> used_;
};

std::optional<AxisSpec> parse_axis(Section s, double unit) {
  if (!s.present()) return std::nullopt;
  AxisSpec axis;
  axis.start = s.required_number("start") * unit;
  axis.stop = s.required_number("stop") * unit;
  const auto points = s.integer("points");
  const auto step = s.positive("step");
  if (points && step) {
    s.error("step", "give either points or step, not both");
  } else if (points) {
    if (*points < 1) s.error("points", "must be at least 1");
    axis.points = static_cast<int>(*points);
  } else if (step) {
    const double count = std::abs(axis.stop - axis.start) / (*step * unit);
    axis.points = static_cast<int>(std::llround(count)) + 1;
    if (std::abs(count - std::round(count)) > 1e-6) s.error("step", "does not divide the span");
  } else {
    s.error("points", "required (or step)");
  }
  if (axis.points > 1 && axis.start == axis.stop) s.error("stop", "must differ from start");
  s.finish();
  return axis;
}

Lineshape parse_lineshape(Section& s) {
  const std::string name = s.string("lineshape").value_or("gaussian");
  const double q = s.number("q", 1.0);
  if (name == "delta") return Lineshape::delta();
  if (name == "lorentzian") return Lineshape::lorentzian();
  if (name == "gaussian") return Lineshape::gaussian();
  if (name == "q_gaussian") {
    if (q > 2.0) s.error("q", "must not exceed 2");
    return Lineshape::q_gaussian(q);
  }
  s.error("lineshape", "expected delta, lorentzian, gaussian or q_gaussian");
  return Lineshape::gaussian();
}

Channel parse_channel(Section& s, const std::string& key, const std::string& value) {
  if (value == "reflection") return Channel::reflection;
  if (value == "transmission") return Channel::transmission;
  s.error(key, "expected reflection or transmission");
  return Channel::reflection;
}

SystemConfig parse_system(Section& root) {
  SystemConfig sys;

  Section cav = root.child("cavity");
  if (!cav.present()) root.error("cavity", "required");
  sys.cavity.omega_c = hz_to_angular(cav.positive("frequency_hz").value_or(0.0));
  if (!cav.has("frequency_hz")) cav.error("frequency_hz", "required");
  sys.cavity.kappa_c0 = hz_to_angular(cav.non_negative("kappa_c0_hz").value_or(0.0));
  sys.cavity.kappa_c1 = hz_to_angular(cav.non_negative("kappa_c1_hz").value_or(0.0));
  sys.cavity.kappa_c2 = hz_to_angular(cav.non_negative("kappa_c2_hz").value_or(0.0));
  if (const auto q0 = cav.positive("unloaded_q")) {
    if (cav.has("kappa_c0_hz")) cav.error("unloaded_q", "give either unloaded_q or kappa_c0_hz");
    sys.cavity.kappa_c0 = linewidth_from_quality_factor(sys.cavity.omega_c > 0 ? sys.cavity.omega_c : 1.0, *q0);
  }
  cav.finish();

  Section spin = root.child("spin");
  if (!spin.present()) root.error("spin", "required");
  SpinEnsembleParams& s = sys.spin;
  s.n_spins = spin.non_negative("n_spins").value_or(0.0);
  const auto g_eff = spin.non_negative("g_eff_hz");
  const auto g_s = spin.non_negative("g_s_hz");
  if (g_eff && g_s) spin.error("g_s_hz", "give either g_eff_hz or g_s_hz");
  if (g_s) s.g_s = hz_to_angular(*g_s);
  if (g_eff) {
    if (s.n_spins > 0.0) s.g_s = hz_to_angular(*g_eff) / std::sqrt(s.n_spins);
    else if (*g_eff > 0.0) spin.error("g_eff_hz", "needs a positive n_spins");
  }
  const auto kappa_s = spin.positive("kappa_s_hz");
  const auto t2 = spin.positive("t2_s");
  if (kappa_s && t2) spin.error("t2_s", "give either kappa_s_hz or t2_s");
  if (kappa_s) s.kappa_s = hz_to_angular(*kappa_s);
  if (t2) s.kappa_s = 2.0 / *t2;
  if (!kappa_s && !t2) spin.error("kappa_s_hz", "required (or t2_s)");
  s.kappa_s_star = hz_to_angular(spin.non_negative("kappa_s_star_hz").value_or(0.0));
  const auto t1_op = spin.positive("t1_op_s");
  if (t1_op) {
    sys.t1_op = *t1_op;
    s.kappa_op = 1.0 / *t1_op;
  } else {
    spin.error("t1_op_s", "required");
  }
  s.lineshape = parse_lineshape(spin);
  s.zero_field_splitting = hz_to_angular(spin.number("zero_field_splitting_hz", kNvZeroFieldSplittingHz));
  s.gamma_e = hz_to_angular(spin.positive("gamma_e_hz_per_t").value_or(kElectronGyromagneticHzPerTesla));
  s.n_perp = spin.number("n_perp", 1.0);
  if (!(s.n_perp > 0.0 && s.n_perp <= 1.0)) spin.error("n_perp", "must lie in (0, 1]");
  spin.finish();

  Section field = root.child("field");
  sys.field.b_perm = gauss_to_tesla(field.number("b_perm_gauss", 0.0));
  sys.field.b_coil = gauss_to_tesla(field.number("b_coil_gauss", 0.0));
  sys.field.projection = field.number("projection", kProjection100);
  if (!(sys.field.projection > 0.0 && sys.field.projection <= 1.0)) field.error("projection", "must lie in (0, 1]");
  if (const auto range = field.positive("coil_range_gauss")) sys.field.coil_range = gauss_to_tesla(*range);
  field.finish();

  Section drive = root.child("drive");
  sys.drive.power_in = dbm_to_watts(drive.number("power_dbm", -200.0));
  if (!drive.has("power_dbm")) drive.error("power_dbm", "required");
  const auto detuning = drive.number("detuning_hz");
  const auto frequency = drive.positive("frequency_hz");
  if (detuning && frequency) drive.error("frequency_hz", "give either frequency_hz or detuning_hz");
  sys.drive.omega_d = frequency ? hz_to_angular(*frequency) : sys.cavity.omega_c + hz_to_angular(detuning.value_or(0.0));
  if (const Json* mode = drive.raw("photon_number")) {
    if (mode->is_string() && mode->get<std::string>() == "self_consistent") {
      sys.drive.photon_mode = SelfConsistentPhotonNumber{};
    } else if (mode->is_number() && mode->get<double>() >= 0.0) {
      sys.drive.photon_mode = FixedPhotonNumber{mode->get<double>()};
    } else {
      drive.error("photon_number", "expected \"self_consistent\" or a non-negative number");
    }
  }
  drive.finish();
  return sys;
}

SweepConfig parse_sweep(Section s) {
  SweepConfig c;
  const std::string mode = s.string("mode").value_or("map");
  if (mode == "map") c.mode = SweepConfig::Mode::map;
  else if (mode == "field_scan") c.mode = SweepConfig::Mode::field_scan;
  else s.error("mode", "expected map or field_scan");

  if (auto axis = parse_axis(s.child("drive_detuning_hz"), hz_to_angular(1.0))) c.drive_detuning = *axis;
  else if (c.mode == SweepConfig::Mode::map) s.error("drive_detuning_hz", "required for map mode");
  if (auto axis = parse_axis(s.child("field_offset_gauss"), gauss_to_tesla(1.0))) c.field_offset = *axis;
  else s.error("field_offset_gauss", "required");

  c.normalize = s.boolean("normalize").value_or(true);
  c.extract_splitting = s.boolean("extract_splitting").value_or(c.mode == SweepConfig::Mode::map);
  if (auto ch = s.string("splitting_channel")) c.splitting_channel = parse_channel(s, "splitting_channel", *ch);
  if (auto floor = s.non_negative("leakage_floor_w")) c.leakage_floor = *floor;
  if (auto isolation = s.number("circulator_isolation_db")) {
    if (s.has("leakage_floor_w")) s.error("circulator_isolation_db", "give either leakage_floor_w or circulator_isolation_db");
    c.isolation_db = *isolation;
  }
  Section odmr = s.child("odmr");
  if (odmr.present()) {
    c.odmr_contrast = odmr.required_number("contrast");
    if (*c.odmr_contrast < 0.0 || *c.odmr_contrast > 1.0) odmr.error("contrast", "must lie in [0, 1]");
    c.odmr_fwhm = hz_to_angular(odmr.required_number("fwhm_hz"));
    if (!(*c.odmr_fwhm > 0.0)) odmr.error("fwhm_hz", "must be positive");
    odmr.finish();
  }
  s.finish();
  return c;
}

FitConfig parse_fit(Section s, const std::filesystem::path& base) {
  FitConfig c;
  const Json* free = s.raw("free");
  if (free == nullptr || !free->is_array() || free->empty()) {
    s.error("free", "required: non-empty list of parameter names");
  } else {
    for (const auto& name : *free) {
      try {
        c.free.push_back(fit_parameter_from_string(name.get<std::string>()));
      } catch (const std::exception&) {
        s.error("free", "unknown parameter " + name.dump());
      }
    }
  }

  Section initial = s.child("initial_hz");
  Section bounds = s.child("bounds_hz");
  for (FitParameter p : c.free) {
    const std::string key(to_string(p));
    const auto guess = initial.number(key);
    if (!guess) initial.error(key, "required initial value for a free parameter");
    c.initial_guess.push_back(hz_to_angular(guess.value_or(0.0)));
    Bounds b;
    if (const Json* pair = bounds.raw(key)) {
      if (!pair->is_array() || pair->size() != 2 || !(*pair)[0].is_number() || !(*pair)[1].is_number()) {
        bounds.error(key, "expected [lower, upper]");
      } else {
        b = {hz_to_angular((*pair)[0].get<double>()), hz_to_angular((*pair)[1].get<double>())};
      }
    }
    c.bounds.push_back(b);
  }
  initial.finish();
  bounds.finish();

  const Json* channels = s.raw("channels");
  if (channels == nullptr) {
    c.channels = {Channel::reflection, Channel::transmission};
  } else if (!channels->is_array() || channels->empty()) {
    s.error("channels", "expected a non-empty list");
  } else {
    for (const auto& ch : *channels) {
      c.channels.push_back(parse_channel(s, "channels", ch.is_string() ? ch.get<std::string>() : ""));
    }
  }

  Section data = s.child("data");
  if (auto stem = data.string("reflection")) c.reflection_grid = base / *stem;
  if (auto stem = data.string("transmission")) c.transmission_grid = base / *stem;
  if (auto trace = data.string("odmr_trace")) c.odmr_trace = base / *trace;
  data.finish();

  c.synthetic_noise = s.non_negative("synthetic_noise").value_or(0.0);
  c.multistart = s.boolean("multistart").value_or(false);
  if (auto iters = s.integer("max_iterations")) {
    if (*iters < 1) s.error("max_iterations", "must be at least 1");
    c.max_iterations = static_cast<int>(*iters);
  }
  s.finish();
  return c;
}

MagnetometerConfig parse_magnetometer(Section s) {
  MagnetometerConfig c;
  c.chain_gain = s.positive("chain_gain").value_or(1.0);
  if (auto target = s.positive("target_responsivity_v_per_t")) {
    if (s.has("chain_gain")) s.error("target_responsivity_v_per_t", "give either chain_gain or target_responsivity_v_per_t");
    c.target_responsivity = *target;
  }
  c.impedance = s.positive("impedance_ohm").value_or(50.0);
  c.duration = s.positive("duration_s").value_or(c.duration);
  c.sample_rate = s.positive("sample_rate_hz").value_or(c.sample_rate);
  c.noise_floor = s.non_negative("noise_floor_v_per_rthz").value_or(0.0);
  if (auto seg = s.integer("segment_length")) {
    if (*seg < 4) s.error("segment_length", "must be at least 4");
    else c.segment_length = static_cast<std::size_t>(*seg);
  }
  Section band = s.child("band_hz");
  c.band_lo = band.number("lo", c.band_lo);
  c.band_hi = band.number("hi", c.band_hi);
  if (!(c.band_lo < c.band_hi)) band.error("hi", "must exceed lo");
  band.finish();

  Section tone = s.child("test_tone");
  if (tone.present()) {
    Tone t;
    t.frequency = tone.required_number("frequency_hz");
    t.rms = tone.required_number("rms_ut") * 1e-6;
    t.phase = tone.number("phase_rad", 0.0);
    c.waveform.tones.push_back(t);
    tone.finish();
  }
  c.waveform.offset = s.number("field_offset_ut", 0.0) * 1e-6;
  if (c.sample_rate <= 2.0 * c.waveform.highest_frequency()) {
    s.error("sample_rate_hz", "must exceed twice the test-tone frequency");
  }
  s.finish();
  return c;
}

BudgetConfig parse_budget(Section s) {
  BudgetConfig c;
  Section j = s.child("johnson");
  c.johnson = j.present();
  if (j.present()) {
    c.temperature = j.non_negative("temperature_k").value_or(c.temperature);
    c.resistance = j.non_negative("resistance_ohm").value_or(c.resistance);
    c.johnson_gain = j.positive("gain").value_or(1.0);
    j.finish();
  }
  if (auto floor = s.non_negative("electronics_floor_v_per_rthz")) c.electronics_floor = *floor;
  Section shot = s.child("photon_shot");
  c.photon_shot = shot.present();
  if (shot.present()) {
    if (auto dbm = shot.number("reflected_power_dbm")) c.reflected_power = dbm_to_watts(*dbm);
    shot.finish();
  }
  c.spin_projection = s.boolean("spin_projection").value_or(true);
  s.finish();
  return c;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

}  // namespace

ConfigError::ConfigError(std::vector<ConfigDiagnostic> diagnostics)
    : std::runtime_error(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

nlohmann::json ConfigError::report() const {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& d : diagnostics_) fields.push_back({{"path", d.path}, {"message", d.message}});
  return {{"error", "invalid_config"}, {"diagnostics", fields}};
}

std::vector<double> AxisSpec::values() const {
  std::vector<double> v(static_cast<std::size_t>(points));
  if (points == 1) {
    v[0] = start;
    return v;
  }
  for (int k = 0; k < points; ++k) {
    v[static_cast<std::size_t>(k)] = start + (stop - start) * static_cast<double>(k) / (points - 1);
  }
  return v;
}

RunConfig parse_config(const nlohmann::json& document, const std::filesystem::path& base_dir) {
  Diagnostics diagnostics;
  Section root(&document, "", diagnostics);
  RunConfig config;
  config.source = document;
  config.base_dir = base_dir;

  config.system = parse_system(root);
  if (Section s = root.child("simulate"); s.present()) {
    SimulateConfig sim;
    sim.spin_detuning = hz_to_angular(s.number("spin_detuning_hz", 0.0));
    s.finish();
    config.simulate = sim;
  }
  if (Section s = root.child("sweep"); s.present()) config.sweep = parse_sweep(s);
  if (Section s = root.child("fit"); s.present()) config.fit = parse_fit(s, base_dir);
  if (Section s = root.child("magnetometer"); s.present()) config.magnetometer = parse_magnetometer(s);
  if (Section s = root.child("budget"); s.present()) config.budget = parse_budget(s);
  if (auto out = root.string("output_dir")) config.output_dir = *out;
  if (const Json* seed = root.raw("seed")) {
    if (seed->is_number_unsigned() || (seed->is_number_integer() && seed->get<std::int64_t>() >= 0)) {
      config.seed = seed->get<std::uint64_t>();
    } else {
      root.error("seed", "expected a non-negative integer");
    }
  }
  root.finish();

  // Cross-field checks once the pieces parsed.
  if (diagnostics.empty()) {
    auto check = [&](const std::string& path, auto&& validate) {
      try {
        validate();
      } catch (const std::invalid_argument& e) {
        diagnostics.push_back({path, e.what()});
      }
    };
    check("/cavity", [&] { config.system.cavity.validate(); });
    check("/spin", [&] { config.system.spin.validate(); });
    check("/field", [&] { config.system.field.validate(); });
    check("/drive", [&] { config.system.drive.validate(); });
    if (config.system.cavity.kappa_c1 <= 0.0) diagnostics.push_back({"/cavity/kappa_c1_hz", "must be positive"});
    if (config.fit) {
      for (std::size_t k = 0; k < config.fit->free.size(); ++k) {
        const Bounds& b = config.fit->bounds[k];
        const double x = config.fit->initial_guess[k];
        if (!(b.lower <= x && x <= b.upper)) {
          diagnostics.push_back({"/fit/initial_hz/" + std::string(to_string(config.fit->free[k])), "outside bounds"});
        }
      }
      const bool has_grid = config.fit->reflection_grid || config.fit->transmission_grid;
      if (!has_grid && !config.fit->odmr_trace && !config.sweep) {
        diagnostics.push_back({"/fit/data", "no data files given and no sweep block for synthetic data"});
      }
    }
  }
  if (!diagnostics.empty()) throw ConfigError(std::move(diagnostics));
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  nlohmann::json document;
  try {
    document = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("JSON parse error: ") + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError("", e.what());
  }
  return parse_config(document, path.parent_path());
}

Readout make_readout(const SystemConfig& system, const MagnetometerConfig& magnetometer) {
  Readout r;
  r.cavity = system.cavity;
  r.spin = system.spin;
  r.drive = system.drive;
  r.field = system.field;
  r.chain_gain = magnetometer.chain_gain;
  r.impedance = magnetometer.impedance;
  if (magnetometer.target_responsivity) {
    r.chain_gain = 1.0;
    const double unit = std::abs(responsivity(r, calibrate_lo_phase(r)));
    if (!(unit > 0.0)) throw std::invalid_argument("target responsivity: model responsivity is zero");
    r.chain_gain = *magnetometer.target_responsivity / unit;
  }
  return r;
}

std::uint64_t config_hash(const nlohmann::json& document) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : document.dump()) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

double operating_coil_field(const SystemConfig& system) {
  return coil_field_for(system.field, system.spin, system.cavity.omega_c);
}

std::vector<double> spin_axis(const SystemConfig& system, const std::vector<double>& field_offsets) {
  std::vector<double> axis;
  FieldConfig f = system.field;
  const double bias = operating_coil_field(system);
  for (double b : field_offsets) {
    f.b_coil = bias + b;
    axis.push_back(field_to_spin_frequency(f, system.spin));
  }
  return axis;
}

std::vector<double> drive_axis(const SystemConfig& system, const SweepConfig& sweep) {
  std::vector<double> axis;
  for (double d : sweep.drive_detuning.values()) axis.push_back(system.cavity.omega_c + d);
  return axis;
}

}  // namespace cavspin
