#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cavspin/errors.hpp"
#include "cavspin/sweep.hpp"
#include "fixtures.hpp"

using namespace cavspin;
using namespace cavspin::testing;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int k = 0; k < n; ++k) v[k] = n == 1 ? a : a + (b - a) * k / (n - 1);
  return v;
}

DriveParams low_power(double omega_d) { return {omega_d, 1e-15, FixedPhotonNumber{0.0}}; }

double strong_splitting(double n_scale, double step_hz = 10 * kKHz) {
  const CavityParams cav = fitted_cavity();
  SpinEnsembleParams spin = strong_coupling_spin();
  spin.n_spins *= n_scale;
  const int half = static_cast<int>(std::lround(3 * kMHz / step_hz));
  const auto drive_axis = linspace(cav.omega_c - rad(3 * kMHz), cav.omega_c + rad(3 * kMHz), 2 * half + 1);
  const auto spin_axis = linspace(cav.omega_c - rad(0.2 * kMHz), cav.omega_c + rad(0.2 * kMHz), 5);
  const SweepGrid grid = sweep_2d(cav, spin, low_power(cav.omega_c), drive_axis, spin_axis);
  return avoided_crossing_splitting(grid);
}

ResonanceTrace lorentzian_trace(double fwhm, double center, int points, double span) {
  return odmr_scan(1.0, fwhm, center, linspace(center - span, center + span, points));
}

}  // namespace

TEST_CASE("1x1 grid equals direct coefficient calls") {
  const CavityParams cav = fitted_cavity();
  const SpinEnsembleParams spin = fitted_spin();
  const double wd = cav.omega_c + rad(120 * kKHz);
  const double ws = cav.omega_c - rad(300 * kKHz);
  const DriveParams drive{wd, 1e-6, FixedPhotonNumber{3.0}};
  const SweepGrid grid = sweep_2d(cav, spin, drive, std::vector{wd}, std::vector{ws});
  REQUIRE(grid.cells.size() == 1);
  CHECK(grid.at(0, 0).gamma == reflection_coefficient(cav, spin, wd, ws, 3.0));
  CHECK(grid.at(0, 0).t == transmission_coefficient(cav, spin, wd, ws, 3.0));
  CHECK(grid.at(0, 0).n_cav == 3.0);
}

TEST_CASE("grid is independent of evaluation order and deterministic") {
  const CavityParams cav = readout_cavity();
  const SpinEnsembleParams spin = readout_spin();
  const DriveParams drive = readout_drive();
  const auto da = linspace(cav.omega_c - rad(400 * kKHz), cav.omega_c + rad(400 * kKHz), 7);
  const auto sa = linspace(cav.omega_c - rad(10 * kMHz), cav.omega_c + rad(10 * kMHz), 9);
  const SweepGrid a = sweep_2d(cav, spin, drive, da, sa, EvaluationOrder::row_major);
  const SweepGrid b = sweep_2d(cav, spin, drive, da, sa, EvaluationOrder::column_major);
  const SweepGrid c = sweep_2d(cav, spin, drive, da, sa, EvaluationOrder::row_major);
  CHECK(a == b);
  CHECK(a == c);
  // Each cell matches an isolated evaluation.
  CHECK(a.at(3, 4) == evaluate_response(cav, spin, drive, sa[4]));
}

TEST_CASE("sweep rejects empty or non-monotonic axes") {
  const CavityParams cav = fitted_cavity();
  const SpinEnsembleParams spin = fitted_spin();
  const DriveParams drive = low_power(cav.omega_c);
  CHECK_THROWS_AS(sweep_2d(cav, spin, drive, std::vector<double>{}, std::vector{cav.omega_c}), std::invalid_argument);
  CHECK_THROWS_AS(sweep_2d(cav, spin, drive, std::vector{2.0, 1.0, 3.0}, std::vector{cav.omega_c}),
                  std::invalid_argument);
}

TEST_CASE("normalize_unity") {
  const CavityParams cav = fitted_cavity();
  const SpinEnsembleParams spin = fitted_spin();
  const auto da = linspace(cav.omega_c - rad(800 * kKHz), cav.omega_c + rad(800 * kKHz), 41);
  const auto sa = linspace(cav.omega_c - rad(8 * kMHz), cav.omega_c + rad(8 * kMHz), 11);
  const SweepGrid raw = sweep_2d(cav, spin, low_power(cav.omega_c), da, sa);

  double max_r = 0.0, max_t = 0.0;
  for (const auto& cell : raw.cells) {
    max_r = std::max(max_r, cell.reflected_fraction());
    max_t = std::max(max_t, cell.transmitted_fraction());
  }
  const SweepGrid norm = normalize_unity(raw);
  CHECK(norm.normalized);
  CHECK(norm.reflection_scale == max_r);
  CHECK(norm.transmission_scale == max_t);

  double peak_r = 0.0, peak_t = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    for (std::size_t j = 0; j < sa.size(); ++j) {
      peak_r = std::max(peak_r, norm.power(Channel::reflection, i, j));
      peak_t = std::max(peak_t, norm.power(Channel::transmission, i, j));
    }
  }
  CHECK(peak_r == 1.0);
  CHECK(peak_t == 1.0);
  CHECK(normalize_unity(norm) == norm);

  SUBCASE("single-port cavity keeps unit transmission scale") {
    const CavityParams one_port = readout_cavity();
    const SweepGrid g = normalize_unity(sweep_2d(one_port, spin, low_power(one_port.omega_c), da, sa));
    CHECK(g.transmission_scale == 1.0);
  }
  SUBCASE("all-zero grid is rejected") {
    SweepGrid zero = raw;
    for (auto& cell : zero.cells) cell = ComplexResponse{};
    CHECK_THROWS_AS(normalize_unity(zero), std::invalid_argument);
  }
}

TEST_CASE("interpolated peaks") {
  SUBCASE("parabola vertex is exact") {
    const auto x = linspace(0.0, 10.0, 11);
    std::vector<double> y;
    for (double v : x) y.push_back(-(v - 4.3) * (v - 4.3));
    const auto p = interpolated_peaks(x, y);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == doctest::Approx(4.3).epsilon(1e-12));
  }
  SUBCASE("equal heights resolve lower position first") {
    const std::vector<double> x{0, 1, 2, 3, 4, 5, 6};
    const std::vector<double> y{0, 1, 0, 0, 0, 1, 0};
    const auto p = interpolated_peaks(x, y);
    REQUIRE(p.size() == 2);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 5.0);
  }
}

TEST_CASE("splitting without coupling is unresolved") {
  const CavityParams cav = fitted_cavity();
  SpinEnsembleParams spin = strong_coupling_spin();
  spin.g_s = 0.0;
  const auto da = linspace(cav.omega_c - rad(2 * kMHz), cav.omega_c + rad(2 * kMHz), 201);
  const auto sa = linspace(cav.omega_c - rad(1 * kMHz), cav.omega_c + rad(1 * kMHz), 5);
  const SweepGrid grid = sweep_2d(cav, spin, low_power(cav.omega_c), da, sa);
  CHECK_THROWS_AS(avoided_crossing_splitting(grid), UnresolvedSplitting);
}

TEST_CASE("strong coupling splitting is close to 2 g_eff and grows with sqrt(N)") {
  const double g_eff = strong_coupling_spin().g_eff();
  const double s1 = strong_splitting(1.0);
  CHECK(s1 == doctest::Approx(2.0 * g_eff).epsilon(0.05));

  double previous = 0.0;
  for (double scale : {0.3, 0.5, 1.0, 2.0, 3.0}) {
    const double s = strong_splitting(scale);
    CHECK(s > previous);
    previous = s;
  }
}

TEST_CASE("reflection branches give the same splitting as transmission") {
  const CavityParams cav = fitted_cavity();
  const SpinEnsembleParams spin = strong_coupling_spin();
  const auto da = linspace(cav.omega_c - rad(3 * kMHz), cav.omega_c + rad(3 * kMHz), 601);
  const SweepGrid grid = sweep_2d(cav, spin, low_power(cav.omega_c), da, std::vector{cav.omega_c});
  CHECK(avoided_crossing_splitting(grid, Channel::reflection) ==
        doctest::Approx(avoided_crossing_splitting(grid, Channel::transmission)).epsilon(0.01));
}

TEST_CASE("splitting converges under grid refinement") {
  // 10 kHz is below kappa_c / 10 for this cavity.
  const double coarse = strong_splitting(1.0, 10 * kKHz);
  const double fine = strong_splitting(1.0, 5 * kKHz);
  CHECK(std::abs(coarse - fine) / fine < 0.01);
}

TEST_CASE("odmr_scan") {
  const auto axis = linspace(-rad(400 * kMHz), rad(400 * kMHz), 8001);
  SUBCASE("zero contrast is flat at 1") {
    const ResonanceTrace t = odmr_scan(0.0, rad(8.5 * kMHz), 0.0, axis);
    for (double v : t.values) CHECK(v == 1.0);
    CHECK(contrast(t) == 0.0);
  }
  SUBCASE("minimum is 1 - C at the center") {
    const ResonanceTrace t = odmr_scan(0.05, rad(8.5 * kMHz), 0.0, axis);
    CHECK(t.values[4000] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(*std::min_element(t.values.begin(), t.values.end()) == t.values[4000]);
    CHECK(t.kind == TraceKind::odmr_fluorescence);
    CHECK(extract_fwhm(t) == doctest::Approx(rad(8.5 * kMHz)).epsilon(1e-3));
  }
  SUBCASE("parameter checks") {
    CHECK_THROWS_AS(odmr_scan(1.5, 1.0, 0.0, axis), std::invalid_argument);
    CHECK_THROWS_AS(odmr_scan(0.5, 0.0, 0.0, axis), std::invalid_argument);
  }
}

TEST_CASE("extract_fwhm") {
  const double w = rad(4 * kMHz);
  // The half level sits between the trace extremes, so the wings must reach
  // the baseline for the width to match the analytic FWHM.
  SUBCASE("dense Lorentzian within 0.1%") {
    CHECK(extract_fwhm(lorentzian_trace(w, 0.0, 10001, 50 * w)) == doctest::Approx(w).epsilon(1e-3));
  }
  SUBCASE("peak polarity") {
    ResonanceTrace t = lorentzian_trace(w, 0.0, 10001, 50 * w);
    for (double& v : t.values) v = 2.0 - v;
    CHECK(extract_fwhm(t, Polarity::peak) == doctest::Approx(w).epsilon(1e-3));
  }
  SUBCASE("invariant under vertical scaling") {
    const ResonanceTrace t = lorentzian_trace(w, rad(1 * kMHz), 801, 5 * w);
    ResonanceTrace scaled = t;
    for (double& v : scaled.values) v *= 37.5;
    CHECK(extract_fwhm(scaled) == doctest::Approx(extract_fwhm(t)).epsilon(1e-12));
  }
  SUBCASE("refinement below width/10 changes the result by less than 1%") {
    const double coarse = extract_fwhm(lorentzian_trace(w, 0.0, 101, 5 * w));  // step w/10
    const double fine = extract_fwhm(lorentzian_trace(w, 0.0, 201, 5 * w));
    CHECK(std::abs(coarse - fine) / fine < 0.01);
  }
  SUBCASE("extremum on the boundary") {
    const ResonanceTrace t = odmr_scan(0.5, w, 0.0, linspace(0.0, 5 * w, 200));
    CHECK_THROWS_AS(extract_fwhm(t), FeatureError);
  }
  SUBCASE("missing crossing") {
    const ResonanceTrace t = odmr_scan(0.5, w, 0.0, linspace(-0.2 * w, 5 * w, 200));
    CHECK_THROWS_AS(extract_fwhm(t), FeatureError);
  }
}

TEST_CASE("contrast") {
  ResonanceTrace t;
  t.axis = {0, 1, 2, 3};
  t.values = {2.0, 0.0, 1.0, 2.0};
  CHECK(contrast(t) == 1.0);
  t.values = {3.0, 3.0, 3.0, 3.0};
  CHECK(contrast(t) == 0.0);
  t.values = {0.0, -1.0, 0.0, 0.0};
  CHECK_THROWS_AS(contrast(t), std::invalid_argument);
}

TEST_CASE("trace kind names round trip") {
  for (TraceKind k : {TraceKind::reflected_power, TraceKind::transmitted_power, TraceKind::odmr_fluorescence,
                      TraceKind::iq_quadrature}) {
    CHECK(trace_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(trace_kind_from_string("absorbance"), std::invalid_argument);
}

TEST_CASE("magnetic resonance scan") {
  const CavityParams cav = readout_cavity();
  FieldConfig field;
  const double slope = spin_frequency_slope(field, readout_spin());

  SUBCASE("even about the degeneracy field for a delta line at fixed photon number") {
    SpinEnsembleParams spin = fitted_spin();
    const DriveParams drive{cav.omega_c, 1e-3, FixedPhotonNumber{1e3}};
    const double b0 = coil_field_for(field, spin, cav.omega_c);
    std::vector<double> axis;
    for (int k = -50; k <= 50; ++k) axis.push_back(b0 + k * 2e-5);
    const ResonanceTrace t = magnetic_resonance_scan(cav, spin, drive, field, axis);
    for (int k = 0; k <= 50; ++k) {
      CHECK(t.values[50 + k] == doctest::Approx(t.values[50 - k]).epsilon(1e-6).scale(t.values[0]));
    }
  }

  SUBCASE("extremum at the center under readout conditions") {
    const SpinEnsembleParams spin = readout_spin();
    const double b0 = coil_field_for(field, spin, cav.omega_c);
    std::vector<double> axis;
    for (int k = -40; k <= 40; ++k) axis.push_back(b0 + k * 2.5e-5);
    const ResonanceTrace t = magnetic_resonance_scan(cav, spin, readout_drive(), field, axis);
    const auto lowest = std::min_element(t.values.begin(), t.values.end());
    CHECK(lowest - t.values.begin() == 40);
  }

  SUBCASE("weak unsaturated coupling recovers the spin linewidth") {
    // Lorentzian line, xi << 1, no saturation: |Gamma|^2 ~ |chi|^2 has FWHM
    // kappa_s* + kappa_s.
    SpinEnsembleParams spin = readout_spin();
    spin.lineshape = Lineshape::lorentzian();
    spin.n_spins *= 1e-4;
    REQUIRE(cooperativity(spin.g_eff(), spin.kappa_s, cav.kappa_c()) < 0.1);
    const double b0 = coil_field_for(field, spin, cav.omega_c);
    std::vector<double> axis;
    for (int k = -1000; k <= 1000; ++k) axis.push_back(b0 + k * 2.5e-6);
    const ResonanceTrace t = magnetic_resonance_scan(cav, spin, low_power(cav.omega_c), field, axis);
    const double w = extract_fwhm(t, Polarity::peak) * slope;
    CHECK(w == doctest::Approx(spin.kappa_s_star + spin.kappa_s).epsilon(0.02));
  }

  SUBCASE("leakage floor is additive") {
    const SpinEnsembleParams spin = readout_spin();
    const double b0 = coil_field_for(field, spin, cav.omega_c);
    const std::vector<double> axis{b0 - 1e-3, b0, b0 + 1e-3};
    const ResonanceTrace bare = magnetic_resonance_scan(cav, spin, readout_drive(), field, axis);
    const ResonanceTrace leaky = magnetic_resonance_scan(cav, spin, readout_drive(), field, axis, 1e-6);
    for (std::size_t k = 0; k < axis.size(); ++k) CHECK(leaky.values[k] == doctest::Approx(bare.values[k] + 1e-6));
    CHECK_THROWS_AS(magnetic_resonance_scan(cav, spin, readout_drive(), field, axis, -1.0), std::invalid_argument);
  }
}
