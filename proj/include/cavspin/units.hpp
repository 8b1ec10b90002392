#pragma once

#include <cmath>
#include <numbers>

namespace cavspin {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA 2018
inline constexpr double kHbar = 1.054571817e-34;         // J s
inline constexpr double kMu0 = 1.25663706212e-6;         // N / A^2
inline constexpr double kBoltzmann = 1.380649e-23;       // J / K

// NV- defaults
inline constexpr double kNvZeroFieldSplittingHz = 2.87e9;
inline constexpr double kElectronGyromagneticHzPerTesla = 28.024e9;
inline constexpr double kProjection100 = 0.57735026918962576;  // 1/sqrt(3)

inline constexpr double kGaussPerTesla = 1.0e4;

constexpr double hz_to_angular(double hz) { return kTwoPi * hz; }
constexpr double angular_to_hz(double omega) { return omega / kTwoPi; }

constexpr double gauss_to_tesla(double gauss) { return gauss / kGaussPerTesla; }
constexpr double tesla_to_gauss(double tesla) { return tesla * kGaussPerTesla; }

inline double dbm_to_watts(double dbm) { return 1.0e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1.0e-3); }

}  // namespace cavspin
