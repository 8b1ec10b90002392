#pragma once

// CSV and JSON file formats. Every number is written with 17 significant
// digits so a write/read cycle reproduces the in-memory doubles exactly.
// CSV files may open with `# {json}` metadata lines, which readers parse.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspin/magnetometer.hpp"
#include "cavspin/sweep.hpp"

namespace cavspin {

std::string format_number(double value);
double parse_number(std::string_view text);

struct CsvTable {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(std::ostream& out, const CsvTable& table);
CsvTable read_csv(std::istream& in);

/// Columns drive_Hz, spin_Hz, re_gamma, im_gamma, re_t, im_t, n_cav; one row
/// per cell in row-major (drive outer) order.
void write_grid_csv(std::ostream& out, const SweepGrid& grid);
/// Axes are rebuilt from the first appearance of each coordinate. Metadata
/// and normalization are left at their defaults.
SweepGrid read_grid_csv(std::istream& in);

/// JSON envelope: parameter snapshot, normalization and the CSV file name.
nlohmann::json grid_envelope(const SweepGrid& grid, std::string_view csv_name);

/// Writes <stem>.csv and <stem>.json.
void save_grid(const SweepGrid& grid, const std::filesystem::path& stem);
SweepGrid load_grid(const std::filesystem::path& stem);

/// Columns axis, value; the trace kind is carried in the metadata line.
void write_trace_csv(std::ostream& out, const ResonanceTrace& trace);
ResonanceTrace read_trace_csv(std::istream& in);

/// Columns t_s, volts; sample rate and seed in the metadata line.
void write_timeseries_csv(std::ostream& out, const TimeSeries& series);
TimeSeries read_timeseries_csv(std::istream& in);

/// Columns freq_Hz, v_per_rtHz.
void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum);
Spectrum read_spectrum_csv(std::istream& in);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cavspin
