#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "cavspin/io.hpp"

namespace cavspin {
namespace {

const std::vector<std::string> kGridColumns = {"drive_Hz", "spin_Hz", "re_gamma", "im_gamma",
                                               "re_t",     "im_t",    "n_cav"};

std::vector<double> first_appearance(const std::vector<std::vector<double>>& rows, std::size_t column) {
  std::vector<double> axis;
  for (const auto& row : rows) {
    const double v = row[column];
    bool seen = false;
    for (double a : axis) {
      if (a == v) {
        seen = true;
        break;
      }
    }
    if (!seen) axis.push_back(v);
  }
  return axis;
}

bool same_within_ulps(double a, double b) {
  return std::abs(a - b) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
}

}  // namespace

void write_grid_csv(std::ostream& out, const SweepGrid& grid) {
  grid.validate();
  CsvTable table;
  table.header = kGridColumns;
  table.rows.reserve(grid.cells.size());
  for (std::size_t i = 0; i < grid.drive_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.spin_axis.size(); ++j) {
      const ComplexResponse& c = grid.at(i, j);
      table.rows.push_back({angular_to_hz(grid.drive_axis[i]), angular_to_hz(grid.spin_axis[j]), c.gamma.real(),
                            c.gamma.imag(), c.t.real(), c.t.imag(), c.n_cav});
    }
  }
  write_csv(out, table);
}

SweepGrid read_grid_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  if (table.header != kGridColumns) throw std::runtime_error("grid CSV: unexpected header");
  if (table.rows.empty()) throw std::runtime_error("grid CSV: no cells");

  const std::vector<double> drive_hz = first_appearance(table.rows, 0);
  const std::vector<double> spin_hz = first_appearance(table.rows, 1);
  if (drive_hz.size() * spin_hz.size() != table.rows.size()) {
    throw std::runtime_error("grid CSV: cells do not form a rectangular grid");
  }

  SweepGrid grid;
  for (double f : drive_hz) grid.drive_axis.push_back(hz_to_angular(f));
  for (double f : spin_hz) grid.spin_axis.push_back(hz_to_angular(f));
  grid.cells.reserve(table.rows.size());
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    if (row[0] != drive_hz[k / spin_hz.size()] || row[1] != spin_hz[k % spin_hz.size()]) {
      throw std::runtime_error("grid CSV: rows are not in drive-major order (row " + std::to_string(k) + ")");
    }
    ComplexResponse c;
    c.gamma = {row[2], row[3]};
    c.t = {row[4], row[5]};
    c.n_cav = row[6];
    grid.cells.push_back(c);
  }
  grid.validate();
  return grid;
}

nlohmann::json grid_envelope(const SweepGrid& grid, std::string_view csv_name) {
  return {
      {"format", "cavspin-grid"},
      {"version", 1},
      {"csv", std::string(csv_name)},
      {"shape", {grid.drive_axis.size(), grid.spin_axis.size()}},
      {"drive_axis_rad_s", grid.drive_axis},
      {"spin_axis_rad_s", grid.spin_axis},
      {"normalization",
       {{"applied", grid.normalized},
        {"reflection_scale", grid.reflection_scale},
        {"transmission_scale", grid.transmission_scale}}},
      {"parameters", grid.metadata},
  };
}

void save_grid(const SweepGrid& grid, const std::filesystem::path& stem) {
  const std::filesystem::path csv_path = std::filesystem::path(stem).concat(".csv");
  const std::filesystem::path json_path = std::filesystem::path(stem).concat(".json");
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    write_grid_csv(out, grid);
  }
  write_text_file(json_path, grid_envelope(grid, csv_path.filename().string()).dump(2) + "\n");
}

SweepGrid load_grid(const std::filesystem::path& stem) {
  const std::filesystem::path json_path = std::filesystem::path(stem).concat(".json");
  const nlohmann::json envelope = nlohmann::json::parse(read_text_file(json_path));
  if (envelope.value("format", "") != "cavspin-grid") throw std::runtime_error("not a grid envelope: " + json_path.string());

  const std::filesystem::path csv_path = json_path.parent_path() / envelope.at("csv").get<std::string>();
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + csv_path.string());
  SweepGrid grid = read_grid_csv(in);

  // The envelope carries the exact angular axes; Hz columns must agree.
  const auto drive = envelope.at("drive_axis_rad_s").get<std::vector<double>>();
  const auto spin = envelope.at("spin_axis_rad_s").get<std::vector<double>>();
  if (drive.size() != grid.drive_axis.size() || spin.size() != grid.spin_axis.size()) {
    throw std::runtime_error("grid envelope and CSV disagree on shape");
  }
  for (std::size_t k = 0; k < drive.size(); ++k) {
    if (!same_within_ulps(drive[k], grid.drive_axis[k])) throw std::runtime_error("grid envelope: drive axis mismatch");
  }
  for (std::size_t k = 0; k < spin.size(); ++k) {
    if (!same_within_ulps(spin[k], grid.spin_axis[k])) throw std::runtime_error("grid envelope: spin axis mismatch");
  }
  grid.drive_axis = drive;
  grid.spin_axis = spin;

  const auto& norm = envelope.at("normalization");
  grid.normalized = norm.at("applied").get<bool>();
  grid.reflection_scale = norm.at("reflection_scale").get<double>();
  grid.transmission_scale = norm.at("transmission_scale").get<double>();
  grid.metadata = envelope.at("parameters");
  grid.validate();
  return grid;
}

}  // namespace cavspin
