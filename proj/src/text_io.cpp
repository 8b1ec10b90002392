#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cavspin/io.hpp"

namespace cavspin {
namespace {

std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    parts.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void expect_header(const CsvTable& table, const std::vector<std::string>& expected, std::string_view what) {
  if (table.header != expected) {
    throw std::runtime_error(std::string(what) + ": unexpected CSV header");
  }
}

}  // namespace

std::string format_number(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, result.ptr);
}

double parse_number(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw std::runtime_error("not a number: '" + std::string(text) + "'");
  }
  return value;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  if (!table.metadata.empty()) out << "# " << table.metadata.dump() << '\n';
  for (std::size_t k = 0; k < table.header.size(); ++k) {
    out << (k ? "," : "") << table.header[k];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      out << (k ? "," : "") << format_number(row[k]);
    }
    out << '\n';
  }
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      view.remove_prefix(1);
      view = trim(view);
      if (!view.empty() && view.front() == '{') table.metadata.update(nlohmann::json::parse(view));
      continue;
    }
    const auto fields = split(view, ',');
    if (!have_header) {
      for (auto f : fields) table.header.emplace_back(trim(f));
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw std::runtime_error("CSV line " + std::to_string(line_number) + ": expected " +
                               std::to_string(table.header.size()) + " fields");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_number(f));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw std::runtime_error("CSV: missing header");
  return table;
}

void write_trace_csv(std::ostream& out, const ResonanceTrace& trace) {
  trace.validate();
  CsvTable table;
  table.metadata = {{"kind", std::string(to_string(trace.kind))}};
  table.header = {"axis", "value"};
  for (std::size_t k = 0; k < trace.axis.size(); ++k) table.rows.push_back({trace.axis[k], trace.values[k]});
  write_csv(out, table);
}

ResonanceTrace read_trace_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  expect_header(table, {"axis", "value"}, "trace");
  ResonanceTrace trace;
  trace.kind = trace_kind_from_string(table.metadata.value("kind", "reflected_power"));
  for (const auto& row : table.rows) {
    trace.axis.push_back(row[0]);
    trace.values.push_back(row[1]);
  }
  trace.validate();
  return trace;
}

void write_timeseries_csv(std::ostream& out, const TimeSeries& series) {
  CsvTable table;
  table.metadata = {{"sample_rate_hz", series.sample_rate}, {"seed", series.seed}};
  table.header = {"t_s", "volts"};
  table.rows.reserve(series.volts.size());
  for (std::size_t k = 0; k < series.volts.size(); ++k) table.rows.push_back({series.time(k), series.volts[k]});
  write_csv(out, table);
}

TimeSeries read_timeseries_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  expect_header(table, {"t_s", "volts"}, "time series");
  TimeSeries series;
  series.sample_rate = table.metadata.at("sample_rate_hz").get<double>();
  series.seed = table.metadata.at("seed").get<std::uint64_t>();
  series.volts.reserve(table.rows.size());
  for (const auto& row : table.rows) series.volts.push_back(row[1]);
  return series;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum) {
  CsvTable table;
  table.metadata = {{"resolution_hz", spectrum.resolution}, {"enbw_hz", spectrum.enbw}, {"segments", spectrum.segments}};
  table.header = {"freq_Hz", "v_per_rtHz"};
  for (std::size_t k = 0; k < spectrum.frequency.size(); ++k) {
    table.rows.push_back({spectrum.frequency[k], spectrum.asd[k]});
  }
  write_csv(out, table);
}

Spectrum read_spectrum_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  expect_header(table, {"freq_Hz", "v_per_rtHz"}, "spectrum");
  Spectrum s;
  s.resolution = table.metadata.at("resolution_hz").get<double>();
  s.enbw = table.metadata.at("enbw_hz").get<double>();
  s.segments = table.metadata.at("segments").get<int>();
  for (const auto& row : table.rows) {
    s.frequency.push_back(row[0]);
    s.asd.push_back(row[1]);
  }
  return s;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cavspin
