#include "egqn/harness/plots.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "egqn/harness/train.hpp"
#include "egqn/model/config.hpp"

namespace egqn::harness {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

MetricsTable parse_metrics_csv(std::istream& in, const std::string& source) {
  MetricsTable t;
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      for (auto& f : fields) {
        f = trim(f);
        if (f.empty()) throw CsvParseError(source, number, "empty column name");
      }
      t.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw CsvParseError(source, number,
                          "expected " + std::to_string(t.columns.size()) + " fields, found " +
                              std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string f = trim(fields[i]);
      double v = 0.0;
      const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || end != f.data() + f.size()) {
        throw CsvParseError(source, number, "column '" + t.columns[i] + "' is not a number: '" + f + "'");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) t.columns = split(kMetricsHeader);
  return t;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_metrics_csv(in, path.string());
}

bool has_floor_rule(const std::string& metric) { return metric == "loss" || metric == "recon" || metric == "elbo"; }

Chart make_chart(const MetricsTable& table, std::size_t column, std::optional<double> floor) {
  if (column == 0 || column >= table.columns.size()) throw std::out_of_range("chart column out of range");
  Chart c;
  c.metric = table.columns[column];
  c.floor = floor;
  for (const auto& row : table.rows) {
    c.steps.push_back(row[0]);
    c.values.push_back(row[column]);
  }
  if (!c.steps.empty()) {
    const auto [lo, hi] = std::minmax_element(c.steps.begin(), c.steps.end());
    c.x_min = *lo;
    c.x_max = *hi;
  }
  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -y_lo;
  for (double v : c.values) {
    if (!std::isfinite(v)) continue;
    y_lo = std::min(y_lo, v);
    y_hi = std::max(y_hi, v);
  }
  if (floor) {
    y_lo = std::min(y_lo, *floor);
    y_hi = std::max(y_hi, *floor);
  }
  if (!std::isfinite(y_lo)) y_lo = y_hi = 0.0;
  c.y_min = y_lo;
  c.y_max = y_hi;
  return c;
}

std::string Chart::svg() const {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 30, kBottom = 50;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  // Degenerate ranges are drawn around their single value.
  const double x_span = x_max > x_min ? x_max - x_min : 1.0;
  const double x0 = x_max > x_min ? x_min : x_min - 0.5;
  double y_span = y_max - y_min;
  double y0 = y_min;
  if (!(y_span > 0.0)) {
    y_span = std::max(1e-3, std::abs(y_min) * 0.1);
    y0 = y_min - y_span / 2;
  }
  auto sx = [&](double x) { return kLeft + (x - x0) / x_span * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / y_span) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << ' ' << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << metric << "</text>\n";
  s << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph << "\"/>\n"
    << "</g>\n";
  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<text id=\"x-min\" x=\"" << kLeft << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"start\">" << fmt(x_min)
    << "</text>\n"
    << "<text id=\"x-max\" x=\"" << kLeft + pw << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"end\">"
    << fmt(x_max) << "</text>\n"
    << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">step</text>\n"
    << "<text id=\"y-min\" x=\"" << kLeft - 6 << "\" y=\"" << kTop + ph << "\" text-anchor=\"end\">" << fmt(y_min)
    << "</text>\n"
    << "<text id=\"y-max\" x=\"" << kLeft - 6 << "\" y=\"" << kTop + 10 << "\" text-anchor=\"end\">" << fmt(y_max)
    << "</text>\n"
    << "</g>\n";
  if (floor) {
    const double y = sy(*floor);
    s << "<line id=\"floor\" x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kLeft + pw << "\" y2=\"" << y
      << "\" stroke=\"gray\" stroke-dasharray=\"6 4\" data-value=\"" << fmt(*floor) << "\"/>\n";
  }
  if (!steps.empty()) {
    s << "<polyline id=\"series\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (!std::isfinite(values[i])) continue;
      s << sx(steps[i]) << ',' << sy(values[i]) << ' ';
    }
    s << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> export_plots(const std::filesystem::path& metrics_csv,
                                                const std::filesystem::path& out_dir, double output_std) {
  const auto table = read_metrics_csv(metrics_csv);
  std::filesystem::create_directories(out_dir);
  const double floor = model::elbo_floor(output_std);
  std::vector<std::filesystem::path> written;
  std::ofstream summary(out_dir / "summary.csv", std::ios::trunc);
  if (!summary) throw std::runtime_error("cannot write " + (out_dir / "summary.csv").string());
  summary << "metric,count,first,last,min,max\n";
  for (std::size_t col = 1; col < table.columns.size(); ++col) {
    const auto& name = table.columns[col];
    const Chart chart = make_chart(table, col, has_floor_rule(name) ? std::optional<double>(floor) : std::nullopt);
    const auto path = out_dir / (name + ".svg");
    std::ofstream(path, std::ios::trunc) << chart.svg();
    written.push_back(path);
    summary << name << ',' << chart.values.size();
    if (chart.values.empty()) {
      summary << ",,,,\n";
      continue;
    }
    const auto [lo, hi] = std::minmax_element(chart.values.begin(), chart.values.end());
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%.9g,%.9g\n", chart.values.front(), chart.values.back(), *lo, *hi);
    summary << buf;
  }
  written.push_back(out_dir / "summary.csv");
  return written;
}

}  // namespace egqn::harness
