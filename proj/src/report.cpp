#include "cegan/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "cegan/error.hpp"

namespace cegan {
namespace {

const std::set<std::string> kNonLossKeys = {"part", "epoch", "step", "lr", "gamma", "updated", "event"};

std::vector<std::string> metric_keys(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> keys;
  for (const auto& row : rows) {
    for (const auto& [k, _] : row.metrics.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  return keys;
}

std::string cell(const nlohmann::json& metrics, const std::string& key) {
  if (!metrics.contains(key) || metrics[key].is_null()) return "n/a";
  const auto& v = metrics[key];
  if (v.is_number_float()) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v.get<double>();
    return s.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string svg_plot(const std::string& title, const std::vector<std::pair<double, double>>& pts) {
  constexpr double kW = 640, kH = 360, kPad = 48;
  double xmin = pts.front().first, xmax = xmin, ymin = pts.front().second, ymax = ymin;
  for (const auto& [x, y] : pts) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return kPad + (x - xmin) / (xmax - xmin) * (kW - 2 * kPad); };
  auto sy = [&](double y) { return kH - kPad - (y - ymin) / (ymax - ymin) * (kH - 2 * kPad); };
  std::ostringstream s;
  s << std::setprecision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">" << title
    << "</text>\n"
    << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"4\" y=\"" << kPad << "\" font-size=\"10\" font-family=\"sans-serif\">" << ymax << "</text>\n"
    << "<text x=\"4\" y=\"" << kH - kPad << "\" font-size=\"10\" font-family=\"sans-serif\">" << ymin
    << "</text>\n"
    << "<text x=\"" << kW - kPad << "\" y=\"" << kH - kPad + 16
    << "\" font-size=\"10\" text-anchor=\"end\" font-family=\"sans-serif\">step " << xmax << "</text>\n"
    << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
  for (const auto& [x, y] : pts) s << sx(x) << ',' << sy(y) << ' ';
  s << "\"/>\n</svg>\n";
  return s.str();
}

}  // namespace

std::vector<nlohmann::json> read_loss_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open loss log " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": invalid JSON");
    }
  }
  const bool any_step = std::any_of(out.begin(), out.end(), [](const auto& r) { return !r.contains("event"); });
  if (!any_step) throw DataError("loss log " + path.string() + " has no step records");
  return out;
}

std::vector<std::filesystem::path> write_loss_curves(const std::vector<nlohmann::json>& records,
                                                     const std::filesystem::path& out_dir) {
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& r : records) {
    if (r.contains("event") || !r.contains("step")) continue;
    const double step = r["step"].get<double>();
    for (const auto& [k, v] : r.items()) {
      if (kNonLossKeys.count(k) || !v.is_number()) continue;
      series[k].emplace_back(step, v.get<double>());
    }
  }
  if (series.empty()) throw DataError("loss log has no numeric loss values");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, pts] : series) {
    const auto path = out_dir / ("loss_" + name + ".svg");
    std::ofstream f(path);
    f << svg_plot(name, pts);
    if (!f) throw Error("cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

std::string comparison_table_markdown(const std::vector<MetricsRow>& rows) {
  const auto keys = metric_keys(rows);
  std::ostringstream s;
  s << "| run |";
  for (const auto& k : keys) s << ' ' << k << " |";
  s << "\n|---|";
  for (std::size_t i = 0; i < keys.size(); ++i) s << "---|";
  s << '\n';
  for (const auto& row : rows) {
    s << "| " << row.label << " |";
    for (const auto& k : keys) s << ' ' << cell(row.metrics, k) << " |";
    s << '\n';
  }
  return s.str();
}

std::string comparison_table_csv(const std::vector<MetricsRow>& rows) {
  const auto keys = metric_keys(rows);
  std::ostringstream s;
  s << "run";
  for (const auto& k : keys) s << ',' << k;
  s << '\n';
  for (const auto& row : rows) {
    s << row.label;
    for (const auto& k : keys) s << ',' << cell(row.metrics, k);
    s << '\n';
  }
  return s.str();
}

}  // namespace cegan
