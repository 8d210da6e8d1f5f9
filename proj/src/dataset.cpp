#include "dragforge/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "dragforge/errors.hpp"
#include "dragforge/parallel.hpp"

namespace dragforge {

namespace {

constexpr const char* kHeader = "theta1,theta2,theta3,theta4,width,drag,converged";

// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_real(const std::string& field, std::size_t line_no, const char* name) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(std::string("invalid number in column ") + name + ": '" + field + "'", line_no);
  }
  return value;
}

}  // namespace

std::optional<std::size_t> Dataset::argmin_drag() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.converged || !std::isfinite(s.drag)) continue;
    if (!best || s.drag < samples[*best].drag) best = i;
  }
  return best;
}

double Dataset::min_drag() const {
  const auto i = argmin_drag();
  return i ? samples[*i].drag : std::numeric_limits<double>::infinity();
}

bool Dataset::contains(const ShapeParams& p) const {
  return std::any_of(samples.begin(), samples.end(), [&](const DragSample& s) { return s.params.theta == p.theta; });
}

void Dataset::validate() const {
  std::set<std::array<double, 4>> seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].params.width != width) {
      throw ArgumentError("sample " + std::to_string(i) + ": width differs from the dataset width");
    }
    if (!seen.insert(samples[i].params.theta).second) {
      throw ArgumentError("sample " + std::to_string(i) + ": duplicate theta vector");
    }
  }
}

std::vector<ShapeParams> sample_grid(double width, int levels) {
  if (levels < 1) throw ArgumentError("levels: must be >= 1");
  if (!(width > 0.0)) throw ArgumentError("width: must be > 0");
  const ThetaBox box = ThetaBox::for_width(width);
  std::vector<double> values(static_cast<std::size_t>(levels));
  for (int k = 0; k < levels; ++k) {
    values[k] = levels == 1 ? box.lower : box.lower + (box.upper - box.lower) * k / (levels - 1);
  }
  values.back() = levels == 1 ? box.lower : box.upper;

  std::vector<ShapeParams> grid;
  grid.reserve(static_cast<std::size_t>(levels) * levels * levels * levels);
  for (double a : values)
    for (double b : values)
      for (double c : values)
        for (double d : values) grid.push_back(ShapeParams{{a, b, c, d}, width});
  return grid;
}

Dataset generate(double width, int levels, const FlowConfig& cfg, int jobs) {
  cfg.validate();
  const auto points = sample_grid(width, levels);
  Dataset ds{width, std::vector<DragSample>(points.size())};
  parallel_for(points.size(), jobs, [&](std::size_t i) { ds.samples[i] = evaluate_shape(points[i], cfg); });
  return ds;
}

Dataset filter_outliers(const Dataset& ds) {
  if (ds.empty()) throw EmptyDatasetError("cannot filter an empty dataset");
  Dataset out{ds.width, {}};
  for (const auto& s : ds.samples) {
    if (s.converged && std::isfinite(s.drag)) out.samples.push_back(s);
  }
  while (!out.empty()) {
    std::vector<double> drags;
    drags.reserve(out.size());
    for (const auto& s : out.samples) drags.push_back(s.drag);
    std::sort(drags.begin(), drags.end());
    const double median = quantile(drags, 0.5);
    const double iqr = quantile(drags, 0.75) - quantile(drags, 0.25);
    const double lo = median - 5.0 * iqr;
    const double hi = median + 5.0 * iqr;
    const std::size_t before = out.size();
    std::erase_if(out.samples, [&](const DragSample& s) { return s.drag < lo || s.drag > hi; });
    if (out.size() == before) break;
  }
  if (out.empty()) throw EmptyDatasetError("every sample was removed by the outlier filter");
  return out;
}

std::string format_decimal17(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";
  char sci[64];
  std::snprintf(sci, sizeof sci, "%.16e", value);
  const char* e = std::strchr(sci, 'e');
  const int exponent = std::atoi(e + 1);
  const int decimals = std::max(0, 16 - exponent);
  std::vector<char> buf(static_cast<std::size_t>(decimals + 350));
  std::snprintf(buf.data(), buf.size(), "%.*f", decimals, value);
  return buf.data();
}

void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  os << kHeader << '\n';
  for (const auto& s : ds.samples) {
    for (double t : s.params.theta) os << format_decimal17(t) << ',';
    os << format_decimal17(s.params.width) << ',' << format_decimal17(s.drag) << ',' << (s.converged ? 1 : 0)
       << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw EmptyDatasetError("dataset file is empty");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ParseError(std::string("expected header '") + kHeader + "'", line_no);

  Dataset ds;
  bool have_width = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != 7) {
      throw ParseError("expected 7 columns, found " + std::to_string(fields.size()), line_no);
    }
    DragSample s;
    static constexpr const char* names[] = {"theta1", "theta2", "theta3", "theta4", "width", "drag"};
    for (int k = 0; k < 4; ++k) s.params.theta[k] = parse_real(fields[k], line_no, names[k]);
    s.params.width = parse_real(fields[4], line_no, names[4]);
    s.drag = parse_real(fields[5], line_no, names[5]);
    const std::string& conv = fields[6];
    if (conv == "1" || conv == "true") {
      s.converged = true;
    } else if (conv == "0" || conv == "false") {
      s.converged = false;
    } else {
      throw ParseError("invalid converged flag '" + conv + "'", line_no);
    }
    if (!have_width) {
      ds.width = s.params.width;
      have_width = true;
    } else if (s.params.width != ds.width) {
      throw ParseError("width differs from earlier rows", line_no);
    }
    ds.samples.push_back(s);
  }
  if (ds.empty()) throw EmptyDatasetError("dataset has no rows");
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  write_dataset_csv(out, ds);
  if (!out) throw ArgumentError("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  return read_dataset_csv(in);
}

}  // namespace dragforge
