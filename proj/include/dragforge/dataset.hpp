#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dragforge/flow_sim.hpp"
#include "dragforge/geometry.hpp"

namespace dragforge {

/// Ordered theta -> drag records for one width case.
struct Dataset {
  double width = 0.0;
  std::vector<DragSample> samples;

  bool operator==(const Dataset&) const = default;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Index of the lowest finite drag among converged samples.
  std::optional<std::size_t> argmin_drag() const;
  /// Lowest finite converged drag, +inf when there is none.
  double min_drag() const;
  bool contains(const ShapeParams& p) const;
  /// Throws ArgumentError on mixed widths or duplicate theta vectors.
  void validate() const;
};

/// Full-factorial grid: `levels` equally spaced values per theta dimension over
/// [0.25 w, w], theta1 varying slowest.
std::vector<ShapeParams> sample_grid(double width, int levels);

/// Simulates every grid point (in parallel over `jobs` workers); per-sample
/// failures become converged = false.
Dataset generate(double width, int levels, const FlowConfig& cfg, int jobs = 0);

/// Drops non-converged and non-finite samples and drags outside
/// median +/- 5 IQR, repeating until no sample is removed.
Dataset filter_outliers(const Dataset& ds);

/// Fixed-notation decimal with 17 significant digits.
std::string format_decimal17(double value);

void write_dataset_csv(std::ostream& os, const Dataset& ds);
Dataset read_dataset_csv(std::istream& is);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dragforge
