#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dragforge/active_loop.hpp"
#include "dragforge/constraints.hpp"
#include "dragforge/flow_sim.hpp"
#include "dragforge/surrogate.hpp"

namespace dragforge::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kNonConvergence = 2,
  kTrainingFailure = 3,
  kInfeasible = 4,
};

struct TrainSettings {
  int hidden_layers = 6;
  int hidden_units = 32;
  int search_epochs = SurrogateOptions{}.search_epochs;
  int epochs = SurrogateOptions{}.train_epochs;
  int checkpoint_interval = 1000;
  int restarts = 4;
  double test_fraction = 0.2;
  double init_scale = TrainConfig{}.init_scale;
  int reinitializations = 3;
  std::uint64_t seed = 0;
};

struct OptimizeSettings {
  int max_rounds = 25;
  int argmin_starts = 64;
  int argmin_iterations = 2000;
  double argmin_step_factor = 1e-3;
  double confirm_factor = 0.02;
  std::uint64_t seed = 0;
};

/// Either a PGM-style mask file or a rectangle list; SGLD fields left unset
/// fall back to SgldConfig::for_width.
struct ConstraintSettings {
  std::string region_pgm;
  std::vector<Rect> rectangles;
  std::optional<double> step_size;
  std::optional<double> noise_scale;
  int iterations = 5000;
  std::uint64_t seed = 0;
  int max_resamples = 50;
};

struct RunConfig {
  double width = 0.18;
  int levels = 5;
  FlowConfig flow;
  TrainSettings train;
  OptimizeSettings optimize;
  std::optional<ConstraintSettings> constraint;
  std::string output_dir = "dragforge-out";

  /// Checks every module precondition; throws ArgumentError whose message
  /// starts with the offending field path.
  void validate() const;

  SurrogateOptions surrogate_options(int jobs) const;
  MinimizeOptions minimize_options(int jobs) const;
  SgldConfig sgld_config() const;
};

/// Parses a JSON document over the defaults; unknown keys and type
/// mismatches throw ArgumentError naming the field path.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);

/// 64-bit FNV-1a over the canonical JSON dump.
std::uint64_t config_hash(const RunConfig& cfg);

/// Loads the required region named by the constraint settings.
RequiredRegion load_required_region(const ConstraintSettings& c, const GridSpec& grid);

/// Entry point of the `dragforge` executable; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dragforge::cli
