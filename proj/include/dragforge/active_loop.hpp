#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dragforge/dataset.hpp"
#include "dragforge/flow_sim.hpp"
#include "dragforge/surrogate.hpp"

namespace dragforge {

/// Geometric step-size schedule 1e-6 * 3^p for p = 1, 2, ... while below 1
/// (twelve values, 3e-6 through 0.531441).
std::vector<double> step_size_schedule();

/// Number of strict rises in the loss sequence {0, losses...}.
int loss_score(const std::vector<double>& losses);
int loss_score(const TrainTrace& trace);

/// Everything a surrogate fit needs besides the data.
struct SurrogateOptions {
  MlpArchitecture arch;
  int search_epochs = 3000;
  int train_epochs = 20000;
  int checkpoint_interval = 1000;
  int restarts = 4;
  /// 0 trains on every sample (the verification loop); evaluations use 0.2.
  double test_fraction = 0.0;
  double init_scale = TrainConfig{}.init_scale;
  /// Fresh seeds tried when every step size diverges.
  int reinitializations = 3;
  int jobs = 0;

  void validate() const;
};

struct StepSizeCandidate {
  double step_size = 0.0;
  /// +inf for diverged and stalled runs.
  double score = std::numeric_limits<double>::infinity();
  bool diverged = false;
  bool stalled = false;
  TrainTrace trace;
};

struct StepSizeReport {
  std::vector<StepSizeCandidate> candidates;
  std::size_t chosen_index = 0;
  double chosen = 0.0;
  /// Step sizes abandoned because every full-length run at them failed.
  int fallbacks = 0;
};

/// Picks the last candidate with the minimal score. Throws
/// ScheduleExhaustedError when every score is infinite.
std::size_t choose_step_index(const std::vector<double>& scores);

/// Trains one fresh model per schedule entry (same seed) for `epochs` epochs
/// and keeps the step size with the best (last minimal) loss_score. The test
/// split is shuffled with `split_seed`, or with `seed` when unset.
StepSizeReport step_size_search(const Dataset& ds, std::uint64_t seed, int epochs,
                                const SurrogateOptions& options = {},
                                std::optional<std::uint64_t> split_seed = std::nullopt);

enum class Degeneracy { ok, zero_derivative, local_minimum };
const char* to_string(Degeneracy d);

Degeneracy detect_degenerate(const TrainTrace& trace, const std::vector<TrainTrace>& restarts);

struct TrainedRun {
  MlpModel model;
  TrainTrace trace;
  bool diverged = false;
  /// Frozen on a positive-loss plateau or collapsed to a constant output.
  bool stalled = false;
};

/// Lowest test MSE; ties (within 1e-12) go to the smallest |test - train|
/// gap, then to the lowest index. Diverged and stalled runs are skipped;
/// throws NoViableRunError if nothing is left.
std::size_t select_best_run(const std::vector<TrainedRun>& runs);

struct SurrogateFit {
  MlpModel model;
  TrainTrace trace;
  StepSizeReport search;
  Degeneracy verdict = Degeneracy::ok;
  std::vector<TrainedRun> runs;
  std::size_t chosen_run = 0;
  std::uint64_t seed = 0;
  /// Shared by every run, so all of them hold out the same samples.
  std::uint64_t split_seed = 0;
};

/// Step-size search, then the primary run plus `restarts` re-initialized runs
/// at the chosen step size, then best-run selection. When every run at the
/// chosen step fails, the next-best step takes over. Only converged samples
/// with finite drag are used.
SurrogateFit fit_surrogate(const Dataset& ds, std::uint64_t seed, const SurrogateOptions& options);

struct ArgminOptions {
  int starts = 64;
  int iterations = 2000;
  /// Step length as a fraction of the width.
  double step_factor = 1e-3;
};

struct SurrogateMinimum {
  ShapeParams params;
  double predicted = 0.0;
};

/// Multi-start projected descent of the model prediction over the theta box
/// (width held fixed). Starts: uniform random draws, the box center, and
/// `incumbent` when given. Each iteration moves a fixed distance
/// step_factor * width against the theta gradient, then clamps to the box.
SurrogateMinimum surrogate_argmin(const MlpModel& m, double width, const ThetaBox& bounds, std::uint64_t seed,
                                  const std::optional<ShapeParams>& incumbent = std::nullopt,
                                  const ArgminOptions& options = {});

using Evaluator = std::function<DragSample(const ShapeParams&)>;

struct MinimizeOptions {
  int max_rounds = 25;
  SurrogateOptions surrogate;
  ArgminOptions argmin;
  /// Confirmation tolerance per coordinate, as a fraction of the width.
  double confirm_factor = 0.02;
};

struct RoundRecord {
  int round = 0;
  ShapeParams proposed;
  double predicted = 0.0;
  /// +inf when the simulation did not converge.
  double simulated = 0.0;
  bool converged = false;
  /// Dataset minimum before this round's sample was added.
  double dataset_min = 0.0;
  /// Prediction-minimizer after fine-tuning the proposing model on this
  /// round's sample. Only set for rounds that improved on the dataset.
  ShapeParams reproposed;
  std::string decision;
};

struct OptimizationResult {
  ShapeParams best_params;
  double best_drag = 0.0;
  int rounds = 0;
  std::vector<RoundRecord> history;
  bool verified = false;
  Dataset final_dataset;
  MlpModel final_model;
};

/// Active verification loop. Each round fits a fresh surrogate, proposes its
/// minimum, simulates it and adds it to the data. A proposal is accepted when
/// its simulated drag beats every earlier sample and the proposing model,
/// fine-tuned on the grown data with its scaling kept, still puts its minimum
/// within confirm_factor * width per coordinate.
OptimizationResult minimize_drag(const Dataset& ds, const Evaluator& evaluate, std::uint64_t seed,
                                 const MinimizeOptions& options = {});

OptimizationResult minimize_drag(const Dataset& ds, const FlowConfig& cfg, std::uint64_t seed,
                                 const MinimizeOptions& options = {});

/// splitmix64 of (base, stream); used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace dragforge
