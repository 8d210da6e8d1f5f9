#include "dragforge/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dragforge/errors.hpp"
#include "dragforge/parallel.hpp"

namespace dragforge {

namespace {

Dataset usable_samples(const Dataset& ds) {
  Dataset out{ds.width, {}};
  for (const auto& s : ds.samples) {
    if (s.converged && std::isfinite(s.drag)) out.samples.push_back(s);
  }
  return out;
}

TrainConfig train_config(const SurrogateOptions& o, double step, int epochs, std::uint64_t seed,
                         std::uint64_t split_seed) {
  TrainConfig cfg;
  cfg.step_size = step;
  cfg.epochs = epochs;
  cfg.checkpoint_interval = o.checkpoint_interval;
  cfg.test_fraction = o.test_fraction;
  cfg.seed = seed;
  cfg.split_seed = split_seed;
  cfg.init_scale = o.init_scale;
  return cfg;
}

// Dead ReLUs can freeze a run at a positive loss with an exactly zero
// gradient, or flatten the network into a constant. Either way the trace has
// no rises and would tie with good steps.
bool stalled_on_plateau(const TrainTrace& t) {
  const auto& c = t.loss_checkpoints;
  return c.size() >= 2 && c.back().mse == c[c.size() - 2].mse && c.back().mse > 1e-12;
}

bool constant_output(const MlpModel& m, const Dataset& ds) {
  Eigen::MatrixXd features(kFeatureCount, static_cast<Eigen::Index>(ds.size()));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t c = 0; c < ds.size(); ++c) {
    const auto f = ds.samples[c].params.as_features();
    for (int i = 0; i < kFeatureCount; ++i) features(i, static_cast<Eigen::Index>(c)) = f[i];
    lo = std::min(lo, ds.samples[c].drag);
    hi = std::max(hi, ds.samples[c].drag);
  }
  const Eigen::RowVectorXd y = mlp_forward_batch(m, features);
  return hi > lo && y.maxCoeff() - y.minCoeff() <= 1e-6 * (hi - lo);
}

TrainedRun run_training(const Dataset& ds, const TrainConfig& cfg, const MlpArchitecture& arch) {
  try {
    TrainResult r = train_fresh(ds, cfg, arch);
    const bool stalled = stalled_on_plateau(r.trace) || constant_output(r.model, ds);
    return {std::move(r.model), std::move(r.trace), false, stalled};
  } catch (const TrainingDivergedError& e) {
    return {mlp_init(cfg.seed, cfg.init_scale, arch), e.trace(), true, false};
  }
}

bool within_tolerance(const ShapeParams& a, const ShapeParams& b, double tol) {
  for (int i = 0; i < 4; ++i) {
    if (std::abs(a.theta[i] - b.theta[i]) > tol) return false;
  }
  return true;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> step_size_schedule() {
  std::vector<double> steps;
  for (int power = 1;; ++power) {
    const double step = 1e-6 * std::pow(3.0, power);
    if (!(step < 1.0)) break;
    steps.push_back(step);
  }
  return steps;
}

int loss_score(const std::vector<double>& losses) {
  int score = 0;
  double previous = 0.0;
  for (double l : losses) {
    if (l > previous) ++score;
    previous = l;
  }
  return score;
}

int loss_score(const TrainTrace& trace) { return loss_score(trace.losses()); }

void SurrogateOptions::validate() const {
  if (arch.hidden_layers < 1 || arch.hidden_units < 1) throw ArgumentError("train.architecture: must be non-empty");
  if (checkpoint_interval < 1) throw ArgumentError("train.checkpoint_interval: must be >= 1");
  if (search_epochs < checkpoint_interval) throw ArgumentError("train.search_epochs: must be >= checkpoint_interval");
  if (train_epochs < checkpoint_interval) throw ArgumentError("train.epochs: must be >= checkpoint_interval");
  if (restarts < 0) throw ArgumentError("train.restarts: must be >= 0");
  if (reinitializations < 0) throw ArgumentError("train.reinitializations: must be >= 0");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ArgumentError("train.test_fraction: must lie in [0, 1)");
  if (!(init_scale >= 0.0)) throw ArgumentError("train.init_scale: must be >= 0");
}

std::size_t choose_step_index(const std::vector<double>& scores) {
  std::optional<std::size_t> holder;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isfinite(scores[i]) && scores[i] <= best) {
      best = scores[i];
      holder = i;
    }
  }
  if (!holder) throw ScheduleExhaustedError("every step-size candidate diverged");
  return *holder;
}

StepSizeReport step_size_search(const Dataset& ds, std::uint64_t seed, int epochs, const SurrogateOptions& options,
                                std::optional<std::uint64_t> split_seed) {
  options.validate();
  const auto steps = step_size_schedule();
  StepSizeReport report;
  report.candidates.resize(steps.size());
  parallel_for(steps.size(), options.jobs, [&](std::size_t i) {
    const TrainedRun run = run_training(ds, train_config(options, steps[i], epochs, seed, split_seed.value_or(seed)), options.arch);
    StepSizeCandidate& c = report.candidates[i];
    c.step_size = steps[i];
    c.diverged = run.diverged;
    c.trace = run.trace;
    c.stalled = run.stalled;
    c.score = run.diverged || run.stalled ? std::numeric_limits<double>::infinity() : loss_score(run.trace);
  });
  std::vector<double> scores;
  for (const auto& c : report.candidates) scores.push_back(c.score);
  report.chosen_index = choose_step_index(scores);
  report.chosen = report.candidates[report.chosen_index].step_size;
  return report;
}

const char* to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::ok:
      return "ok";
    case Degeneracy::zero_derivative:
      return "zero_derivative";
    case Degeneracy::local_minimum:
      return "local_minimum";
  }
  return "unknown";
}

Degeneracy detect_degenerate(const TrainTrace& trace, const std::vector<TrainTrace>& restarts) {
  if (trace.grad_norm_at_init < 1e-12) return Degeneracy::zero_derivative;
  const auto losses = trace.losses();
  if (losses.size() >= 2) {
    const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
    if (*hi - *lo < 1e-15) return Degeneracy::zero_derivative;
  }
  for (const auto& r : restarts) {
    if (r.final_train_mse < 0.5 * trace.final_train_mse) return Degeneracy::local_minimum;
  }
  return Degeneracy::ok;
}

std::size_t select_best_run(const std::vector<TrainedRun>& runs) {
  constexpr double kTie = 1e-12;
  std::optional<std::size_t> best;
  auto gap = [](const TrainTrace& t) { return std::abs(t.final_test_mse - t.final_train_mse); };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    if (r.diverged || r.stalled || !std::isfinite(r.trace.final_test_mse)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = runs[*best].trace;
    if (r.trace.final_test_mse < b.final_test_mse - kTie) {
      best = i;
    } else if (std::abs(r.trace.final_test_mse - b.final_test_mse) <= kTie && gap(r.trace) < gap(b)) {
      best = i;
    }
  }
  if (!best) throw NoViableRunError("every training run diverged or stalled");
  return *best;
}

SurrogateFit fit_surrogate(const Dataset& ds, std::uint64_t seed, const SurrogateOptions& options) {
  options.validate();
  const Dataset data = usable_samples(ds);
  if (data.empty()) throw EmptyDatasetError("no converged samples to train on");

  SurrogateFit fit;
  fit.split_seed = seed;
  for (int attempt = 0;; ++attempt) {
    // A fully diverged schedule means a bad initialization: reseed and retry.
    fit.seed = derive_seed(seed, static_cast<std::uint64_t>(attempt));
    try {
      fit.search = step_size_search(data, fit.seed, options.search_epochs, options, fit.split_seed);
      break;
    } catch (const ScheduleExhaustedError&) {
      if (attempt >= options.reinitializations) throw;
    }
  }

  const std::size_t total = 1 + static_cast<std::size_t>(options.restarts);
  std::vector<double> scores;
  for (const auto& c : fit.search.candidates) scores.push_back(c.score);
  for (;;) {
    fit.runs.assign(total, TrainedRun{});
    parallel_for(total, options.jobs, [&](std::size_t r) {
      const std::uint64_t run_seed = r == 0 ? fit.seed : derive_seed(fit.seed, 100 + r);
      fit.runs[r] = run_training(data, train_config(options, fit.search.chosen, options.train_epochs, run_seed, fit.split_seed),
                                   options.arch);
    });
    try {
      fit.chosen_run = select_best_run(fit.runs);
      break;
    } catch (const NoViableRunError&) {
      // The longer runs fell apart at this step size: drop it and use the
      // next candidate. ScheduleExhaustedError once none is left.
      scores[fit.search.chosen_index] = std::numeric_limits<double>::infinity();
      fit.search.chosen_index = choose_step_index(scores);
      fit.search.chosen = fit.search.candidates[fit.search.chosen_index].step_size;
      ++fit.search.fallbacks;
    }
  }

  std::vector<TrainTrace> restart_traces;
  for (std::size_t r = 1; r < total; ++r) {
    if (!fit.runs[r].diverged) restart_traces.push_back(fit.runs[r].trace);
  }
  fit.verdict = detect_degenerate(fit.runs[0].trace, restart_traces);
  fit.model = fit.runs[fit.chosen_run].model;
  fit.trace = fit.runs[fit.chosen_run].trace;
  return fit;
}

SurrogateMinimum surrogate_argmin(const MlpModel& m, double width, const ThetaBox& bounds, std::uint64_t seed,
                                  const std::optional<ShapeParams>& incumbent, const ArgminOptions& options) {
  if (options.starts < 1 || options.iterations < 0) throw ArgumentError("argmin: starts must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(bounds.lower, bounds.upper);

  const auto starts = static_cast<Eigen::Index>(options.starts);
  Eigen::MatrixXd x(kFeatureCount, starts);
  Eigen::Index col = 0;
  x.col(col++).setConstant(0.5 * (bounds.lower + bounds.upper));
  if (incumbent && col < starts) {
    for (int i = 0; i < 4; ++i) x(i, col) = bounds.clamp(incumbent->theta[i]);
    ++col;
  }
  for (; col < starts; ++col) {
    for (int i = 0; i < 4; ++i) x(i, col) = uniform(rng);
  }
  x.row(4).setConstant(width);

  const double step = options.step_factor * width;
  for (int it = 0; it < options.iterations; ++it) {
    const Eigen::MatrixXd grad = mlp_input_gradient_batch(m, x);
    for (Eigen::Index c = 0; c < starts; ++c) {
      std::array<double, 4> g{};
      double norm = 0.0;
      for (int i = 0; i < 4; ++i) {
        g[i] = grad(i, c);
        // Components pushing into an active bound do not move the point.
        if ((x(i, c) <= bounds.lower && g[i] > 0.0) || (x(i, c) >= bounds.upper && g[i] < 0.0)) g[i] = 0.0;
        norm += g[i] * g[i];
      }
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) continue;
      for (int i = 0; i < 4; ++i) x(i, c) = bounds.clamp(x(i, c) - step * g[i] / norm);
    }
  }

  const Eigen::RowVectorXd pred = mlp_forward_batch(m, x);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < starts; ++c) {
    if (pred(c) < pred(best)) best = c;
  }
  SurrogateMinimum out;
  out.params.width = width;
  for (int i = 0; i < 4; ++i) out.params.theta[i] = x(i, best);
  out.predicted = pred(best);
  return out;
}

OptimizationResult minimize_drag(const Dataset& ds, const Evaluator& evaluate, std::uint64_t seed,
                                 const MinimizeOptions& options) {
  if (options.max_rounds < 1) throw ArgumentError("optimize.max_rounds: must be >= 1");
  if (ds.empty()) throw EmptyDatasetError("minimize_drag needs a non-empty dataset");
  options.surrogate.validate();

  const double width = ds.width;
  const ThetaBox box = ThetaBox::for_width(width);
  const double tol = options.confirm_factor * width;

  OptimizationResult result;
  result.final_dataset = ds;
  Dataset& data = result.final_dataset;

  auto propose = [&](const SurrogateFit& fit, int round) {
    std::optional<ShapeParams> incumbent;
    if (auto i = data.argmin_drag()) incumbent = data.samples[*i].params;
    return surrogate_argmin(fit.model, width, box, derive_seed(seed, 1000 + static_cast<std::uint64_t>(round)),
                            incumbent, options.argmin);
  };

  // One more pass over the data with the new sample, starting from the
  // model that made the proposal. The confirmation asks whether that model,
  // updated with what the simulation said, still points at the same shape.
  auto confirm = [&](const SurrogateFit& fit, int round) -> std::optional<SurrogateMinimum> {
    TrainConfig cfg;
    cfg.step_size = fit.search.chosen;
    cfg.epochs = options.surrogate.train_epochs;
    cfg.checkpoint_interval = options.surrogate.checkpoint_interval;
    cfg.test_fraction = 0.0;
    cfg.seed = fit.seed;
    try {
      const MlpModel tuned = fine_tune(fit.model, usable_samples(data), cfg).model;
      return propose(SurrogateFit{tuned, {}, {}, {}, {}, 0, 0, 0}, round);
    } catch (const TrainingDivergedError&) {
      return std::nullopt;
    }
  };

  SurrogateFit fit;
  for (int round = 1; round <= options.max_rounds; ++round) {
    fit = fit_surrogate(data, derive_seed(seed, static_cast<std::uint64_t>(round)), options.surrogate);
    const SurrogateMinimum proposal = propose(fit, round);

    RoundRecord rec;
    rec.round = round;
    rec.proposed = proposal.params;
    rec.predicted = proposal.predicted;
    rec.dataset_min = data.min_drag();

    DragSample sample = evaluate(proposal.params);
    sample.params = proposal.params;
    if (!sample.converged || !std::isfinite(sample.drag)) {
      sample.converged = false;
      sample.drag = std::numeric_limits<double>::infinity();
    }
    rec.simulated = sample.drag;
    rec.converged = sample.converged;
    const bool duplicate = data.contains(sample.params);
    if (!duplicate) data.samples.push_back(sample);
    const bool improved = sample.converged && sample.drag < rec.dataset_min;
    result.rounds = round;

    if (improved) {
      const auto again = confirm(fit, round);
      if (again) rec.reproposed = again->params;
      if (again && within_tolerance(again->params, proposal.params, tol)) {
        rec.decision = "accepted";
        result.history.push_back(rec);
        result.verified = true;
        result.best_params = proposal.params;
        result.best_drag = sample.drag;
        result.final_model = fit.model;
        return result;
      }
    }
    if (!sample.converged) {
      rec.decision = "non-converged";
    } else if (duplicate) {
      rec.decision = "duplicate";
    } else if (improved) {
      rec.decision = "improved-unconfirmed";
    } else {
      rec.decision = "not-improved";
    }
    result.history.push_back(rec);
  }

  result.final_model = fit.model;
  if (auto i = data.argmin_drag()) {
    result.best_params = data.samples[*i].params;
    result.best_drag = data.samples[*i].drag;
  } else {
    result.best_drag = std::numeric_limits<double>::infinity();
  }
  return result;
}

OptimizationResult minimize_drag(const Dataset& ds, const FlowConfig& cfg, std::uint64_t seed,
                                 const MinimizeOptions& options) {
  cfg.validate();
  return minimize_drag(ds, [&cfg](const ShapeParams& p) { return evaluate_shape(p, cfg); }, seed, options);
}

}  // namespace dragforge
