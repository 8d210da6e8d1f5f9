#include "dragforge/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dragforge/dataset.hpp"
#include "dragforge/errors.hpp"
#include "dragforge/parallel.hpp"

namespace dragforge::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Walks one JSON object, reading known keys and rejecting the rest.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ArgumentError(where() + ": expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    out = convert<T>(*it, child(key));
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return (it == obj_.end() || it->is_null()) ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ArgumentError(child(it.key()) + ": unknown key");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ArgumentError(path + ": expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ArgumentError(path + ": expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw ArgumentError(path + ": expected an integer");
      return v.get<int>();
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      if (v.is_null()) return std::nullopt;
      return convert<double>(v, path);
    } else {
      if (!v.is_string()) throw ArgumentError(path + ": expected a string");
      return v.get<std::string>();
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json grid_to_json(const GridSpec& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"spacing", g.spacing}, {"x0", g.x0}, {"y0", g.y0}};
}

json config_json(const RunConfig& c) {
  json j;
  j["width"] = c.width;
  j["levels"] = c.levels;
  j["viscosity"] = c.flow.viscosity;
  j["output_dir"] = c.output_dir;
  j["flow"] = {{"grid", grid_to_json(c.flow.grid)},
               {"inflow_speed", c.flow.inflow_speed},
               {"density", c.flow.density},
               {"reference_speed", c.flow.reference_speed},
               {"chord", c.flow.chord},
               {"max_steps", c.flow.max_steps},
               {"drag_tolerance", c.flow.drag_tolerance},
               {"check_interval", c.flow.check_interval},
               {"settle_checks", c.flow.settle_checks}};
  const TrainSettings& t = c.train;
  j["train"] = {{"hidden_layers", t.hidden_layers},
                {"hidden_units", t.hidden_units},
                {"search_epochs", t.search_epochs},
                {"epochs", t.epochs},
                {"checkpoint_interval", t.checkpoint_interval},
                {"restarts", t.restarts},
                {"test_fraction", t.test_fraction},
                {"init_scale", t.init_scale},
                {"reinitializations", t.reinitializations},
                {"seed", t.seed}};
  const OptimizeSettings& o = c.optimize;
  j["optimize"] = {{"max_rounds", o.max_rounds},
                   {"argmin_starts", o.argmin_starts},
                   {"argmin_iterations", o.argmin_iterations},
                   {"argmin_step_factor", o.argmin_step_factor},
                   {"confirm_factor", o.confirm_factor},
                   {"seed", o.seed}};
  if (c.constraint) {
    const ConstraintSettings& k = *c.constraint;
    json rects = json::array();
    for (const Rect& r : k.rectangles) rects.push_back({{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
    const SgldConfig eff = c.sgld_config();
    j["constraint"] = {{"region_pgm", k.region_pgm},
                       {"rectangles", rects},
                       {"sgld",
                        {{"step_size", eff.step_size},
                         {"noise_scale", eff.noise_scale},
                         {"iterations", k.iterations},
                         {"seed", k.seed},
                         {"max_resamples", k.max_resamples}}}};
  } else {
    j["constraint"] = nullptr;
  }
  return j;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ArgumentError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::string json_number(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// nlohmann prints doubles with shortest round-trip digits; non-finite values
// become strings so the output stays valid JSON.
json num(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json params_json(const ShapeParams& p) {
  return {{"theta", {p.theta[0], p.theta[1], p.theta[2], p.theta[3]}}, {"width", p.width}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw ArgumentError("failed writing '" + path.string() + "'");
}

fs::path prepare_output(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ArgumentError("output_dir: cannot create '" + dir + "'");
  return fs::path(dir);
}

void write_curve(const fs::path& path, const ShapeParams& p) {
  std::ostringstream os;
  write_curve_csv(os, build_boundary(p, 200));
  write_text(path, os.str());
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Shared state of every subcommand.
struct Common {
  std::string config_path;
  std::string output_dir;
  int jobs = 0;

  RunConfig load() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    return cfg;
  }
  int resolved_jobs() const { return jobs > 0 ? jobs : default_jobs(); }
};

Dataset load_training_data(const std::string& path) {
  if (!fs::exists(path)) throw ArgumentError("dataset: '" + path + "' does not exist");
  return filter_outliers(load_dataset(path));
}

int cmd_print_config(const Common& common, std::ostream& out) {
  const RunConfig cfg = common.load();
  cfg.validate();
  out << config_to_json(cfg) << "\n";
  return kOk;
}

int cmd_simulate(const Common& common, const std::string& theta_text, std::optional<double> width_override,
                 int dump_every, std::ostream& out) {
  RunConfig cfg = common.load();
  if (width_override) cfg.width = *width_override;
  cfg.validate();
  const std::vector<double> theta = parse_list(theta_text, "theta");
  if (theta.size() != 4) throw ArgumentError("theta: expected 4 comma-separated values");
  const ShapeParams p{{theta[0], theta[1], theta[2], theta[3]}, cfg.width};
  validate_params(p);

  const OccupancyMask mask = rasterize(build_boundary(p, 200), cfg.flow.grid);
  FieldObserver observer;
  fs::path dump_dir;
  if (dump_every > 0) {
    dump_dir = prepare_output(cfg.output_dir) / "fields";
    fs::create_directories(dump_dir);
    observer = [&](int step, const FlowResult& fields) {
      char name[48];
      std::snprintf(name, sizeof name, "field_%07d.csv", step);
      std::ostringstream os;
      write_field_csv(os, cfg.flow.grid, fields);
      write_text(dump_dir / name, os.str());
    };
  }
  const FlowResult flow = simulate(mask, cfg.flow, observer, dump_every);
  const double area = frontal_height(p) / cfg.flow.grid.spacing;
  const double drag = drag_coefficient(flow.drag_force, area, cfg.flow);
  const double lift = drag_coefficient(flow.lift_force, area, cfg.flow);
  const bool converged = flow.converged && std::isfinite(drag);

  json j = params_json(p);
  j["drag"] = num(drag);
  j["lift"] = num(lift);
  j["converged"] = converged;
  j["steps"] = flow.steps_run;
  j["reynolds"] = cfg.flow.reynolds();
  j["tau"] = cfg.flow.tau();
  out << j.dump(2) << "\n";
  return converged ? kOk : kNonConvergence;
}

int cmd_gen_dataset(const Common& common, std::optional<int> levels_override, std::ostream& out) {
  RunConfig cfg = common.load();
  if (levels_override) cfg.levels = *levels_override;
  cfg.validate();
  const fs::path dir = prepare_output(cfg.output_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = generate(cfg.width, cfg.levels, cfg.flow, common.resolved_jobs());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_dataset(ds, dir / "dataset.csv");

  std::size_t converged = 0;
  for (const DragSample& s : ds.samples) converged += s.converged ? 1 : 0;
  json meta = {{"config_hash", hex64(config_hash(cfg))},
               {"config", config_json(cfg)},
               {"rows", ds.size()},
               {"converged", converged},
               {"min_drag", num(ds.min_drag())},
               {"wall_seconds", seconds},
               {"jobs", common.resolved_jobs()},
               {"created_utc", utc_timestamp()}};
  write_text(dir / "dataset.meta.json", meta.dump(2) + "\n");
  out << "wrote " << ds.size() << " rows (" << converged << " converged) to " << (dir / "dataset.csv").string()
      << "\n";
  return kOk;
}

int cmd_train(const Common& common, const std::string& dataset_path, std::ostream& out) {
  const RunConfig cfg = common.load();
  cfg.validate();
  const Dataset ds = load_training_data(dataset_path);
  const fs::path dir = prepare_output(cfg.output_dir);

  const SurrogateOptions options = cfg.surrogate_options(common.resolved_jobs());
  const SurrogateFit fit = fit_surrogate(ds, cfg.train.seed, options);

  TrainConfig split_cfg;
  split_cfg.test_fraction = options.test_fraction;
  split_cfg.seed = fit.split_seed;
  const double linear_test = linear_test_mse_standardized(ds, split_cfg, fit.model.scaling);
  split_cfg.test_fraction = 0.0;
  const double linear_all = linear_test_mse_standardized(ds, split_cfg, fit.model.scaling);

  json candidates = json::array();
  for (const StepSizeCandidate& c : fit.search.candidates) {
    candidates.push_back({{"step_size", c.step_size},
                          {"score", num(c.score)},
                          {"diverged", c.diverged},
                          {"stalled", c.stalled},
                          {"final_train_mse", num(c.trace.final_train_mse)}});
  }
  json runs = json::array();
  for (const TrainedRun& r : fit.runs) {
    runs.push_back({{"seed", r.trace.seed},
                    {"diverged", r.diverged},
                    {"stalled", r.stalled},
                    {"train_mse", num(r.trace.final_train_mse)},
                    {"test_mse", num(r.trace.final_test_mse)}});
  }
  json report = {{"samples", ds.size()},
                 {"width", ds.width},
                 {"test_fraction", options.test_fraction},
                 {"step_size_search", {{"candidates", candidates}, {"chosen", fit.search.chosen}, {"fallbacks", fit.search.fallbacks}}},
                 {"runs", runs},
                 {"chosen_run", fit.chosen_run},
                 {"verdict", to_string(fit.verdict)},
                 {"mlp", {{"train_mse", num(fit.trace.final_train_mse)}, {"test_mse", num(fit.trace.final_test_mse)}}},
                 {"linear", {{"train_mse", num(linear_all)}, {"test_mse", num(linear_test)}}}};
  write_text(dir / "model.json", mlp_to_json(fit.model) + "\n");
  write_text(dir / "report.json", report.dump(2) + "\n");

  std::ostringstream trace;
  trace << "epoch,loss\n";
  for (const LossCheckpoint& c : fit.trace.loss_checkpoints) trace << c.epoch << "," << json_number(c.mse) << "\n";
  write_text(dir / "trace.csv", trace.str());

  out << "mlp test mse " << json_number(fit.trace.final_test_mse) << ", linear test mse " << json_number(linear_test)
      << "\n";
  return kOk;
}

int cmd_optimize(const Common& common, const std::string& dataset_path, std::ostream& out) {
  const RunConfig cfg = common.load();
  cfg.validate();
  const Dataset ds = load_training_data(dataset_path);
  if (ds.width != cfg.width) throw ArgumentError("width: config width differs from the dataset width");
  const fs::path dir = prepare_output(cfg.output_dir);

  // Fail fast on an unsatisfiable constraint before any simulation.
  std::optional<RequiredRegion> region;
  if (cfg.constraint) {
    region = load_required_region(*cfg.constraint, cfg.flow.grid);
    region->validate();
    const ThetaBox box = ThetaBox::for_width(cfg.width);
    const ShapeParams corner{{box.upper, box.upper, box.upper, box.upper}, cfg.width};
    if (containment(corner, *region, cfg.flow.grid) != 0) {
      throw InfeasibleConstraintError("no shape in the sampling box encloses the required region");
    }
  }

  const OptimizationResult result =
      minimize_drag(ds, cfg.flow, cfg.optimize.seed, cfg.minimize_options(common.resolved_jobs()));

  std::ostringstream rounds;
  for (const RoundRecord& r : result.history) {
    json line = {{"round", r.round},
                 {"proposed", params_json(r.proposed)},
                 {"predicted", num(r.predicted)},
                 {"simulated", num(r.simulated)},
                 {"converged", r.converged},
                 {"dataset_min", num(r.dataset_min)},
                 {"reproposed", params_json(r.reproposed)},
                 {"decision", r.decision}};
    rounds << line.dump() << "\n";
  }
  write_text(dir / "rounds.jsonl", rounds.str());

  json j = {{"verified", result.verified},
            {"rounds", result.rounds},
            {"best", params_json(result.best_params)},
            {"best_drag", num(result.best_drag)},
            {"initial_dataset_min", num(ds.min_drag())},
            {"final_dataset_size", result.final_dataset.size()}};
  write_curve(dir / "best_curve.csv", result.best_params);
  write_text(dir / "model.json", mlp_to_json(result.final_model) + "\n");

  if (region) {
    const ConstrainedResult c = constrained_minimize(result.final_model, *region, cfg.width, cfg.sgld_config(),
                                                     cfg.flow.grid);
    j["constrained"] = {{"params", params_json(c.params)},
                        {"predicted", num(c.predicted)},
                        {"start", params_json(c.start)},
                        {"iterations", c.trajectory.size()}};
    write_curve(dir / "constrained_curve.csv", c.params);
    std::ostringstream traj;
    traj << "iteration,theta1,theta2,theta3,theta4,predicted,containment,fell_back\n";
    for (const TrajectoryEntry& e : c.trajectory) {
      traj << e.iteration;
      for (double t : e.params.theta) traj << "," << json_number(t);
      traj << "," << json_number(e.predicted) << "," << e.containment << "," << (e.fell_back ? 1 : 0) << "\n";
    }
    write_text(dir / "sgld_trajectory.csv", traj.str());
  }
  write_text(dir / "result.json", j.dump(2) + "\n");

  out << (result.verified ? "verified" : "not verified") << " after " << result.rounds << " rounds, best drag "
      << json_number(result.best_drag) << "\n";
  return result.verified ? kOk : kNonConvergence;
}

}  // namespace

void RunConfig::validate() const {
  if (!(width > 0.0) || !std::isfinite(width)) throw ArgumentError("width: must be a finite value > 0");
  if (levels < 1) throw ArgumentError("levels: must be >= 1");
  try {
    flow.grid.validate();
  } catch (const ArgumentError& e) {
    throw ArgumentError(std::string("flow.") + e.what());
  }
  flow.validate();
  surrogate_options(1).validate();
  if (!(train.test_fraction > 0.0 && train.test_fraction < 1.0)) {
    throw ArgumentError("train.test_fraction: must lie in (0, 1)");
  }
  if (optimize.max_rounds < 1) throw ArgumentError("optimize.max_rounds: must be >= 1");
  if (optimize.argmin_starts < 1) throw ArgumentError("optimize.argmin_starts: must be >= 1");
  if (optimize.argmin_iterations < 0) throw ArgumentError("optimize.argmin_iterations: must be >= 0");
  if (!(optimize.argmin_step_factor > 0.0)) throw ArgumentError("optimize.argmin_step_factor: must be > 0");
  if (!(optimize.confirm_factor > 0.0)) throw ArgumentError("optimize.confirm_factor: must be > 0");

  // The largest shape in the box has to fit the grid clear of the inlet and
  // outlet columns, otherwise every simulation would fail.
  const ShapeParams corner{{width, width, width, width}, width};
  OccupancyMask mask;
  try {
    mask = rasterize(build_boundary(corner, 200), flow.grid);
  } catch (const Error&) {
    throw ArgumentError("flow.grid: the largest shape for this width does not fit inside the grid");
  }
  for (int j = 0; j < flow.grid.ny; ++j) {
    for (int i : {0, 1, flow.grid.nx - 2, flow.grid.nx - 1}) {
      if (mask.at(i, j)) throw ArgumentError("flow.grid: shapes reach the inlet/outlet columns");
    }
  }

  if (constraint) {
    const ConstraintSettings& c = *constraint;
    if (c.region_pgm.empty() == c.rectangles.empty()) {
      throw ArgumentError("constraint: give exactly one of region_pgm or rectangles");
    }
    for (std::size_t i = 0; i < c.rectangles.size(); ++i) {
      const Rect& r = c.rectangles[i];
      if (!(r.w > 0.0) || !(r.h > 0.0)) {
        throw ArgumentError("constraint.rectangles[" + std::to_string(i) + "]: w and h must be > 0");
      }
    }
    sgld_config().validate();
  }
}

SurrogateOptions RunConfig::surrogate_options(int jobs) const {
  SurrogateOptions o;
  o.arch = {train.hidden_layers, train.hidden_units};
  o.search_epochs = train.search_epochs;
  o.train_epochs = train.epochs;
  o.checkpoint_interval = train.checkpoint_interval;
  o.restarts = train.restarts;
  o.test_fraction = train.test_fraction;
  o.init_scale = train.init_scale;
  o.reinitializations = train.reinitializations;
  o.jobs = jobs;
  return o;
}

MinimizeOptions RunConfig::minimize_options(int jobs) const {
  MinimizeOptions o;
  o.max_rounds = optimize.max_rounds;
  o.surrogate = surrogate_options(jobs);
  // The verification loop trains on every sample.
  o.surrogate.test_fraction = 0.0;
  o.argmin = {optimize.argmin_starts, optimize.argmin_iterations, optimize.argmin_step_factor};
  o.confirm_factor = optimize.confirm_factor;
  return o;
}

SgldConfig RunConfig::sgld_config() const {
  SgldConfig s = SgldConfig::for_width(width);
  if (constraint) {
    if (constraint->step_size) s.step_size = *constraint->step_size;
    if (constraint->noise_scale) s.noise_scale = *constraint->noise_scale;
    s.iterations = constraint->iterations;
    s.seed = constraint->seed;
    s.max_resamples = constraint->max_resamples;
  }
  return s;
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ArgumentError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  RunConfig cfg;
  ObjectReader top(root, "");
  top.read("width", cfg.width);
  top.read("levels", cfg.levels);
  top.read("viscosity", cfg.flow.viscosity);
  top.read("output_dir", cfg.output_dir);

  if (const json* f = top.sub("flow")) {
    ObjectReader r(*f, "flow");
    if (const json* g = r.sub("grid")) {
      ObjectReader gr(*g, "flow.grid");
      gr.read("nx", cfg.flow.grid.nx);
      gr.read("ny", cfg.flow.grid.ny);
      gr.read("spacing", cfg.flow.grid.spacing);
      gr.read("x0", cfg.flow.grid.x0);
      gr.read("y0", cfg.flow.grid.y0);
      gr.finish();
    }
    r.read("inflow_speed", cfg.flow.inflow_speed);
    r.read("density", cfg.flow.density);
    r.read("reference_speed", cfg.flow.reference_speed);
    r.read("chord", cfg.flow.chord);
    r.read("max_steps", cfg.flow.max_steps);
    r.read("drag_tolerance", cfg.flow.drag_tolerance);
    r.read("check_interval", cfg.flow.check_interval);
    r.read("settle_checks", cfg.flow.settle_checks);
    r.finish();
  }
  if (const json* t = top.sub("train")) {
    ObjectReader r(*t, "train");
    r.read("hidden_layers", cfg.train.hidden_layers);
    r.read("hidden_units", cfg.train.hidden_units);
    r.read("search_epochs", cfg.train.search_epochs);
    r.read("epochs", cfg.train.epochs);
    r.read("checkpoint_interval", cfg.train.checkpoint_interval);
    r.read("restarts", cfg.train.restarts);
    r.read("test_fraction", cfg.train.test_fraction);
    r.read("init_scale", cfg.train.init_scale);
    r.read("reinitializations", cfg.train.reinitializations);
    r.read("seed", cfg.train.seed);
    r.finish();
  }
  if (const json* o = top.sub("optimize")) {
    ObjectReader r(*o, "optimize");
    r.read("max_rounds", cfg.optimize.max_rounds);
    r.read("argmin_starts", cfg.optimize.argmin_starts);
    r.read("argmin_iterations", cfg.optimize.argmin_iterations);
    r.read("argmin_step_factor", cfg.optimize.argmin_step_factor);
    r.read("confirm_factor", cfg.optimize.confirm_factor);
    r.read("seed", cfg.optimize.seed);
    r.finish();
  }
  if (const json* c = top.sub("constraint")) {
    ObjectReader r(*c, "constraint");
    ConstraintSettings k;
    r.read("region_pgm", k.region_pgm);
    if (const json* rects = r.sub("rectangles")) {
      if (!rects->is_array()) throw ArgumentError("constraint.rectangles: expected an array");
      for (std::size_t i = 0; i < rects->size(); ++i) {
        ObjectReader rr((*rects)[i], "constraint.rectangles[" + std::to_string(i) + "]");
        Rect rect;
        rr.read("x", rect.x);
        rr.read("y", rect.y);
        rr.read("w", rect.w);
        rr.read("h", rect.h);
        rr.finish();
        k.rectangles.push_back(rect);
      }
    }
    if (const json* s = r.sub("sgld")) {
      ObjectReader sr(*s, "constraint.sgld");
      sr.read("step_size", k.step_size);
      sr.read("noise_scale", k.noise_scale);
      sr.read("iterations", k.iterations);
      sr.read("seed", k.seed);
      sr.read("max_resamples", k.max_resamples);
      sr.finish();
    }
    r.finish();
    cfg.constraint = k;
  }
  top.finish();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

std::uint64_t config_hash(const RunConfig& cfg) {
  // output_dir does not influence results.
  json j = config_json(cfg);
  j.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RequiredRegion load_required_region(const ConstraintSettings& c, const GridSpec& grid) {
  if (!c.region_pgm.empty()) {
    std::ifstream in(c.region_pgm);
    if (!in) throw ArgumentError("constraint.region_pgm: cannot open '" + c.region_pgm + "'");
    return RequiredRegion{read_mask_pgm(in, grid)};
  }
  return region_from_rectangles(c.rectangles, grid);
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drag-minimizing 2D shape design: simulate, sample, train, optimize"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "JSON run configuration");
  app.add_option("--out", common.output_dir, "Output directory (overrides output_dir)");
  app.add_option("--jobs", common.jobs, "Worker threads (default: DRAGFORGE_JOBS or all cores)")
      ->check(CLI::PositiveNumber);

  auto* print = app.add_subcommand("print-config", "Print the effective configuration with all defaults");

  auto* sim = app.add_subcommand("simulate", "Simulate one shape and print its drag as JSON");
  std::string theta_text;
  std::optional<double> width_override;
  int dump_every = 0;
  sim->add_option("--theta", theta_text, "Four control heights, comma separated")->required();
  sim->add_option("--width", width_override, "Case width (overrides the config)");
  sim->add_option("--dump-every", dump_every, "Write field CSVs every N steps")->check(CLI::NonNegativeNumber);

  auto* gen = app.add_subcommand("gen-dataset", "Simulate the full-factorial sample grid");
  std::optional<int> levels_override;
  gen->add_option("--levels", levels_override, "Grid levels per parameter (overrides the config)");

  auto* tr = app.add_subcommand("train", "Fit the surrogate network and report test errors");
  std::string dataset_path;
  tr->add_option("--dataset", dataset_path, "Dataset CSV")->required();

  auto* opt = app.add_subcommand("optimize", "Run the active verification loop");
  opt->add_option("--dataset", dataset_path, "Dataset CSV")->required();

  for (auto* sub : {print, sim, gen, tr, opt}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*print) return cmd_print_config(common, out);
    if (*sim) return cmd_simulate(common, theta_text, width_override, dump_every, out);
    if (*gen) return cmd_gen_dataset(common, levels_override, out);
    if (*tr) return cmd_train(common, dataset_path, out);
    if (*opt) return cmd_optimize(common, dataset_path, out);
  } catch (const InfeasibleConstraintError& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const TrainingDivergedError& e) {
    err << "error: " << e.what() << "\n";
    return kTrainingFailure;
  } catch (const ScheduleExhaustedError& e) {
    err << "error: " << e.what() << "\n";
    return kTrainingFailure;
  } catch (const NoViableRunError& e) {
    err << "error: " << e.what() << "\n";
    return kTrainingFailure;
  } catch (const SingularFitError& e) {
    err << "error: " << e.what() << "\n";
    return kTrainingFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace dragforge::cli
