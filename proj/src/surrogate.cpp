#include "dragforge/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace dragforge {

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

std::array<double, kFeatureCount> features_of(const ShapeParams& p) { return p.as_features(); }

std::vector<DragSample> subset(const std::vector<DragSample>& all, const std::vector<std::size_t>& idx) {
  std::vector<DragSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

Standardization fit_standardization(const std::vector<DragSample>& samples) {
  Standardization s;
  const auto n = static_cast<double>(samples.size());
  for (int j = 0; j < kFeatureCount; ++j) {
    double mean = 0.0;
    for (const auto& d : samples) mean += features_of(d.params)[j];
    mean /= n;
    double var = 0.0;
    for (const auto& d : samples) {
      const double e = features_of(d.params)[j] - mean;
      var += e * e;
    }
    const double sd = std::sqrt(var / n);
    s.input_mean[j] = mean;
    s.input_scale[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  double mean = 0.0;
  for (const auto& d : samples) mean += d.drag;
  mean /= n;
  double var = 0.0;
  for (const auto& d : samples) var += (d.drag - mean) * (d.drag - mean);
  const double sd = std::sqrt(var / n);
  s.output_mean = mean;
  s.output_scale = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  return s;
}

MatrixXd standardize_columns(const Standardization& s, const MatrixXd& raw) {
  MatrixXd z(raw.rows(), raw.cols());
  for (int j = 0; j < kFeatureCount; ++j) {
    z.row(j) = (raw.row(j).array() - s.input_mean[j]) / s.input_scale[j];
  }
  return z;
}

// Forward pass keeping every pre-activation; activations[0] is the input.
// Buffers of one forward/backward pass. Training reuses a per-thread cache:
// the matrices keep their size from epoch to epoch, so nothing is
// reallocated. Fresh large allocations each epoch cost as much system time
// as the arithmetic.
struct ForwardCache {
  std::vector<MatrixXd> activations;
  std::vector<MatrixXd> preactivations;
  MatrixXd delta;
  MatrixXd back;
};

RowVectorXd network_forward(const MlpModel& m, const MatrixXd& z, ForwardCache* cache) {
  const std::size_t last = m.layers.size() - 1;
  if (cache) {
    cache->activations.resize(m.layers.size());
    cache->preactivations.resize(m.layers.size());
    cache->activations[0] = z;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      MatrixXd& a = cache->preactivations[l];
      a.noalias() = m.layers[l].weight * cache->activations[l];
      a.colwise() += m.layers[l].bias;
      if (l == last) return a.row(0);
      cache->activations[l + 1] = a.cwiseMax(0.0);
    }
    return {};
  }
  MatrixXd h = z;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    MatrixXd a = m.layers[l].weight * h;
    a.colwise() += m.layers[l].bias;
    if (l == last) return a.row(0);
    h = a.cwiseMax(0.0);
  }
  return {};
}

// Backpropagates d(loss)/d(output) row `upstream` through the cached pass.
// Fills parameter gradients (optional) and, when asked, returns
// d(loss)/d(input).
MatrixXd network_backward(const MlpModel& m, ForwardCache& cache, const RowVectorXd& upstream,
                          std::vector<DenseLayer>* gradient, bool input_gradient) {
  if (gradient) gradient->resize(m.layers.size());
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const bool top = l + 1 == m.layers.size();
    if (gradient) {
      if (top) {
        (*gradient)[l].weight.noalias() = upstream * cache.activations[l].transpose();
        (*gradient)[l].bias = upstream.rowwise().sum();
      } else {
        (*gradient)[l].weight.noalias() = cache.delta * cache.activations[l].transpose();
        (*gradient)[l].bias = cache.delta.rowwise().sum();
      }
    }
    if (l == 0 && !input_gradient) return {};
    if (top) {
      cache.back.noalias() = m.layers[l].weight.transpose() * upstream;
    } else {
      cache.back.noalias() = m.layers[l].weight.transpose() * cache.delta;
    }
    if (l == 0) return cache.back;
    cache.delta = (cache.preactivations[l - 1].array() > 0.0).select(cache.back, 0.0);
  }
  return {};
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear baseline

LinearModel fit_linear(const std::vector<DragSample>& samples) {
  const auto n = samples.size();
  if (n < kFeatureCount + 1) throw SingularFitError("need at least 6 samples for the linear fit");

  std::array<double, kFeatureCount> mean{};
  for (const auto& s : samples) {
    const auto f = features_of(s.params);
    for (int j = 0; j < kFeatureCount; ++j) mean[j] += f[j];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  double drag_mean = 0.0;
  for (const auto& s : samples) drag_mean += s.drag;
  drag_mean /= static_cast<double>(n);

  std::array<double, kFeatureCount> scale{};
  for (int j = 0; j < kFeatureCount; ++j) {
    double var = 0.0;
    for (const auto& s : samples) {
      const double e = features_of(s.params)[j] - mean[j];
      var += e * e;
    }
    scale[j] = std::sqrt(var / static_cast<double>(n));
  }

  // Width is a case constant; its column is collinear with the intercept.
  std::vector<int> active;
  for (int j = 0; j < kFeatureCount; ++j) {
    const bool constant = !(scale[j] > 1e-12 * std::max(1.0, std::abs(mean[j])));
    if (constant && j == kFeatureCount - 1) continue;
    if (constant) throw SingularFitError("feature column " + std::to_string(j + 1) + " is constant");
    active.push_back(j);
  }

  const auto p = static_cast<Eigen::Index>(active.size());
  MatrixXd z(static_cast<Eigen::Index>(n), p);
  VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = features_of(samples[i].params);
    for (Eigen::Index k = 0; k < p; ++k) {
      const int j = active[static_cast<std::size_t>(k)];
      z(static_cast<Eigen::Index>(i), k) = (f[j] - mean[j]) / scale[j];
    }
    y(static_cast<Eigen::Index>(i)) = samples[i].drag - drag_mean;
  }

  // Normal equations on centered, unit-variance columns.
  const MatrixXd gram = z.transpose() * z / static_cast<double>(n);
  Eigen::FullPivLU<MatrixXd> lu(gram);
  lu.setThreshold(1e-10);
  if (lu.rank() < p) throw SingularFitError("design matrix is rank deficient");
  const VectorXd beta = lu.solve(z.transpose() * y / static_cast<double>(n));

  LinearModel m;
  m.intercept = drag_mean;
  for (Eigen::Index k = 0; k < p; ++k) {
    const int j = active[static_cast<std::size_t>(k)];
    m.coefficients[j] = beta(k) / scale[j];
    m.intercept -= m.coefficients[j] * mean[j];
  }
  return m;
}

LinearModel fit_linear(const Dataset& ds) { return fit_linear(ds.samples); }

double predict_linear(const LinearModel& m, const ShapeParams& p) {
  const auto f = features_of(p);
  double y = m.intercept;
  for (int j = 0; j < kFeatureCount; ++j) y += m.coefficients[j] * f[j];
  return y;
}

double linear_mse(const LinearModel& m, const std::vector<DragSample>& samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) {
    const double e = predict_linear(m, s.params) - s.drag;
    sum += e * e;
  }
  return sum / static_cast<double>(samples.size());
}

CvReport kfold_cv(const Dataset& ds, int k, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (k < 2) throw ArgumentError("k: must be >= 2");
  if (static_cast<std::size_t>(k) > n) throw ArgumentError("k: exceeds the number of samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CvReport report;
  report.fold_of_sample.assign(n, -1);
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t t = 0; t < size; ++t) report.fold_of_sample[order[pos++]] = f;
  }

  for (int f = 0; f < k; ++f) {
    std::vector<DragSample> train_set, test_set;
    for (std::size_t i = 0; i < n; ++i) {
      (report.fold_of_sample[i] == f ? test_set : train_set).push_back(ds.samples[i]);
    }
    const LinearModel m = fit_linear(train_set);
    report.fold_mse.push_back(linear_mse(m, test_set));
  }
  report.mean_mse = std::accumulate(report.fold_mse.begin(), report.fold_mse.end(), 0.0) / k;
  return report;
}

// ---------------------------------------------------------------------------
// Network

std::size_t MlpModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return total;
}

MlpModel mlp_init(std::uint64_t seed, double init_scale, const MlpArchitecture& arch) {
  if (!(init_scale >= 0.0)) throw ArgumentError("init_scale: must be >= 0");
  if (arch.hidden_layers < 1 || arch.hidden_units < 1) throw ArgumentError("architecture: empty hidden layers");
  MlpModel m;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  int fan_in = kFeatureCount;
  for (int l = 0; l <= arch.hidden_layers; ++l) {
    const int units = l == arch.hidden_layers ? 1 : arch.hidden_units;
    const double bound = init_scale * std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{MatrixXd(units, fan_in), VectorXd::Zero(units)};
    for (int r = 0; r < units; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = bound > 0.0 ? dist(rng) : 0.0;
    }
    m.layers.push_back(std::move(layer));
    fan_in = units;
  }
  return m;
}

void validate_model(const MlpModel& m) {
  if (m.layers.size() < 2) throw ArgumentError("model: needs at least one hidden layer");
  Eigen::Index fan_in = kFeatureCount;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    if (layer.weight.cols() != fan_in || layer.bias.size() != layer.weight.rows()) {
      throw ArgumentError("model: layer " + std::to_string(l) + " shape does not chain");
    }
    fan_in = layer.weight.rows();
  }
  if (fan_in != 1) throw ArgumentError("model: output layer must have one unit");
}

Eigen::RowVectorXd mlp_forward_batch(const MlpModel& m, const Eigen::MatrixXd& features) {
  const RowVectorXd out = network_forward(m, standardize_columns(m.scaling, features), nullptr);
  return (out.array() * m.scaling.output_scale + m.scaling.output_mean).matrix();
}

Eigen::MatrixXd mlp_input_gradient_batch(const MlpModel& m, const Eigen::MatrixXd& features) {
  ForwardCache cache;
  network_forward(m, standardize_columns(m.scaling, features), &cache);
  MatrixXd grad = network_backward(m, cache, RowVectorXd::Ones(features.cols()), nullptr, true);
  for (int j = 0; j < kFeatureCount; ++j) grad.row(j) *= m.scaling.output_scale / m.scaling.input_scale[j];
  return grad;
}

static MatrixXd column_of(const ShapeParams& p) {
  const auto f = p.as_features();
  return Eigen::Map<const VectorXd>(f.data(), kFeatureCount);
}

double mlp_forward(const MlpModel& m, const ShapeParams& p) { return mlp_forward_batch(m, column_of(p))(0); }

std::array<double, kFeatureCount> mlp_input_gradient(const MlpModel& m, const ShapeParams& p) {
  const MatrixXd g = mlp_input_gradient_batch(m, column_of(p));
  std::array<double, kFeatureCount> out{};
  for (int j = 0; j < kFeatureCount; ++j) out[j] = g(j, 0);
  return out;
}

double mse_loss(const MlpModel& m, const Eigen::MatrixXd& inputs, const Eigen::RowVectorXd& targets,
                std::vector<DenseLayer>* gradient) {
  const auto n = static_cast<double>(inputs.cols());
  thread_local ForwardCache cache;
  const RowVectorXd residual = network_forward(m, inputs, gradient ? &cache : nullptr) - targets;
  const double loss = residual.squaredNorm() / n;
  if (gradient) network_backward(m, cache, residual * (2.0 / n), gradient, false);
  return loss;
}

Eigen::MatrixXd standardized_inputs(const Standardization& s, const std::vector<DragSample>& samples) {
  MatrixXd raw(kFeatureCount, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto f = samples[i].params.as_features();
    for (int j = 0; j < kFeatureCount; ++j) raw(j, static_cast<Eigen::Index>(i)) = f[j];
  }
  return standardize_columns(s, raw);
}

Eigen::RowVectorXd standardized_targets(const Standardization& s, const std::vector<DragSample>& samples) {
  RowVectorXd t(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    t(static_cast<Eigen::Index>(i)) = (samples[i].drag - s.output_mean) / s.output_scale;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ArgumentError("train.step_size: must be >= 0");
  if (checkpoint_interval < 1) throw ArgumentError("train.checkpoint_interval: must be >= 1");
  if (epochs < checkpoint_interval) throw ArgumentError("train.epochs: must be >= checkpoint_interval");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ArgumentError("train.test_fraction: must lie in [0, 1)");
  if (!(init_scale >= 0.0)) throw ArgumentError("train.init_scale: must be >= 0");
}

std::vector<double> TrainTrace::losses() const {
  std::vector<double> out;
  out.reserve(loss_checkpoints.size());
  for (const auto& c : loss_checkpoints) out.push_back(c.mse);
  return out;
}

Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eed5eed5eedULL);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
  if (n_test >= n) n_test = n > 0 ? n - 1 : 0;
  Split s;
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

namespace {

TrainResult run_descent(const MlpModel& init, const Dataset& ds, const TrainConfig& cfg, bool keep_scaling) {
  cfg.validate();
  validate_model(init);
  if (ds.empty()) throw EmptyDatasetError("cannot train on an empty dataset");

  const Split split = split_indices(ds.size(), cfg.test_fraction, cfg.split_seed.value_or(cfg.seed));
  const auto train_set = subset(ds.samples, split.train);
  const auto test_set = subset(ds.samples, split.test);

  TrainResult result{init, {}};
  MlpModel& m = result.model;
  if (!keep_scaling) m.scaling = fit_standardization(train_set);
  TrainTrace& trace = result.trace;
  trace.seed = cfg.seed;

  const MatrixXd inputs = standardized_inputs(m.scaling, train_set);
  const RowVectorXd targets = standardized_targets(m.scaling, train_set);

  std::vector<DenseLayer> grad;
  double loss = 0.0;
  for (int epoch = 0;; ++epoch) {
    const bool last = epoch == cfg.epochs;
    loss = mse_loss(m, inputs, targets, last ? nullptr : &grad);
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError("non-finite loss at epoch " + std::to_string(epoch), trace);
    }
    if (epoch > 0 && epoch % cfg.checkpoint_interval == 0) trace.loss_checkpoints.push_back({epoch, loss});
    if (last) break;
    if (epoch == 0) {
      double sq = 0.0;
      for (const auto& g : grad) sq += g.weight.squaredNorm() + g.bias.squaredNorm();
      trace.grad_norm_at_init = std::sqrt(sq);
    }
    if (cfg.step_size == 0.0) continue;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      m.layers[l].weight -= cfg.step_size * grad[l].weight;
      m.layers[l].bias -= cfg.step_size * grad[l].bias;
    }
  }
  trace.final_train_mse = loss;
  trace.final_test_mse =
      test_set.empty() ? loss : mse_loss(m, standardized_inputs(m.scaling, test_set), standardized_targets(m.scaling, test_set));
  if (!std::isfinite(trace.final_test_mse)) {
    throw TrainingDivergedError("non-finite test loss", trace);
  }
  return result;
}

}  // namespace

TrainResult train(const MlpModel& init, const Dataset& ds, const TrainConfig& cfg) {
  return run_descent(init, ds, cfg, false);
}

TrainResult fine_tune(const MlpModel& model, const Dataset& ds, const TrainConfig& cfg) {
  return run_descent(model, ds, cfg, true);
}

TrainResult train_fresh(const Dataset& ds, const TrainConfig& cfg, const MlpArchitecture& arch) {
  return train(mlp_init(cfg.seed, cfg.init_scale, arch), ds, cfg);
}

double linear_test_mse_standardized(const Dataset& ds, const TrainConfig& cfg, const Standardization& scaling) {
  const Split split = split_indices(ds.size(), cfg.test_fraction, cfg.split_seed.value_or(cfg.seed));
  const auto train_set = subset(ds.samples, split.train);
  const auto test_set = split.test.empty() ? train_set : subset(ds.samples, split.test);
  const LinearModel lin = fit_linear(train_set);
  return linear_mse(lin, test_set) / (scaling.output_scale * scaling.output_scale);
}

// ---------------------------------------------------------------------------
// Serialization

std::string mlp_to_json(const MlpModel& m) {
  nlohmann::json j;
  j["version"] = "mlp-v1";
  j["seed"] = m.seed;
  std::vector<Eigen::Index> dims{kFeatureCount};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) {
    dims.push_back(l.weight.rows());
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    layers.push_back({{"weights", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  j["layer_dims"] = dims;
  j["layers"] = layers;
  j["standardization"] = {{"input_mean", m.scaling.input_mean},
                          {"input_scale", m.scaling.input_scale},
                          {"output_mean", m.scaling.output_mean},
                          {"output_scale", m.scaling.output_scale}};
  return j.dump(2);
}

MlpModel mlp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("model json: ") + e.what());
  }
  try {
    if (j.at("version").get<std::string>() != "mlp-v1") throw ArgumentError("model json: unsupported version");
    MlpModel m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto dims = j.at("layer_dims").get<std::vector<Eigen::Index>>();
    const auto& layers = j.at("layers");
    if (dims.size() != layers.size() + 1) throw ArgumentError("model json: layer_dims does not match layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      const Eigen::Index rows = dims[l + 1];
      const Eigen::Index cols = dims[l];
      if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
        throw ArgumentError("model json: layer " + std::to_string(l) + " has the wrong size");
      }
      DenseLayer layer{MatrixXd(rows, cols), Eigen::Map<const VectorXd>(b.data(), rows)};
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      m.layers.push_back(std::move(layer));
    }
    const auto& s = j.at("standardization");
    m.scaling.input_mean = s.at("input_mean").get<std::array<double, kFeatureCount>>();
    m.scaling.input_scale = s.at("input_scale").get<std::array<double, kFeatureCount>>();
    m.scaling.output_mean = s.at("output_mean").get<double>();
    m.scaling.output_scale = s.at("output_scale").get<double>();
    validate_model(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("model json: ") + e.what());
  }
}

}  // namespace dragforge
