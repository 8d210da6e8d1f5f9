#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dragforge/dataset.hpp"
#include "dragforge/errors.hpp"
#include "dragforge/geometry.hpp"

namespace dragforge {

inline constexpr int kFeatureCount = 5;

// ---------------------------------------------------------------------------
// Linear baseline

/// drag ~ intercept + sum_j coefficients[j] * x_j over (theta1..theta4, width).
struct LinearModel {
  double intercept = 0.0;
  std::array<double, kFeatureCount> coefficients{};
};

/// Least-squares (RSS-minimizing) fit with intercept. A width column that is
/// constant across the samples is not identifiable and gets coefficient 0.
/// Throws SingularFitError for rank-deficient designs.
LinearModel fit_linear(const std::vector<DragSample>& samples);
LinearModel fit_linear(const Dataset& ds);

double predict_linear(const LinearModel& m, const ShapeParams& p);

/// Mean squared error of `m` over `samples`, in drag units.
double linear_mse(const LinearModel& m, const std::vector<DragSample>& samples);

struct CvReport {
  std::vector<double> fold_mse;
  double mean_mse = 0.0;
  /// Fold index of every dataset sample, in dataset order.
  std::vector<int> fold_of_sample;
};

/// k-fold cross-validation of the linear model with a seeded shuffle.
CvReport kfold_cv(const Dataset& ds, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fully-connected ReLU network

struct DenseLayer {
  Eigen::MatrixXd weight;  // units x fan_in
  Eigen::VectorXd bias;
  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

/// Affine maps between raw features/drag and the network's standardized space.
struct Standardization {
  std::array<double, kFeatureCount> input_mean{};
  std::array<double, kFeatureCount> input_scale{1.0, 1.0, 1.0, 1.0, 1.0};
  double output_mean = 0.0;
  double output_scale = 1.0;
  bool operator==(const Standardization&) const = default;
};

struct MlpArchitecture {
  int hidden_layers = 6;
  int hidden_units = 32;
};

/// Input 5 -> hidden ReLU layers -> linear output 1. The default architecture
/// has six hidden layers of 32 units (seven weight layers).
struct MlpModel {
  std::vector<DenseLayer> layers;
  Standardization scaling;
  std::uint64_t seed = 0;

  int hidden_layers() const { return static_cast<int>(layers.size()) - 1; }
  std::size_t parameter_count() const;
  bool operator==(const MlpModel&) const = default;
};

/// Uniform weights in +/- init_scale * sqrt(1 / fan_in), zero biases.
MlpModel mlp_init(std::uint64_t seed, double init_scale, const MlpArchitecture& arch = {});

/// Throws ArgumentError when the layer shapes do not chain 5 -> ... -> 1.
void validate_model(const MlpModel& m);

double mlp_forward(const MlpModel& m, const ShapeParams& p);

/// Exact d(output)/d(theta1..theta4, width); ReLU'(0) is taken as 0.
std::array<double, kFeatureCount> mlp_input_gradient(const MlpModel& m, const ShapeParams& p);

/// Raw predictions for the columns of `features` (5 x m).
Eigen::RowVectorXd mlp_forward_batch(const MlpModel& m, const Eigen::MatrixXd& features);

/// Input gradients for the columns of `features`; returns 5 x m.
Eigen::MatrixXd mlp_input_gradient_batch(const MlpModel& m, const Eigen::MatrixXd& features);

/// Mean squared error of the network in standardized space, with optional
/// gradient with respect to every weight and bias (same layout as m.layers).
/// `inputs` are standardized features (5 x n), `targets` standardized drags.
double mse_loss(const MlpModel& m, const Eigen::MatrixXd& inputs, const Eigen::RowVectorXd& targets,
                std::vector<DenseLayer>* gradient = nullptr);

/// Standardized feature matrix (5 x n) and target row for `samples`.
Eigen::MatrixXd standardized_inputs(const Standardization& s, const std::vector<DragSample>& samples);
Eigen::RowVectorXd standardized_targets(const Standardization& s, const std::vector<DragSample>& samples);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double step_size = 1e-3;
  int epochs = 10000;
  int checkpoint_interval = 1000;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  /// Seed of the train/test shuffle; unset means `seed`. Runs that share it
  /// are scored on the same held-out samples.
  std::optional<std::uint64_t> split_seed;
  double init_scale = 2.449489742783178;  // sqrt(6): He-uniform bound for ReLU

  void validate() const;
};

struct LossCheckpoint {
  int epoch = 0;
  double mse = 0.0;
  bool operator==(const LossCheckpoint&) const = default;
};

/// Checkpoints hold the standardized train MSE after every
/// `checkpoint_interval` epochs; the leading 0 of the score sequence is added
/// by loss_score, not stored here.
struct TrainTrace {
  std::vector<LossCheckpoint> loss_checkpoints;
  double final_train_mse = 0.0;
  /// Equals final_train_mse when no samples are held out.
  double final_test_mse = 0.0;
  double grad_norm_at_init = 0.0;
  std::uint64_t seed = 0;

  std::vector<double> losses() const;
  bool operator==(const TrainTrace&) const = default;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, TrainTrace trace) : Error(what), trace_(std::move(trace)) {}
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  TrainTrace trace_;
};

struct TrainResult {
  MlpModel model;
  TrainTrace trace;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle; the last ceil(test_fraction * n) shuffled indices form the test set.
Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

/// Full-batch gradient descent on standardized MSE. Standardization statistics
/// are recomputed from the training split and stored in the returned model.
TrainResult train(const MlpModel& init, const Dataset& ds, const TrainConfig& cfg);

/// Continues gradient descent from `model` on `ds`, keeping the model's
/// standardization so the learned weights stay meaningful.
TrainResult fine_tune(const MlpModel& model, const Dataset& ds, const TrainConfig& cfg);

/// Convenience: fresh mlp_init(cfg.seed, cfg.init_scale, arch) followed by train.
TrainResult train_fresh(const Dataset& ds, const TrainConfig& cfg, const MlpArchitecture& arch = {});

/// Linear-baseline MSE on the test split of `cfg`, in the MLP's standardized units.
double linear_test_mse_standardized(const Dataset& ds, const TrainConfig& cfg, const Standardization& scaling);

/// JSON object with version "mlp-v1", layer dims, row-major weights, biases,
/// standardization statistics and the seed.
std::string mlp_to_json(const MlpModel& m);
MlpModel mlp_from_json(const std::string& text);

}  // namespace dragforge
