#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bitalloc/dataset.hpp"
#include "bitalloc/plant.hpp"

namespace bitalloc {

enum class Activation { sigmoid, linear };

// Single-hidden-layer fully connected network; the trained instance is the
// fixed black-box unit whose inputs arrive quantized.
struct MlpModel {
  Eigen::MatrixXd w1;  // hidden x in
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // out x hidden
  Eigen::VectorXd b2;  // out
  Activation hidden_activation = Activation::sigmoid;

  Eigen::Index in_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index out_dim() const { return w2.rows(); }
};

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
MlpModel init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                  std::uint64_t seed, Activation hidden_activation = Activation::sigmoid);

// Scalar-output forward pass; throws on non-finite input.
double forward(const MlpModel& model, Eigen::Ref<const Eigen::VectorXd> x);
// Batched forward, one sample per row; returns rows x out_dim.
RowMatrixXd forward_batch(const MlpModel& model, Eigen::Ref<const RowMatrixXd> x);

double mean_squared_error(const MlpModel& model, Eigen::Ref<const RowMatrixXd> inputs,
                          Eigen::Ref<const Eigen::VectorXd> targets);

struct MlpGradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

// Gradient of the batch mean squared error (scalar output models).
MlpGradients backprop(const MlpModel& model, Eigen::Ref<const RowMatrixXd> inputs,
                      Eigen::Ref<const Eigen::VectorXd> targets);

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 1000;
  int patience_epochs = 50;
  double validation_ratio = 1.0 / 3.0;
  int max_epochs = 2000;
  int hidden_units = 70;
  std::uint64_t seed = 1;
};

// Demonstration set of [m, l, r, theta, v, q] -> force rows grouped in
// fixed-length control sequences.
struct DemoDataset {
  RowMatrixXd inputs;       // n x 6
  Eigen::VectorXd targets;  // n
  int n_sequences = 0;
  int seq_len = 0;
};

struct DemoData {
  DemoDataset train;
  DemoDataset test;
  int lqr_redraws = 0;  // scenarios redrawn after a failed controller design
};

// Optimal-controller demonstrations: per sequence, draw (mass, length,
// theta0), design the controller, roll out seq_len steps, record
// state -> force pairs. Deterministic for a given seed.
DemoData generate_lqr_dataset(int n_train_sequences, int n_test_sequences,
                              int seq_len, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  MlpModel model;  // best-validation snapshot
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  int stopped_epoch = 0;
};

// Mini-batch gradient descent on MSE with per-epoch reshuffling, validation
// held out by whole sequences, early stop on stalled validation loss.
TrainResult train_mlp(const DemoDataset& data, const TrainConfig& cfg);

void save_model(const MlpModel& model, const std::filesystem::path& path,
                const std::string& fingerprint = "");
MlpModel load_model(const std::filesystem::path& path);

void save_demo_dataset(const DemoDataset& data, const std::filesystem::path& bin_path);
DemoDataset load_demo_dataset(const std::filesystem::path& bin_path);

inline const std::vector<std::string> kFeatureLabels = {"m", "l", "r",
                                                        "theta", "v", "q"};

}  // namespace bitalloc
