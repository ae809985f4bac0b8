#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "torclass/dataset.hpp"

namespace torclass::mlp {

/// inputs -> hidden (tanh) -> outputs (logistic). Output 0 is NonTor, 1 is Tor.
struct Layout {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 2;

  std::size_t parameter_count() const { return hidden * inputs + hidden + outputs * hidden + outputs; }
  bool operator==(const Layout&) const = default;
};

struct MlpModel {
  Layout layout;
  Eigen::MatrixXd w1;  // hidden x inputs
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // outputs x hidden
  Eigen::VectorXd b2;

  std::size_t parameter_count() const { return layout.parameter_count(); }

  /// Flat order: w1 row-major, b1, w2 row-major, b2.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
MlpModel init(const Layout& layout, std::uint64_t seed);

/// All-zero parameters.
MlpModel zeros(const Layout& layout);

struct Activations {
  Eigen::VectorXd hidden;
  Eigen::VectorXd output;
};

Activations forward(const MlpModel& model, std::span<const double> x);

/// Inputs (N x n) and one-hot targets (N x outputs).
struct Batch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd targets;

  Eigen::Index size() const { return x.rows(); }
};

Batch make_batch(const data::Dataset& ds);
Batch make_batch(const data::Dataset& ds, std::span<const std::size_t> rows);

/// Forward pass over a whole batch; returns outputs (N x outputs).
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& x,
                              Eigen::MatrixXd* hidden = nullptr);

/// 1/2 * mean over examples of ||y - t||^2.
double loss(const MlpModel& model, const Batch& batch);

/// Exact gradient of `loss` in flatten() order.
Eigen::VectorXd gradient(const MlpModel& model, const Batch& batch);

/// Residuals y - t stacked per example (row 2i + o) and their Jacobian.
void residual_jacobian(const MlpModel& model, const Batch& batch, Eigen::VectorXd& residuals,
                       Eigen::MatrixXd& jacobian);

enum class TrainMode { BpSgd, Lm };

struct TrainConfig {
  TrainMode mode = TrainMode::Lm;
  std::size_t max_epochs = 1000;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double lm_mu_init = 1e-3;
  double lm_mu_up = 10.0;
  double lm_mu_down = 0.1;
  double lm_mu_max = 1e10;
  double lm_min_gradient = 1e-7;
  std::size_t patience = 6;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::string stop_reason;
  std::size_t best_epoch = 0;  // 1-based; 0 = initial parameters

  std::size_t epochs() const { return train_loss.size(); }
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

/// Seeded mini-batch gradient descent with validation early stopping.
TrainResult train_bp(MlpModel model, const Batch& train, const Batch& val, const TrainConfig& cfg);

/// Levenberg-Marquardt on the same loss; one history entry per accepted step.
TrainResult train_lm(MlpModel model, const Batch& train, const Batch& val, const TrainConfig& cfg);

TrainResult train(MlpModel model, const Batch& train, const Batch& val, const TrainConfig& cfg);

/// Argmax of the outputs; exact ties go to class 0.
int predict_from_outputs(std::span<const double> outputs);
int predict(const MlpModel& model, std::span<const double> x);

void write_model(std::ostream& out, const MlpModel& model);
MlpModel read_model(std::istream& in);

void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace torclass::mlp
