#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "torclass/dataset.hpp"

namespace torclass::svm {

enum class KernelKind { Linear, Rbf };

struct Kernel {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 1.0;

  static Kernel linear() { return {KernelKind::Linear, 0.0}; }
  static Kernel rbf(double gamma) { return {KernelKind::Rbf, gamma}; }

  void validate() const;
};

/// linear: x.z; rbf: exp(-gamma * ||x - z||^2).
double kernel_eval(const Kernel& k, std::span<const double> x, std::span<const double> z);

struct SmoConfig {
  double C = 1.0;
  double tolerance = 1e-3;
  std::size_t max_passes = 10;       // cap on sweeps over the full training set
  std::size_t max_iterations = 0;    // successful pair updates; 0 means 10 * N
  std::uint64_t seed = 1;

  void validate() const;
};

/// One binary decision function f(x) = sum_i coef_i K(sv_i, x) + bias, with
/// coef_i = alpha_i * y_i and y in {+1, -1}.
struct SvmModel {
  Kernel kernel;
  double C = 1.0;
  double bias = 0.0;
  std::size_t width = 0;
  std::vector<double> support_vectors;  // row-major, coefficients.size() x width
  std::vector<double> coefficients;
  std::optional<std::vector<double>> weights;  // linear kernel only

  std::size_t num_support_vectors() const { return coefficients.size(); }
  std::span<const double> support_vector(std::size_t i) const {
    return {support_vectors.data() + i * width, width};
  }
};

/// Result of one binary SMO run.
struct BinaryTraining {
  SvmModel model;
  std::vector<double> alphas;  // one per training row
  std::vector<int> signs;      // +1 / -1 per training row
  bool converged = true;
  std::size_t iterations = 0;
  std::size_t passes = 0;
};

/// SMO on the soft-margin dual for rows `x` (row-major, n x width) with labels
/// in {+1, -1}.
BinaryTraining train_binary(std::span<const double> x, std::size_t width, std::span<const int> signs,
                            const Kernel& kernel, const SmoConfig& cfg);

struct OvrTraining {
  std::vector<BinaryTraining> per_class;  // index = class id

  std::vector<SvmModel> models() const;
  bool converged() const;
};

/// One model per class: rows of class l labelled +1, every other row -1.
OvrTraining train_ovr(const data::Dataset& train, const SmoConfig& cfg, const Kernel& kernel);

double decision_value(const SvmModel& model, std::span<const double> x);

/// Uses the explicit weight vector when present.
double decision_value_linear(const SvmModel& model, std::span<const double> x);

/// Argmax over the models' decision values; ties go to the lowest index.
int predict(std::span<const SvmModel> models, std::span<const double> x);
int argmax_decision(std::span<const double> values);

/// Dual objective sum(alpha) - 1/2 alpha^T Q alpha with Q_ij = y_i y_j K_ij.
double dual_objective(std::span<const double> alphas, std::span<const int> signs,
                      std::span<const double> x, std::size_t width, const Kernel& kernel);

/// 1/2 ||w||^2 + C * sum hinge(y_i f(x_i)), with ||w||^2 = alpha^T Q alpha.
double primal_objective(const SvmModel& model, std::span<const double> x, std::span<const int> signs);

/// Largest KKT violation over the training rows (0 when all conditions hold).
double max_kkt_violation(const BinaryTraining& t, std::span<const double> x);

/// Default rbf gamma: 1 / feature count.
Kernel default_kernel(std::size_t width);

void write_models(std::ostream& out, std::span<const SvmModel> models);
std::vector<SvmModel> read_models(std::istream& in);

}  // namespace torclass::svm
