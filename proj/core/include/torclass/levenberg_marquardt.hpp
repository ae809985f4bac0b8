#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

namespace torclass::lm {

/// Residual vector r(theta) and its Jacobian. The minimized loss is
/// ||r||^2 / (2 * normalizer()).
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;
  virtual Eigen::Index parameter_count() const = 0;
  virtual void residuals(const Eigen::VectorXd& theta, Eigen::VectorXd& r) const = 0;
  virtual void jacobian(const Eigen::VectorXd& theta, Eigen::VectorXd& r, Eigen::MatrixXd& J) const = 0;
  virtual double normalizer() const { return 1.0; }
};

struct Options {
  double mu_init = 1e-3;
  double mu_up = 10.0;
  double mu_down = 0.1;
  double mu_max = 1e10;
  std::size_t max_iterations = 1000;
  double min_gradient = 1e-7;
};

enum class StopReason { MaxIterations, MuMax, GradientNorm, Callback };

std::string_view stop_reason_name(StopReason reason);

struct Result {
  Eigen::VectorXd theta;
  StopReason reason = StopReason::MaxIterations;
  std::size_t iterations = 0;          // accepted steps
  std::vector<double> accepted_losses;  // loss after each accepted step
  double initial_loss = 0.0;
  double final_mu = 0.0;
};

/// Solves (J^T J + mu I) delta = -J^T r. Throws Error when the damped system
/// cannot be factorized.
Eigen::VectorXd damped_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double mu);

/// Called after every accepted step with the iteration number (1-based),
/// parameters and training loss. Returning false stops the run.
using AcceptCallback = std::function<bool(std::size_t, const Eigen::VectorXd&, double)>;

/// Levenberg-Marquardt with multiplicative damping: an accepted step (strict
/// loss decrease) scales mu by mu_down, a rejected one by mu_up until it
/// exceeds mu_max. Throws DivergenceError on a non-finite loss.
Result minimize(const LeastSquaresProblem& problem, Eigen::VectorXd theta, const Options& options,
                const AcceptCallback& on_accept = {});

}  // namespace torclass::lm
