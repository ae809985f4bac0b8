#include "torclass/levenberg_marquardt.hpp"

#include <cmath>

#include "torclass/error.hpp"

namespace torclass::lm {

std::string_view stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::MaxIterations: return "max_epochs";
    case StopReason::MuMax: return "converged: mu_max";
    case StopReason::GradientNorm: return "converged: gradient";
    case StopReason::Callback: return "callback";
  }
  return "unknown";
}

Eigen::VectorXd damped_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double mu) {
  Eigen::MatrixXd A = J.transpose() * J;
  A.diagonal().array() += mu;
  const Eigen::VectorXd g = J.transpose() * r;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw Error("damped normal equations are singular");
  Eigen::VectorXd delta = ldlt.solve(-g);
  if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
    throw Error("damped normal equations are singular");
  }
  return delta;
}

Result minimize(const LeastSquaresProblem& problem, Eigen::VectorXd theta, const Options& options,
                const AcceptCallback& on_accept) {
  Result result;
  const double norm = problem.normalizer();
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  Eigen::VectorXd r_trial;
  double mu = options.mu_init;

  problem.residuals(theta, r);
  double loss = r.squaredNorm() / (2.0 * norm);
  if (!std::isfinite(loss)) throw DivergenceError(0, "non-finite initial loss");
  result.initial_loss = loss;
  result.reason = StopReason::MaxIterations;

  while (result.iterations < options.max_iterations) {
    problem.jacobian(theta, r, J);
    const Eigen::VectorXd grad = J.transpose() * r / norm;
    if (grad.norm() < options.min_gradient) {
      result.reason = StopReason::GradientNorm;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      const Eigen::VectorXd delta = damped_step(J, r, mu);
      const Eigen::VectorXd trial = theta + delta;
      problem.residuals(trial, r_trial);
      const double trial_loss = r_trial.squaredNorm() / (2.0 * norm);
      if (std::isfinite(trial_loss) && trial_loss < loss) {
        theta = trial;
        loss = trial_loss;
        mu *= options.mu_down;
        accepted = true;
      } else {
        mu *= options.mu_up;
        if (mu > options.mu_max) break;
      }
    }
    if (!accepted) {
      result.reason = StopReason::MuMax;
      break;
    }
    ++result.iterations;
    result.accepted_losses.push_back(loss);
    if (on_accept && !on_accept(result.iterations, theta, loss)) {
      result.reason = StopReason::Callback;
      break;
    }
  }
  result.theta = std::move(theta);
  result.final_mu = mu;
  return result;
}

}  // namespace torclass::lm
