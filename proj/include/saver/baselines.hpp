#pragma once

#include "saver/linearization.hpp"

#include <Eigen/Dense>

#include <vector>

namespace saver {

/// Incremental volt-var feedback: q <- clip(q_prev - alpha (v_C - v_ref)).
class LinearPolicy {
 public:
  LinearPolicy(std::vector<int> controllable, Eigen::VectorXd q_min, Eigen::VectorXd q_max, double alpha,
               double v_ref);

  /// `v_measured` holds the squared voltages of all N non-root buses.
  Eigen::VectorXd step(const Eigen::VectorXd& v_measured);
  void reset();

  double alpha() const { return alpha_; }
  double v_ref() const { return v_ref_; }
  const Eigen::VectorXd& q_prev() const { return q_prev_; }
  void set_q_prev(const Eigen::VectorXd& q);

 private:
  std::vector<int> controllable_;
  Eigen::VectorXd q_min_, q_max_, q_prev_;
  double alpha_;
  double v_ref_;
};

/// 0.5 / lambda_max(2 X_CC).
double default_linear_gain(const SensitivityModel<double>& model, const std::vector<int>& controllable);

/// Zero action for `num_controllable` buses.
inline Eigen::VectorXd noop_policy(Eigen::Index num_controllable) { return Eigen::VectorXd::Zero(num_controllable); }

}  // namespace saver
