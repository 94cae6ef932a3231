#include "saver/baselines.hpp"

#include <stdexcept>

namespace saver {

LinearPolicy::LinearPolicy(std::vector<int> controllable, Eigen::VectorXd q_min, Eigen::VectorXd q_max,
                           double alpha, double v_ref)
    : controllable_(std::move(controllable)),
      q_min_(std::move(q_min)),
      q_max_(std::move(q_max)),
      alpha_(alpha),
      v_ref_(v_ref) {
  const auto m = static_cast<Eigen::Index>(controllable_.size());
  require_size(q_min_.size(), m, "LinearPolicy: q_min");
  require_size(q_max_.size(), m, "LinearPolicy: q_max");
  if (!(alpha_ > 0.0)) throw std::invalid_argument("LinearPolicy: alpha must be positive");
  if (!(q_min_.array() <= 0.0).all() || !(q_max_.array() >= 0.0).all()) {
    throw std::invalid_argument("LinearPolicy: q box must contain zero");
  }
  reset();
}

void LinearPolicy::reset() { q_prev_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(controllable_.size())); }

void LinearPolicy::set_q_prev(const Eigen::VectorXd& q) {
  require_size(q.size(), q_prev_.size(), "LinearPolicy::set_q_prev");
  q_prev_ = q.cwiseMax(q_min_).cwiseMin(q_max_);
}

Eigen::VectorXd LinearPolicy::step(const Eigen::VectorXd& v_measured) {
  const Eigen::VectorXd v_c = gather_controllable(v_measured, controllable_);
  q_prev_ = (q_prev_ - alpha_ * (v_c.array() - v_ref_).matrix()).cwiseMax(q_min_).cwiseMin(q_max_);
  return q_prev_;
}

double default_linear_gain(const SensitivityModel<double>& model, const std::vector<int>& controllable) {
  const auto m = static_cast<Eigen::Index>(controllable.size());
  if (m == 0) throw std::invalid_argument("default_linear_gain: no controllable bus");
  Eigen::MatrixXd xcc(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) xcc(a, b) = 2.0 * model.X(controllable[a] - 1, controllable[b] - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xcc, Eigen::EigenvaluesOnly);
  return 0.5 / eig.eigenvalues().maxCoeff();
}

}  // namespace saver
