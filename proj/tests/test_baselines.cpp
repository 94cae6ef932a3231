#include "saver/baselines.hpp"

#include "saver/powerflow.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace saver;

TEST(LinearPolicy, StepExample) {
  LinearPolicy pol({1, 2}, Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1), 2.0, 1.0);
  const Eigen::VectorXd q = pol.step(Eigen::Vector3d(1.1, 0.9, 1.0));
  EXPECT_TRUE(q.isApprox(Eigen::Vector2d(-0.2, 0.2)));
  const Eigen::VectorXd q2 = pol.step(Eigen::Vector3d(1.1, 0.9, 1.0));
  EXPECT_TRUE(q2.isApprox(Eigen::Vector2d(-0.4, 0.4)));
  pol.reset();
  EXPECT_TRUE(pol.q_prev().isZero());
}

TEST(LinearPolicy, ClipsToBox) {
  LinearPolicy pol({1}, Eigen::VectorXd::Constant(1, -0.1), Eigen::VectorXd::Constant(1, 0.1), 10.0, 1.0);
  EXPECT_DOUBLE_EQ(pol.step(Eigen::VectorXd::Constant(1, 0.5))(0), 0.1);
  EXPECT_DOUBLE_EQ(pol.step(Eigen::VectorXd::Constant(1, 1.5))(0), -0.1);
}

TEST(LinearPolicy, ArgumentChecks) {
  EXPECT_THROW(LinearPolicy({1}, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), 1.0, 1.0), DimensionError);
  EXPECT_THROW(LinearPolicy({1}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), -1.0, 1.0),
               std::invalid_argument);
  LinearPolicy pol({2}, Eigen::VectorXd::Constant(1, -1), Eigen::VectorXd::Constant(1, 1), 1.0, 1.0);
  EXPECT_THROW(pol.step(Eigen::VectorXd::Zero(1)), DimensionError);
  EXPECT_THROW(pol.set_q_prev(Eigen::VectorXd::Zero(2)), DimensionError);
}

TEST(LinearPolicy, DefaultGainContractsUnderLinearModel) {
  // closed loop v_C <- c + X_CC q with the default gain is a contraction,
  // so a constant disturbance settles to a fixed point
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  const auto m = build_sensitivity(f);
  const auto& C = f.controllable();
  const double alpha = default_linear_gain(m, C);
  EXPECT_GT(alpha, 0.0);
  Eigen::MatrixXd Xcc(C.size(), C.size());
  for (std::size_t a = 0; a < C.size(); ++a)
    for (std::size_t b = 0; b < C.size(); ++b) Xcc(a, b) = m.X(C[a] - 1, C[b] - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Xcc);
  EXPECT_NEAR(alpha, 0.5 / (2.0 * eig.eigenvalues().maxCoeff()), 1e-12);

  LinearPolicy pol(C, Eigen::VectorXd::Constant(9, -10), Eigen::VectorXd::Constant(9, 10), alpha, 1.0);
  const Eigen::VectorXd c = predict_voltage(m, Injections<double>{-1.2 * f.p_load(), -1.2 * f.q_load()});
  Eigen::VectorXd v = c;
  double prev = (v.array() - 1.0).abs().maxCoeff();
  for (int t = 0; t < 400; ++t) {
    const Eigen::VectorXd q = pol.step(v);
    v = c + m.X * scatter_controllable<double>(q, C, 12);
  }
  Eigen::VectorXd vc(9);
  for (std::size_t a = 0; a < C.size(); ++a) vc(a) = v(C[a] - 1);
  EXPECT_LT((vc.array() - 1.0).abs().maxCoeff(), 1e-3);
  EXPECT_LT((v.array() - 1.0).abs().maxCoeff(), prev);
}

TEST(Noop, Zero) { EXPECT_TRUE(noop_policy(4).isZero(0.0)); }
