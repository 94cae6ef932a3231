#include "saver/safety_layer.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qp_instances.hpp"

#include <gtest/gtest.h>

using namespace saver;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Project, TwoBusUpperBound) {
  const Feeder f = fixture::chain(1, 0.01, 0.01);
  const auto m = build_sensitivity(f);
  const SafetyLayer<double> layer(m, {1});
  const auto r = layer.project(vec({1.0}), vec({1.0}), vec({0.9}), vec({1.01}), vec({-1.0}), vec({1.0}));
  EXPECT_EQ(r.status, ProjectionStatus::Optimal);
  EXPECT_NEAR(r.q_safe(0), 0.5, 1e-9);
  ASSERT_EQ(r.active_set.size(), 1u);
  EXPECT_EQ(r.active_set[0], (ActiveConstraint{1, BoundSide::Upper}));
  EXPECT_GT(r.multipliers(0), 0.0);
}

TEST(Project, TwoBusLowerBound) {
  const auto m = build_sensitivity(fixture::chain(1, 0.01, 0.01));
  const SafetyLayer<double> layer(m, {1});
  const auto r = layer.project(vec({-1.0}), vec({1.0}), vec({0.99}), vec({1.1}), vec({-1.0}), vec({1.0}));
  EXPECT_NEAR(r.q_safe(0), -0.5, 1e-9);
  ASSERT_EQ(r.active_set.size(), 1u);
  EXPECT_EQ(r.active_set[0].side, BoundSide::Lower);
  EXPECT_LT(r.multipliers(0), 0.0);
}

TEST(Project, FeasibleProposalIsReturnedUnchanged) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  const auto m = build_sensitivity(f);
  const SafetyLayer<double> layer(m, f.controllable());
  Eigen::VectorXd qh = Eigen::VectorXd::Constant(9, 0.01);
  const auto c = layer.offset(Eigen::VectorXd::Zero(12), Eigen::VectorXd());
  const auto r = layer.project(qh, c, f.v_lower(), f.v_upper(), f.q_min(), f.q_max());
  EXPECT_EQ(r.status, ProjectionStatus::Optimal);
  EXPECT_TRUE(r.q_safe == qh);
  EXPECT_TRUE(r.active_set.empty());
  EXPECT_EQ(r.iterations, 0);
}

TEST(Project, BoxOnlyClipping) {
  const auto m = build_sensitivity(fixture::chain(2, 0.001, 0.001));
  const SafetyLayer<double> layer(m, {1, 2});
  const auto r = layer.project(vec({5.0, -5.0}), vec({1.0, 1.0}), vec({0.5, 0.5}), vec({1.5, 1.5}),
                               vec({-0.2, -0.2}), vec({0.2, 0.2}));
  EXPECT_TRUE(r.q_safe.isApprox(vec({0.2, -0.2})));
  EXPECT_TRUE(r.active_set.empty());
}

TEST(Project, InfeasibleIsRelaxed) {
  const auto m = build_sensitivity(fixture::chain(1, 0.01, 0.01));
  const SafetyLayer<double> layer(m, {1});
  // voltage 1.1 with q in [-1, 1] can only reach down to 1.08
  const auto r = layer.project(vec({0.0}), vec({1.1}), vec({0.9}), vec({1.05}), vec({-1.0}), vec({1.0}));
  EXPECT_EQ(r.status, ProjectionStatus::Relaxed);
  EXPECT_NEAR(r.q_safe(0), -1.0, 1e-9);
  EXPECT_NEAR(r.slack_used, 0.03, 1e-9);
}

TEST(Project, NoControllableBusesReportsSlack) {
  const auto m = build_sensitivity(fixture::chain(2, 0.01, 0.01));
  const SafetyLayer<double> layer(m, {});
  const auto r = layer.project(Eigen::VectorXd(), vec({1.0, 1.2}), vec({0.9, 0.9}), vec({1.1, 1.1}),
                               Eigen::VectorXd(), Eigen::VectorXd());
  EXPECT_EQ(r.status, ProjectionStatus::Relaxed);
  EXPECT_NEAR(r.slack_used, 0.1, 1e-12);
}

TEST(Project, ArgumentChecks) {
  const auto m = build_sensitivity(fixture::chain(2, 0.01, 0.01));
  EXPECT_THROW(SafetyLayer<double>(m, {3}), DimensionError);
  ProjectionOptions bad;
  bad.tol = 0;
  EXPECT_THROW(SafetyLayer<double>(m, {1}, bad), std::invalid_argument);
  const SafetyLayer<double> layer(m, {1, 2});
  const Eigen::VectorXd two = vec({1.0, 1.0});
  EXPECT_THROW(layer.project(vec({0.0}), two, two * 0.9, two * 1.1, vec({-1, -1}), vec({1, 1})), DimensionError);
  EXPECT_THROW(layer.project(vec({0, 0}), two, two * 1.1, two * 0.9, vec({-1, -1}), vec({1, 1})),
               std::invalid_argument);
  EXPECT_THROW(layer.project(vec({0, 0}), two, two * 0.9, two * 1.1, vec({1, 1}), vec({-1, -1})),
               std::invalid_argument);
}

TEST(Project, ProblemMustMatchLayer) {
  const auto m = build_sensitivity(fixture::chain(2, 0.01, 0.01));
  const auto other = build_sensitivity(fixture::chain(2, 0.01, 0.01));
  const SafetyLayer<double> layer(m, {1, 2});
  ProjectionProblem<double> prob;
  prob.model = &other;
  prob.controllable = {1, 2};
  prob.q_proposed = vec({0, 0});
  prob.p_now = vec({0, 0});
  prob.v_lower = vec({0.9, 0.9});
  prob.v_upper = vec({1.1, 1.1});
  prob.q_lower = vec({-1, -1});
  prob.q_upper = vec({1, 1});
  EXPECT_THROW(layer.project(prob), std::invalid_argument);
  prob.model = &m;
  EXPECT_EQ(layer.project(prob).status, ProjectionStatus::Optimal);
  EXPECT_EQ(project(prob, 1e-9).status, ProjectionStatus::Optimal);
}

TEST(ProjectOracle, MatchesEnumerationOnRandomInstances) {
  std::mt19937_64 rng(77);
  int feasible = 0, multi = 0, relaxed = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = fixture::random_qp(rng);
    const auto exact = oracle::enumerate_qp(in.A, in.c, in.lo, in.hi, in.qlo, in.qhi, in.qh);
    const SafetyLayer<double> layer(*in.model, in.controllable);
    const auto r = layer.project(in.qh, in.c, in.lo, in.hi, in.qlo, in.qhi);
    if (!exact) {
      EXPECT_EQ(r.status, ProjectionStatus::Relaxed) << trial;
      ++relaxed;
      continue;
    }
    ++feasible;
    multi += exact->active_rows >= 2;
    EXPECT_EQ(r.status, ProjectionStatus::Optimal) << trial;
    EXPECT_LT((r.q_safe - exact->q).cwiseAbs().maxCoeff(), 1e-6) << trial;
  }
  EXPECT_GT(feasible, 100);
  EXPECT_GT(multi, 20);
  EXPECT_GT(relaxed, 0);
}

TEST(ProjectProperties, IdempotentAndNonExpansive) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = fixture::random_qp(rng);
    const SafetyLayer<double> layer(*in.model, in.controllable);
    const auto a = layer.project(in.qh, in.c, in.lo, in.hi, in.qlo, in.qhi);
    if (a.status != ProjectionStatus::Optimal) continue;
    const auto again = layer.project(a.q_safe, in.c, in.lo, in.hi, in.qlo, in.qhi);
    EXPECT_LT((again.q_safe - a.q_safe).cwiseAbs().maxCoeff(), 1e-9);

    Eigen::VectorXd other = in.qh;
    for (Eigen::Index k = 0; k < other.size(); ++k) other(k) += g(rng);
    const auto b = layer.project(other, in.c, in.lo, in.hi, in.qlo, in.qhi);
    EXPECT_LE((a.q_safe - b.q_safe).norm(), (in.qh - other).norm() + 1e-9);
  }
}

TEST(ProjectProperties, SafeActionsSatisfyLinearBounds) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  const auto m = build_sensitivity(f);
  const SafetyLayer<double> layer(m, f.controllable());
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd p = -(0.5 + 0.7 * std::abs(u(rng))) * f.p_load();
    Eigen::VectorXd qb = -(0.5 + 0.7 * std::abs(u(rng))) * f.q_load();
    Eigen::VectorXd qh(9);
    for (int k = 0; k < 9; ++k) qh(k) = 0.3 * u(rng);
    const auto r = layer.project(qh, layer.offset(p, qb), f.v_lower(), f.v_upper(), f.q_min(), f.q_max());
    if (r.status != ProjectionStatus::Optimal) continue;
    Injections<double> inj{p, qb + scatter_controllable<double>(r.q_safe, f.controllable(), 12)};
    EXPECT_LE(check_safety(m, inj, f.v_lower(), f.v_upper()).maxCoeff(), 1e-6);
    EXPECT_TRUE((r.q_safe.array() >= f.q_min().array() - 1e-12).all());
    EXPECT_TRUE((r.q_safe.array() <= f.q_max().array() + 1e-12).all());
  }
}

TEST(ProjectProperties, TwoActiveRows) {
  // both buses of a chain bind; solved by hand: q = (0.35, 0.15), nu = (22.5, 10)
  const auto m = build_sensitivity(fixture::chain(2, 0.01, 0.01));
  const SafetyLayer<double> layer(m, {1, 2});
  const Eigen::VectorXd c = vec({1.0, 1.0});
  const Eigen::VectorXd box = vec({2.0, 2.0});
  const auto r = layer.project(vec({1.0, 1.0}), c, vec({0.9, 0.9}), vec({1.01, 1.013}), -box, box);
  EXPECT_EQ(r.status, ProjectionStatus::Optimal);
  EXPECT_LT((r.q_safe - vec({0.35, 0.15})).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((r.multipliers - vec({22.5, 10.0})).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(r.active_set.size(), 2u);
  // projecting onto either row alone leaves the other violated
  const auto only_first = layer.project(vec({1.0, 1.0}), c, vec({0.9, 0.9}), vec({1.01, 2.0}), -box, box);
  EXPECT_GT((c + layer.sensitivity() * only_first.q_safe)(1), 1.013 + 1e-4);
}

TEST(ProjectWarmStart, SameAnswerFewerIterations) {
  std::mt19937_64 rng(12);
  int cold_total = 0, warm_total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = fixture::random_qp(rng);
    const SafetyLayer<double> layer(*in.model, in.controllable);
    WarmStart<double> warm;
    const auto first = layer.project(in.qh, in.c, in.lo, in.hi, in.qlo, in.qhi, &warm);
    if (first.status != ProjectionStatus::Optimal) continue;
    const Eigen::VectorXd qh2 = in.qh * 1.001;
    const auto cold = layer.project(qh2, in.c, in.lo, in.hi, in.qlo, in.qhi);
    const auto hot = layer.project(qh2, in.c, in.lo, in.hi, in.qlo, in.qhi, &warm);
    EXPECT_LT((cold.q_safe - hot.q_safe).cwiseAbs().maxCoeff(), 1e-8);
    cold_total += cold.iterations;
    warm_total += hot.iterations;
  }
  EXPECT_LE(warm_total, cold_total);
}

TEST(CheckSafety, Examples) {
  const auto m = build_sensitivity(fixture::chain(1, 0.01, 0.01));
  auto inj = Injections<double>::zero(1);
  EXPECT_EQ(check_safety(m, inj, vec({0.9}), vec({1.1}))(0), 0.0);
  inj.q(0) = 10.0;
  EXPECT_NEAR(check_safety(m, inj, vec({0.9}), vec({1.1}))(0), 0.1, 1e-12);
  inj.q(0) = -10.0;
  EXPECT_NEAR(check_safety(m, inj, vec({0.9}), vec({1.1}))(0), 0.1, 1e-12);
}

TEST(Project, LongDoubleInstantiation) {
  const auto m = build_sensitivity<long double>(fixture::chain(1, 0.01, 0.01));
  const SafetyLayer<long double> layer(m, {1});
  using V = Vector<long double>;
  const auto r = layer.project(V::Constant(1, 1.0L), V::Constant(1, 1.0L), V::Constant(1, 0.9L),
                               V::Constant(1, 1.01L), V::Constant(1, -1.0L), V::Constant(1, 1.0L));
  EXPECT_NEAR(static_cast<double>(r.q_safe(0)), 0.5, 1e-12);
}
