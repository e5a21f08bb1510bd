#include <gtest/gtest.h>

#include <random>

#include "p2pgne/qp.hpp"
#include "support.hpp"

using namespace p2pgne;

namespace {

// Strictly convex QP with box rows, a few general rows and optionally one equality.
// The origin is always feasible.
QuadraticProgram random_qp(std::mt19937_64& rng, int n, int general, bool equality) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QuadraticProgram qp;
  Eigen::MatrixXd B(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) B(a, b) = u(rng);
  qp.H = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  qp.f = 3.0 * Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
  for (int k = 0; k < n; ++k) qp.rows.push_back({{{k, 1.0}}, -0.5 - std::abs(u(rng)), 0.5 + std::abs(u(rng))});
  for (int g = 0; g < general; ++g) {
    LinearRow row;
    for (int k = 0; k < n; ++k) row.terms.emplace_back(k, u(rng));
    if (g % 2 == 0) {
      row.hi = 0.3 * std::abs(u(rng));
    } else {
      row.lo = -0.3 * std::abs(u(rng));
      row.hi = 0.3 * std::abs(u(rng));
    }
    qp.rows.push_back(row);
  }
  if (equality) {
    LinearRow row;
    for (int k = 0; k < n; ++k) row.terms.emplace_back(k, 1.0);
    row.lo = row.hi = 0.0;
    qp.rows.push_back(row);
  }
  return qp;
}

Eigen::VectorXd zero_multipliers(const QuadraticProgram& qp) {
  return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.rows.size()));
}

}  // namespace

TEST(Qp, UnconstrainedMinimum) {
  QuadraticProgram qp;
  qp.H = (Eigen::MatrixXd(2, 2) << 2, 0, 0, 4).finished();
  qp.f = (Eigen::VectorXd(2) << -2, 4).finished();
  const auto sol = interior_point_qp(qp);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-12);
  EXPECT_NEAR(sol.x[1], -1.0, 1e-12);
}

TEST(Qp, BoxClampForDiagonalHessian) {
  QuadraticProgram qp;
  qp.H = Eigen::MatrixXd::Identity(3, 3);
  qp.f = (Eigen::VectorXd(3) << -5, 0.25, 7).finished();
  for (int k = 0; k < 3; ++k) qp.rows.push_back({{{k, 1.0}}, -1.0, 1.0});
  const auto sol = interior_point_qp(qp);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-12);
  EXPECT_NEAR(sol.x[1], -0.25, 1e-12);
  EXPECT_NEAR(sol.x[2], -1.0, 1e-12);
  EXPECT_NEAR(sol.y[0], 4.0, 1e-10);  // upper side: positive multiplier
  EXPECT_NEAR(sol.y[2], -6.0, 1e-10);
  EXPECT_LE(qp_residual(qp, sol.x, sol.y).max(), 1e-10);
}

TEST(Qp, DegenerateVertex) {
  // three active rows meet at the origin in two dimensions
  QuadraticProgram qp;
  qp.H = Eigen::MatrixXd::Identity(2, 2);
  qp.f = (Eigen::VectorXd(2) << 1, 1).finished();
  qp.rows.push_back({{{0, 1.0}}, 0.0, kInf});
  qp.rows.push_back({{{1, 1.0}}, 0.0, kInf});
  qp.rows.push_back({{{0, 1.0}, {1, 1.0}}, 0.0, kInf});
  const auto sol = interior_point_qp(qp);
  EXPECT_LE(sol.x.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(qp_residual(qp, sol.x, sol.y).max(), 1e-10);
  const auto ref = enumerate_active_sets(qp);
  EXPECT_LE((ref.x - sol.x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Qp, MatchesEnumeration) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 60; ++k) {
    const int n = 2 + k % 4;
    const QuadraticProgram qp = random_qp(rng, n, 1 + k % 3, k % 2 == 0);
    const auto ipm = interior_point_qp(qp);
    const auto ref = enumerate_active_sets(qp);
    EXPECT_LE((ipm.x - ref.x).cwiseAbs().maxCoeff(), 1e-8) << "case " << k;
    EXPECT_LE(qp_residual(qp, ipm.x, ipm.y).max(), 1e-9) << "case " << k;
    EXPECT_LE(qp_residual(qp, ref.x, ref.y).max(), 1e-9) << "case " << k;
  }
}

TEST(Qp, ActiveSetWarmStartReproducesSolution) {
  std::mt19937_64 rng(32);
  for (int k = 0; k < 30; ++k) {
    const QuadraticProgram qp = random_qp(rng, 4, 2, true);
    const auto cold = interior_point_qp(qp);
    std::vector<int> priority(qp.rows.size());
    for (std::size_t r = 0; r < priority.size(); ++r) priority[r] = static_cast<int>(r);
    const auto warm = solve_with_active_set(qp, cold.active, priority);
    ASSERT_TRUE(warm.has_value()) << "case " << k;
    EXPECT_LE((warm->x - cold.x).cwiseAbs().maxCoeff(), 1e-10);

    const auto primal = primal_active_set(qp, Eigen::VectorXd::Zero(4), std::vector<RowSide>(qp.rows.size()), {});
    ASSERT_TRUE(primal.has_value()) << "case " << k;
    EXPECT_LE((primal->x - cold.x).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(qp_residual(qp, primal->x, primal->y).max(), 1e-9);
  }
}

TEST(Qp, WrongActiveSetIsRejected) {
  QuadraticProgram qp;
  qp.H = Eigen::MatrixXd::Identity(1, 1);
  qp.f = (Eigen::VectorXd(1) << -0.5).finished();
  qp.rows.push_back({{{0, 1.0}}, -1.0, 1.0});
  // claiming the upper bound is active needs a negative multiplier on it
  EXPECT_FALSE(solve_with_active_set(qp, {RowSide::Upper}, {0}).has_value());
  EXPECT_TRUE(solve_with_active_set(qp, {RowSide::Inactive}, {0}).has_value());
}

TEST(Qp, ResidualOfFeasibleZero) {
  QuadraticProgram qp;
  qp.H = Eigen::MatrixXd::Identity(2, 2);
  qp.f = Eigen::VectorXd::Zero(2);
  qp.rows.push_back({{{0, 1.0}}, -1.0, 1.0});
  EXPECT_EQ(qp_residual(qp, Eigen::VectorXd::Zero(2), zero_multipliers(qp)).max(), 0.0);
}

TEST(Qp, Errors) {
  QuadraticProgram qp;
  qp.H = Eigen::MatrixXd::Identity(1, 1);
  qp.f = Eigen::VectorXd::Zero(1);
  qp.rows.push_back({{{0, 1.0}}, 1.0, -1.0});
  EXPECT_EQ(fixture::error_code([&] { interior_point_qp(qp); }), ErrorCode::Infeasible);
  EXPECT_EQ(fixture::error_code([&] { enumerate_active_sets(qp); }), ErrorCode::Infeasible);

  QuadraticProgram split;
  split.H = Eigen::MatrixXd::Identity(1, 1);
  split.f = Eigen::VectorXd::Zero(1);
  split.rows.push_back({{{0, 1.0}}, 2.0, 3.0});
  split.rows.push_back({{{0, 1.0}}, -3.0, -2.0});
  EXPECT_EQ(fixture::error_code([&] { enumerate_active_sets(split); }), ErrorCode::Infeasible);
  EXPECT_TRUE(fixture::error_code([&] { interior_point_qp(split); }).has_value());

  InteriorPointOptions opt;
  opt.initial_x = Eigen::VectorXd::Zero(3);
  EXPECT_EQ(fixture::error_code([&] { interior_point_qp(qp, opt); }), ErrorCode::Infeasible);
}
