#include <gtest/gtest.h>

#include <random>
#include <set>

#include "p2pgne/graph.hpp"
#include "p2pgne/solver.hpp"
#include "support.hpp"

using namespace p2pgne;

namespace {

std::vector<WeightedEdge> ring_edges(int n, double w) {
  std::vector<WeightedEdge> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, w});
  e.push_back({0, n - 1, w});
  return e;
}

using fixture::error_code;

}  // namespace

TEST(BuildGraph, TwoNodes) {
  const std::vector<WeightedEdge> edges{{0, 1, 0.5}};
  const std::vector<double> self{0.5, 0.5};
  const TradingGraph g = build_graph(2, edges, self);
  EXPECT_DOUBLE_EQ(g.w0(), 1.0);
  EXPECT_EQ(g.neighbors(0), std::vector<int>{1});
  ASSERT_EQ(g.ordered_edges().size(), 2u);
  EXPECT_EQ(g.ordered_edges()[0], (OrderedEdge{0, 1}));
  EXPECT_EQ(g.ordered_edges()[1], (OrderedEdge{1, 0}));
  EXPECT_DOUBLE_EQ(g.consensus_gain(), 1.0);
}

TEST(BuildGraph, SixRingHasUnitRowSums) {
  const std::vector<double> self(6, 1.0 / 3.0);
  const TradingGraph g = build_graph(6, ring_edges(6, 1.0 / 3.0), self);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(g.weights().row(i).sum(), 1.0, 1e-15);
    EXPECT_EQ(g.degree(i), 2);
  }
  EXPECT_EQ(g.neighbors(0), (std::vector<int>{1, 5}));
  EXPECT_EQ(g.ordered_edges().size(), 12u);
}

TEST(BuildGraph, RejectsBadInput) {
  const std::vector<WeightedEdge> path{{0, 1, 0.5}, {1, 2, 0.5}};
  EXPECT_EQ(error_code([&] { build_graph(3, path, std::vector<double>{0.5, 0.5, 0.5}); }), ErrorCode::RowSumMismatch);

  const std::vector<WeightedEdge> split{{0, 1, 0.5}, {2, 3, 0.5}};
  EXPECT_EQ(error_code([&] { build_graph(4, split, std::vector<double>(4, 0.5)); }), ErrorCode::DisconnectedGraph);

  const std::vector<WeightedEdge> one{{0, 1, 1.0}};
  EXPECT_EQ(error_code([&] { build_graph(2, one, std::vector<double>{0.0, 0.0}); }), ErrorCode::NonPositiveSelfWeight);

  const std::vector<WeightedEdge> dup{{0, 1, 0.5}, {1, 0, 0.5}};
  EXPECT_EQ(error_code([&] { build_graph(2, dup, std::vector<double>{0.5, 0.5}); }), ErrorCode::InvalidEdge);

  const std::vector<WeightedEdge> loop{{0, 0, 0.5}};
  EXPECT_EQ(error_code([&] { build_graph(1, loop, std::vector<double>{0.5}); }), ErrorCode::InvalidEdge);
}

TEST(BuildGraph, SingleNodeIsValid) {
  const TradingGraph g = build_graph(1, {}, std::vector<double>{1.0});
  EXPECT_EQ(g.size(), 1);
  EXPECT_TRUE(g.ordered_edges().empty());
}

TEST(Spectrum, TwoNodes) {
  const std::vector<WeightedEdge> edges{{0, 1, 0.5}};
  const auto s = laplacian_spectrum(build_graph(2, edges, std::vector<double>{0.5, 0.5}));
  ASSERT_EQ(s.eigenvalues.size(), 2u);
  EXPECT_NEAR(s.eigenvalues[0], 0.0, 1e-14);
  EXPECT_NEAR(s.eigenvalues[1], 1.0, 1e-14);
}

TEST(Spectrum, RingLargestWithinTwiceRowSum) {
  const TradingGraph g = build_graph(6, ring_edges(6, 1.0 / 3.0), std::vector<double>(6, 1.0 / 3.0));
  const auto s = laplacian_spectrum(g);
  EXPECT_NEAR(s.eigenvalues.front(), 0.0, 1e-10);
  EXPECT_LE(s.largest(), 2.0 * g.w0());
  EXPECT_GE(s.largest(), g.w0() - 1e-12);
  // ring eigenvalues (2/3)(1 - cos(2 pi k / 6))
  EXPECT_NEAR(s.largest(), 4.0 / 3.0, 1e-12);
}

TEST(Spectrum, CompleteGraphDoubleEigenvalue) {
  const std::vector<WeightedEdge> k3{{0, 1, 1.0 / 3.0}, {0, 2, 1.0 / 3.0}, {1, 2, 1.0 / 3.0}};
  const auto s = laplacian_spectrum(build_graph(3, k3, std::vector<double>(3, 1.0 / 3.0)));
  EXPECT_NEAR(s.eigenvalues[0], 0.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues[1], 1.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues[2], 1.0, 1e-12);
}

TEST(Epsilon, HandValues) {
  LaplacianSpectrum s{{0.0, 1.0}};
  EXPECT_NEAR(epsilon_factor(s, 1.0, std::vector<double>{0.8}), 0.2, 1e-15);
  EXPECT_NEAR(epsilon_factor(s, 1.0, std::vector<double>{0.8, 0.4}), 0.6, 1e-15);
}

TEST(Epsilon, ReferenceScheduleOnRing) {
  const TradingGraph g = build_graph(6, ring_edges(6, 1.0 / 3.0), std::vector<double>(6, 1.0 / 3.0));
  const auto rho = StepSchedule::reference().horizon(720);
  const double eps = epsilon_factor(laplacian_spectrum(g), g.consensus_gain(), rho);
  EXPECT_GT(eps, 0.0);
  EXPECT_LT(eps, 1.0);
  // the smallest step and the smallest positive eigenvalue (1/3) give the max
  EXPECT_NEAR(eps, 1.0 - rho.back() / 3.0, 1e-12);
}

TEST(Epsilon, Errors) {
  LaplacianSpectrum s{{0.0, 1.0}};
  EXPECT_EQ(error_code([&] { epsilon_factor(s, 1.0, std::vector<double>{}); }), ErrorCode::EmptyHorizon);
  EXPECT_EQ(error_code([&] { epsilon_factor(s, 1.0, std::vector<double>{1.0}); }), ErrorCode::StepOutOfRange);
  EXPECT_EQ(error_code([&] { epsilon_factor(s, 1.0, std::vector<double>{0.5, -0.1}); }), ErrorCode::StepOutOfRange);
}

TEST(Epsilon, SingleNodeHasNoConsensusError) {
  LaplacianSpectrum s{{0.0}};
  EXPECT_EQ(epsilon_factor(s, 1.0, std::vector<double>{0.5}), 0.0);
}

TEST(GraphProperties, RandomGraphs) {
  std::mt19937_64 rng(42);
  const auto rho = StepSchedule::reference().horizon(720);
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 9;
    const TradingGraph g = fixture::random_graph(rng, n, 0.4);
    const auto spec = laplacian_spectrum(g);
    const double eps = epsilon_factor(spec, g.consensus_gain(), rho);
    EXPECT_GT(eps, 0.0) << "graph " << k;
    EXPECT_LT(eps, 1.0) << "graph " << k;

    const Eigen::MatrixXd L = g.laplacian();
    EXPECT_LE((Eigen::RowVectorXd::Ones(n) * L).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((L - L.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE(spec.largest(), 2.0 * g.w0() + 1e-12);

    // neighbor sets rebuilt from the ordered edges
    std::vector<std::vector<int>> rebuilt(static_cast<std::size_t>(n));
    std::set<std::pair<int, int>> seen;
    for (const auto& e : g.ordered_edges()) {
      rebuilt[static_cast<std::size_t>(e.from)].push_back(e.to);
      seen.insert({e.from, e.to});
    }
    std::size_t total = 0;
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(rebuilt[static_cast<std::size_t>(i)], g.neighbors(i));
      total += g.neighbors(i).size();
    }
    EXPECT_EQ(g.ordered_edges().size(), total);
    for (const auto& [a, b] : seen) EXPECT_TRUE(seen.count({b, a}));
    EXPECT_TRUE(std::is_sorted(g.ordered_edges().begin(), g.ordered_edges().end(), [](auto x, auto y) {
      return x.from != y.from ? x.from < y.from : x.to < y.to;
    }));
    for (std::size_t r = 0; r < g.ordered_edges().size(); ++r) {
      const auto e = g.ordered_edges()[r];
      EXPECT_EQ(g.edge_row(e.from, e.to), static_cast<int>(r));
      EXPECT_EQ(g.neighbors(e.from)[static_cast<std::size_t>(g.neighbor_slot(e.from, e.to))], e.to);
    }
  }
}
