#include <gtest/gtest.h>

#include <random>

#include "p2pgne/metrics.hpp"
#include "support.hpp"

using namespace p2pgne;

namespace {

Game unit_pair(bool storage) {
  Game g;
  g.graph = fixture::ring_graph(2);
  g.aTr = 0.5;
  for (int i = 0; i < 2; ++i) {
    ProsumerParams p;
    p.aG = p.aC = p.aD = 0.5;
    p.bG = 0.0;
    p.pGmin = -1.0;
    p.pGmax = 1.0;
    p.pCmax = p.pDmax = storage ? 1.0 : 0.0;
    p.eCap = 1e6;
    p.pMgBox = 1.0;
    p.trades = {{-1.0, 1.0, 0.5}};
    g.prosumers.push_back(p);
  }
  g.schedule.cMg = {1.0};
  g.schedule.load = {{0.0}, {0.0}};
  g.schedule.pMgMin = -2.0;
  g.schedule.pMgMax = 2.0;
  return g;
}

double epsilon_of(const Game& g, const StepSchedule& rho, int T) {
  return epsilon_factor(laplacian_spectrum(g.graph), g.graph.consensus_gain(), rho.horizon(T));
}

// Trajectory whose played actions are the given stacked decisions.
Trajectory played_trajectory(const Game& g, const std::vector<StackedDecision>& xs) {
  Trajectory traj;
  for (std::size_t r = 0; r < xs.size(); ++r) {
    RoundRecord rec;
    rec.round = static_cast<long>(r);
    for (int i = 0; i < g.size(); ++i) {
      ProsumerSnapshot p;
      p.x = p.played = Eigen::VectorXd(xs[r].block(i));
      p.lambda = Eigen::VectorXd::Zero(2 + static_cast<Eigen::Index>(g.graph.ordered_edges().size()));
      rec.prosumers.push_back(p);
    }
    traj.rounds.push_back(rec);
  }
  return traj;
}

}  // namespace

TEST(Kappa, UnitBoxes) {
  const Game g = unit_pair(true);
  const auto k = kappa_bounds(g, build_all_blocks(g));
  EXPECT_NEAR(k.kappa1, std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(k.kappa6, std::sqrt(5.0), 1e-15);
  const Game flat = unit_pair(false);
  EXPECT_NEAR(kappa_bounds(flat, build_all_blocks(flat)).kappa1, std::sqrt(3.0), 1e-15);
}

TEST(Kappa, SampledFeasiblePointsStayBelow) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const Game g = fixture::random_game(rng, fixture::random_graph(rng, 2 + k % 5), {6, true, true});
    const auto blocks = build_all_blocks(g);
    const auto kap = kappa_bounds(g, blocks);
    const Layout layout = g.layout();
    for (int s = 0; s < 1000; ++s) {
      const int t = s % g.horizon();
      StackedDecision x(layout);
      for (int i = 0; i < g.size(); ++i) {
        const auto& p = g.prosumers[static_cast<std::size_t>(i)];
        const auto set = local_feasible_set(p, p.sMin + u(rng) * (p.sMax - p.sMin), g.schedule.dt);
        Decision d(g.graph.degree(i));
        d.pG() = set.gen.lo + u(rng) * (set.gen.hi - set.gen.lo);
        d.pMg() = set.grid.lo + u(rng) * (set.grid.hi - set.grid.lo);
        for (int l = 0; l < d.trade_count(); ++l) {
          const auto& box = set.trades[static_cast<std::size_t>(l)];
          d.pTr(l) = box.lo + u(rng) * (box.hi - box.lo);
        }
        // bias towards the polygon's vertices, where the norms peak
        const auto& verts = set.storage.vertices();
        const Point2 v = verts[static_cast<std::size_t>(s) % verts.size()];
        const double w = u(rng) < 0.5 ? 1.0 : u(rng);
        d.pC() = w * v[0];
        d.pD() = w * v[1];
        x.set(i, d);
      }
      const Eigen::VectorXd F = pseudo_gradient(t, x, g);
      for (int i = 0; i < g.size(); ++i) {
        const auto& blk = blocks[static_cast<std::size_t>(i)];
        const Eigen::VectorXd xi = x.block(i);
        EXPECT_LE(xi.norm(), kap.kappa1 + 1e-12);
        EXPECT_LE(blk.g(xi).norm(), kap.kappa2 + 1e-12);
        EXPECT_LE(F.segment(layout.offset(i), layout.dim(i)).norm(), kap.kappa3 + 1e-12);
        EXPECT_LE(std::abs(blk.G.dot(xi) - g.load(i, t)), kap.kappa5 + 1e-12);
      }
    }
    for (const auto& blk : blocks) {
      EXPECT_LE(Eigen::JacobiSVD<Eigen::MatrixXd>(blk.A).singularValues()(0), kap.kappa4 + 1e-12);
      EXPECT_LE(blk.G.norm(), kap.kappa6 + 1e-12);
    }
  }
}

TEST(Regret, ZeroWhenPlayingTheEquilibrium) {
  std::mt19937_64 rng(62);
  const Game g = fixture::random_game(rng, fixture::random_graph(rng, 4), {8, true, true});
  const std::vector<std::vector<double>> path(8, fixture::initial_socs(g));
  const auto seq = vgne_sequence(g, path);
  std::vector<StackedDecision> xs;
  for (const auto& s : seq.solutions) xs.push_back(s.xStar);
  const auto rep = regret(g, played_trajectory(g, xs), seq.solutions, StepSchedule::reference());
  for (const auto& series : rep.regret)
    for (double v : series) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(rep.phiT, seq.phiT, 1e-12);
  EXPECT_EQ(rep.horizon(), 8);

  EXPECT_EQ(fixture::error_code([&] {
              regret(g, played_trajectory(g, {xs[0]}), seq.solutions, StepSchedule::reference());
            }),
            ErrorCode::LengthMismatch);
}

TEST(Regret, GenerationOffset) {
  Game g;
  g.graph = build_graph(1, {}, std::vector<double>{1.0});
  ProsumerParams p;
  p.aG = 0.3;
  p.bG = 0.8;
  p.pGmax = 10.0;
  p.pMgBox = 5.0;
  g.prosumers = {p};
  g.schedule.cMg = {0.1};
  g.schedule.load = {{4.0}};
  g.schedule.pMgMin = -5.0;
  g.schedule.pMgMax = 5.0;
  const auto seq = vgne_sequence(g, {{0.5}});
  const double delta = 0.37;
  StackedDecision x = seq.solutions[0].xStar;
  const double pg = x.vec()[Decision::kGen];
  x.vec()[Decision::kGen] += delta;
  const auto rep = regret(g, played_trajectory(g, {x}), seq.solutions, StepSchedule::reference());
  EXPECT_NEAR(rep.regret[0][0], p.aG * ((pg + delta) * (pg + delta) - pg * pg) + p.bG * delta, 1e-12);
}

TEST(Regret, FrozenMatchesOnlineOnStaticScenario) {
  std::mt19937_64 rng(63);
  const int T = 150;
  const Game g = fixture::random_game(rng, fixture::random_graph(rng, 4), {T, false, false});
  const std::vector<std::vector<double>> path(T, fixture::initial_socs(g));
  const auto seq = vgne_sequence(g, path);
  EXPECT_LE(seq.phiT, 1e-12);

  SolverConfig online;
  SolverConfig frozen;
  frozen.mode = RunMode::Frozen;
  frozen.frozenInterval = 0;
  frozen.frozenMaxIterations = T;
  frozen.frozenTolerance = 0.0;
  frozen.keepRounds = true;
  const Trajectory a = run_horizon(g, online);
  const Trajectory b = run_horizon(g, frozen);
  ASSERT_EQ(b.rounds.size(), static_cast<std::size_t>(T));
  const auto ra = regret(g, a, seq.solutions, online.rho);
  const auto rb = regret(g, b, seq.solutions, frozen.rho);
  for (int i = 0; i < g.size(); ++i) {
    for (int t = 0; t < T; ++t) {
      EXPECT_NEAR(ra.regret[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)],
                  rb.regret[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)], 1e-9);
    }
  }
}

TEST(Regret, BoundCurveShape) {
  std::mt19937_64 rng(64);
  const Game g = fixture::random_game(rng, fixture::ring_graph(3), {30, true, true});
  const Trajectory traj = run_horizon(g, {});
  const auto seq = vgne_sequence(g, traj.socPath);
  const StepSchedule rho = StepSchedule::reference();
  const auto rep = regret(g, traj, seq.solutions, rho);
  ASSERT_EQ(rep.boundCurve.size(), 30u);
  double phi = 0.0, sr = 0.0;
  for (int t = 1; t <= 30; ++t) {
    if (t > 1) {
      phi += (seq.solutions[static_cast<std::size_t>(t - 1)].xStar.vec() -
              seq.solutions[static_cast<std::size_t>(t - 2)].xStar.vec())
                 .norm();
    }
    sr += std::sqrt(rho(t));
    const double expected = std::sqrt(t * ((phi + 1.0) / (rho(t) * rho(t)) + sr));
    EXPECT_NEAR(rep.boundCurve[static_cast<std::size_t>(t - 1)], expected, 1e-9 * expected);
  }
}

TEST(Sublinearity, KnownSlopes) {
  std::vector<std::pair<double, double>> linear, root;
  for (double T : {90.0, 180.0, 360.0, 720.0}) {
    linear.emplace_back(T, 3.0 * T);
    root.emplace_back(T, 3.0 * std::sqrt(T));
  }
  EXPECT_NEAR(sublinearity_fit(linear).slope, 1.0, 1e-12);
  EXPECT_NEAR(sublinearity_fit(root).slope, 0.5, 1e-12);
  EXPECT_NEAR(sublinearity_fit(linear).intercept, std::log(3.0), 1e-12);
  EXPECT_FALSE(sublinearity_fit(root).usedShift);

  EXPECT_EQ(fixture::error_code([] { sublinearity_fit({{90.0, 1.0}, {180.0, 2.0}}); }), ErrorCode::InsufficientData);
  const auto shifted = sublinearity_fit({{90.0, -1.0}, {180.0, 2.0}, {360.0, 5.0}});
  EXPECT_TRUE(shifted.usedShift);
}

TEST(Decay, SyntheticSeries) {
  RegretReport rep;
  rep.average = {{4.0, 3.0, 2.0, 2.5, 1.0}, {1.0, 1.0, 1.0, 1.0, 1.0}};
  rep.regret = rep.average;
  const auto d = average_regret_decay(rep, 1, 5, 2);
  EXPECT_DOUBLE_EQ(d.ratio, 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(d.worstRipple, 2.5 / 2.0 - 1.0);
  EXPECT_TRUE(d.positive);

  rep.average = {{4.0, 3.0, -2.0, 1.0, 1.0}};
  rep.regret = rep.average;
  EXPECT_FALSE(average_regret_decay(rep, 1, 5, 2).positive);
}

TEST(Lemmas, MarginsOnRandomRuns) {
  std::mt19937_64 rng(65);
  const StepSchedule rho = StepSchedule::reference();
  for (int k = 0; k < 4; ++k) {
    const int T = 150;
    const Game g = fixture::random_game(rng, fixture::random_graph(rng, 3 + k), {T, true, true});
    const auto kap = kappa_bounds(g, build_all_blocks(g));
    const double eps = epsilon_of(g, rho, T);
    const Trajectory traj = run_horizon(g, {});
    const auto m = lemma_margins(traj, kap, eps, rho, g.size());
    EXPECT_GE(m.min3, -1e-9);
    EXPECT_GE(m.min4, 0.0);
    EXPECT_EQ(m.lemma3.size(), static_cast<std::size_t>(T + 1));
    EXPECT_EQ(m.lemma4Lambda.size(), static_cast<std::size_t>(T));

    // one-step form of the estimation-error recursion
    const double rn = std::sqrt(static_cast<double>(g.size()));
    for (int r = 0; r < T; ++r) {
      const auto& before = r == 0 ? traj.initial : traj.rounds[static_cast<std::size_t>(r - 1)];
      const auto& after = traj.rounds[static_cast<std::size_t>(r)];
      for (int i = 0; i < g.size(); ++i) {
        const double lhs = after.prosumers[static_cast<std::size_t>(i)].errorNorm;
        const double rhs = eps * before.prosumers[static_cast<std::size_t>(i)].errorNorm + 2.0 * rn * kap.kappa1 * rho(r + 1);
        EXPECT_LE(lhs, rhs + 1e-9) << "round " << r << " prosumer " << i;
      }
    }
  }
}

TEST(Lemmas, SingleNodeHasNoEstimationError) {
  std::mt19937_64 rng(66);
  const Game g = fixture::random_game(rng, build_graph(1, {}, std::vector<double>{1.0}), {20, true, true});
  const StepSchedule rho = StepSchedule::reference();
  const Trajectory traj = run_horizon(g, {});
  const auto kap = kappa_bounds(g, build_all_blocks(g));
  const auto m = lemma_margins(traj, kap, epsilon_of(g, rho, 20), rho, 1);
  for (std::size_t r = 0; r < m.lemma3.size(); ++r) {
    EXPECT_EQ(traj.rounds.empty() ? 0.0 : (r == 0 ? traj.initial : traj.rounds[r - 1]).prosumers[0].errorNorm, 0.0);
    EXPECT_GE(m.lemma3[r][0], 0.0);
  }
}

TEST(Constants, DeltaFormulas) {
  std::mt19937_64 rng(67);
  const Game g = fixture::random_game(rng, fixture::ring_graph(4), {3, true, true});
  const auto kap = kappa_bounds(g, build_all_blocks(g));
  const auto seq = vgne_sequence(g, std::vector<std::vector<double>>(3, fixture::initial_socs(g)));
  const auto tc = theorem_constants(g, kap, 0.5, seq.solutions);
  double vl = 0.0, vm = 0.0;
  for (const auto& s : seq.solutions) {
    vl = std::max(vl, s.lambdaStar.norm());
    for (double mu : s.muStar) vm = std::max(vm, std::abs(mu));
  }
  EXPECT_DOUBLE_EQ(tc.varthetaLambda, vl);
  EXPECT_DOUBLE_EQ(tc.varthetaMu, vm);
  EXPECT_DOUBLE_EQ(tc.deltaLambda, kap.kappa4 * (3.0 * 2.0 * kap.kappa2 + vl));
  EXPECT_DOUBLE_EQ(tc.deltaMu, kap.kappa6 * (3.0 * 2.0 * kap.kappa5 + vm));
  EXPECT_GT(tc.pi1, 0.0);
  EXPECT_GT(tc.pi2, 0.0);
  EXPECT_GT(tc.pi3, 0.0);
  EXPECT_DOUBLE_EQ(tc.c, g.graph.consensus_gain());
}
