#pragma once

// End-to-end evaluation of a scenario: run the tracker, solve the oracle along
// the played state-of-charge path, and compute regret and bound diagnostics.

#include <algorithm>
#include <vector>

#include "p2pgne/constraints.hpp"
#include "p2pgne/graph.hpp"
#include "p2pgne/metrics.hpp"
#include "p2pgne/oracle.hpp"
#include "p2pgne/scenario.hpp"
#include "p2pgne/solver.hpp"

namespace p2pgne {

struct RunResult {
  Trajectory trajectory;
  VgneSequence oracle;
  RegretReport regret;  // online mode only
  KappaBounds kappas;
  LaplacianSpectrum spectrum;
  TheoremConstants constants;
  LemmaMargins margins;
  double oracleMaxKkt = 0.0;
};

/// epsilon over rho(1..rounds).
inline double scenario_epsilon(const Scenario& sc, const LaplacianSpectrum& spectrum, long rounds) {
  return epsilon_factor(spectrum, sc.game.graph.consensus_gain(), sc.solver.rho.horizon(std::max(1L, rounds)));
}

inline RunResult run_scenario(const Scenario& sc, const ReadObserver& observer = {}) {
  RunResult res;
  const Game& game = sc.game;
  const auto blocks = build_all_blocks(game);
  res.trajectory = run_horizon(game, sc.solver, observer);
  res.kappas = kappa_bounds(game, blocks);
  res.spectrum = laplacian_spectrum(game.graph);
  const double eps = scenario_epsilon(sc, res.spectrum, res.trajectory.iterations);
  OracleOptions opt;
  opt.tolerance = sc.oracleTolerance;
  if (sc.solver.mode == RunMode::Online) {
    res.oracle = vgne_sequence(game, res.trajectory.socPath, opt);
    res.regret = regret(game, res.trajectory, res.oracle.solutions, sc.solver.rho);
  } else {
    std::vector<double> socs;
    for (const auto& p : game.prosumers) socs.push_back(p.s0);
    res.oracle.solutions.push_back(solve_vgne(sc.solver.frozenInterval, socs, game, blocks, opt));
  }
  for (const auto& s : res.oracle.solutions) res.oracleMaxKkt = std::max(res.oracleMaxKkt, s.kktResidual);
  res.constants = theorem_constants(game, res.kappas, eps, res.oracle.solutions);
  if (sc.solver.mode == RunMode::Online || sc.solver.keepRounds) {
    res.margins = lemma_margins(res.trajectory, res.kappas, eps, sc.solver.rho, game.size());
  }
  return res;
}

}  // namespace p2pgne
