#pragma once

// Centralized ground truth: the variational GNE x*(t) of each time section.
//
// F_t is the gradient of the potential 1/2 x'M_t x + q_t'x (M_t symmetric
// positive definite), so the v-GNE is the unique minimizer of that potential
// over the coupled feasible set. The minimizer's multipliers for the shared
// rows sum_i g_i(x_i) <= 0 are the common lambda*, and the balance-row
// multipliers are mu*_i.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "p2pgne/constraints.hpp"
#include "p2pgne/error.hpp"
#include "p2pgne/model.hpp"
#include "p2pgne/qp.hpp"

namespace p2pgne {

struct KktReport {
  double stationarity = 0.0;  // natural residual x - P_chi(x - (F + A'lambda + G'mu)), per block
  double coupling = 0.0;      // max(0, max_k (sum_i g_i)_k)
  double balance = 0.0;       // max_i |G_i x_i - p_i^l|
  double local = 0.0;         // distance to chi_i, infinity norm
  double dual_sign = 0.0;     // max(0, -min lambda)
  double complementarity = 0.0;  // max_k |lambda_k (sum_i g_i)_k|

  double max() const { return std::max({stationarity, coupling, balance, local, dual_sign, complementarity}); }
};

struct VgneSolution {
  StackedDecision xStar;
  Eigen::VectorXd lambdaStar;  // shared multiplier, m entries
  std::vector<double> muStar;  // one per prosumer
  double kktResidual = 0.0;
  KktReport kkt;
  int iterations = 0;
  std::vector<RowSide> activeSet;  // rows of the potential QP; reused as a warm start
};

/// KKT residual of (x, lambda, mu) for the game at interval t with the given local sets.
inline KktReport kkt_report(int t, const Game& game, const std::vector<ConstraintBlocks>& blocks,
                            const std::vector<LocalFeasibleSet>& sets, const StackedDecision& x,
                            const Eigen::VectorXd& lambda, const std::vector<double>& mu) {
  KktReport r;
  const Eigen::VectorXd F = pseudo_gradient(t, x, game);
  const Eigen::VectorXd sum_g = coupling_residual(x, blocks);
  for (int i = 0; i < game.size(); ++i) {
    const auto& blk = blocks[static_cast<std::size_t>(i)];
    const auto& set = sets[static_cast<std::size_t>(i)];
    const Decision xi = x.decision(i);
    const Eigen::VectorXd grad = F.segment(x.layout().offset(i), x.layout().dim(i)) +
                                 blk.A.transpose() * lambda + blk.G.transpose() * mu[static_cast<std::size_t>(i)];
    const Decision moved(Eigen::VectorXd(xi.vec() - grad));
    r.stationarity = std::max(r.stationarity, (xi.vec() - project_chi(moved, set).vec()).lpNorm<Eigen::Infinity>());
    r.local = std::max(r.local, (xi.vec() - project_chi(xi, set).vec()).lpNorm<Eigen::Infinity>());
    r.balance = std::max(r.balance, std::abs(balance_residual(xi, game.load(i, t))));
  }
  r.coupling = std::max(0.0, sum_g.maxCoeff());
  r.dual_sign = std::max(0.0, -lambda.minCoeff());
  r.complementarity = lambda.cwiseProduct(sum_g).lpNorm<Eigen::Infinity>();
  return r;
}

/// Meaning of each row of the potential QP, used to map multipliers back.
struct PotentialRow {
  enum class Kind { Local, Balance, GridSum, Trade } kind = Kind::Local;
  int prosumer = -1;
  int from = -1;  // trade rows: undirected edge from < to
  int to = -1;
};

struct PotentialQp {
  QuadraticProgram qp;
  std::vector<PotentialRow> meaning;
  Layout layout;
};

/// Potential minimization whose KKT system is the v-GNE system at interval t.
/// Paired shared rows (p_ij + p_ji <= 0 and its negation) become one equality.
inline PotentialQp build_potential_qp(int t, const Game& game, const std::vector<LocalFeasibleSet>& sets) {
  PotentialQp out;
  out.layout = game.layout();
  const auto map = affine_map(t, game);
  out.qp.H = map.M;
  out.qp.f = map.q;
  auto add = [&](LinearRow row, PotentialRow meaning) {
    out.qp.rows.push_back(std::move(row));
    out.meaning.push_back(meaning);
  };
  using Kind = PotentialRow::Kind;
  for (int i = 0; i < game.size(); ++i) {
    const int off = out.layout.offset(i);
    const auto& set = sets[static_cast<std::size_t>(i)];
    const PotentialRow local{Kind::Local, i};
    add({{{off + Decision::kGen, 1.0}}, set.gen.lo, set.gen.hi}, local);
    add({{{off + Decision::kCharge, 1.0}}, 0.0, set.storage.charge_max()}, local);
    add({{{off + Decision::kDischarge, 1.0}}, 0.0, set.storage.discharge_max()}, local);
    const auto a = set.storage.normal();
    if (set.storage.charge_max() > 0.0 || set.storage.discharge_max() > 0.0) {
      add({{{off + Decision::kCharge, a[0]}, {off + Decision::kDischarge, a[1]}}, set.storage.slab_lo(),
           set.storage.slab_hi()},
          local);
    }
    add({{{off + Decision::kGrid, 1.0}}, set.grid.lo, set.grid.hi}, local);
    for (int l = 0; l < static_cast<int>(set.trades.size()); ++l) {
      const auto& box = set.trades[static_cast<std::size_t>(l)];
      add({{{off + Decision::kTrade + l, 1.0}}, box.lo, box.hi}, local);
    }
    LinearRow balance;
    const int dim = out.layout.dim(i);
    for (int k = 0; k < dim; ++k) balance.terms.emplace_back(off + k, k == Decision::kCharge ? -1.0 : 1.0);
    balance.lo = balance.hi = game.load(i, t);
    add(std::move(balance), {Kind::Balance, i});
  }
  LinearRow grid_sum;
  for (int i = 0; i < game.size(); ++i) grid_sum.terms.emplace_back(out.layout.grid_index(i), 1.0);
  grid_sum.lo = game.schedule.pMgMin;
  grid_sum.hi = game.schedule.pMgMax;
  add(std::move(grid_sum), {Kind::GridSum});
  for (const auto& e : game.graph.undirected_edges()) {
    const int slot_ij = game.graph.neighbor_slot(e.i, e.j);
    const int slot_ji = game.graph.neighbor_slot(e.j, e.i);
    LinearRow row{{{out.layout.offset(e.i) + Decision::kTrade + slot_ij, 1.0},
                   {out.layout.offset(e.j) + Decision::kTrade + slot_ji, 1.0}},
                  0.0,
                  0.0};
    add(std::move(row), {Kind::Trade, -1, e.i, e.j});
  }
  return out;
}

inline std::vector<LocalFeasibleSet> local_sets(const Game& game, const std::vector<double>& socs) {
  if (static_cast<int>(socs.size()) != game.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one state of charge per prosumer expected");
  }
  std::vector<LocalFeasibleSet> out;
  for (int i = 0; i < game.size(); ++i) {
    out.push_back(local_feasible_set(game.prosumer(i), socs[static_cast<std::size_t>(i)], game.schedule.dt));
    if (out.back().storage.empty()) {
      throw Error(ErrorCode::Infeasible, "storage set of prosumer " + std::to_string(i + 1) + " is empty");
    }
  }
  return out;
}

namespace detail {

inline VgneSolution to_vgne(int t, const Game& game, const std::vector<ConstraintBlocks>& blocks,
                            const std::vector<LocalFeasibleSet>& sets, const PotentialQp& pq,
                            const QpSolution& sol) {
  VgneSolution out;
  out.xStar = StackedDecision(pq.layout, sol.x);
  const int m = blocks.front().rows();
  out.lambdaStar = Eigen::VectorXd::Zero(m);
  out.muStar.assign(static_cast<std::size_t>(game.size()), 0.0);
  for (std::size_t r = 0; r < pq.meaning.size(); ++r) {
    const auto& meaning = pq.meaning[r];
    const double y = sol.y[static_cast<Eigen::Index>(r)];
    switch (meaning.kind) {
      case PotentialRow::Kind::Local:
        break;
      case PotentialRow::Kind::Balance:
        out.muStar[static_cast<std::size_t>(meaning.prosumer)] = y;
        break;
      case PotentialRow::Kind::GridSum:
        // row 0: -sum p + pmin <= 0 (lower side), row 1: sum p - pmax <= 0 (upper side)
        out.lambdaStar[0] = std::max(0.0, -y);
        out.lambdaStar[1] = std::max(0.0, y);
        break;
      case PotentialRow::Kind::Trade: {
        const int forward = 2 + game.graph.edge_row(meaning.from, meaning.to);
        const int backward = 2 + game.graph.edge_row(meaning.to, meaning.from);
        out.lambdaStar[forward] = std::max(0.0, y);
        out.lambdaStar[backward] = std::max(0.0, -y);
        break;
      }
    }
  }
  out.kkt = kkt_report(t, game, blocks, sets, out.xStar, out.lambdaStar, out.muStar);
  out.kktResidual = out.kkt.max();
  out.iterations = sol.iterations;
  out.activeSet = sol.active;
  return out;
}

}  // namespace detail

struct OracleOptions {
  double tolerance = 1e-8;
  std::optional<Eigen::VectorXd> initial_x;
};

/// v-GNE of interval t for the given states of charge. A previous solution's
/// active set is tried first when supplied; otherwise (or if that guess is not
/// optimal) the interior-point solver runs from scratch.
inline VgneSolution solve_vgne(int t, const std::vector<double>& socs, const Game& game,
                               const std::vector<ConstraintBlocks>& blocks, const OracleOptions& opt = {},
                               const VgneSolution* warm = nullptr) {
  const auto sets = local_sets(game, socs);
  const PotentialQp pq = build_potential_qp(t, game, sets);
  if (warm != nullptr && warm->activeSet.size() == pq.qp.rows.size()) {
    std::vector<int> priority;
    for (int r = 0; r < static_cast<int>(pq.qp.rows.size()); ++r) {
      if (warm->activeSet[static_cast<std::size_t>(r)] == RowSide::Equality) priority.push_back(r);
    }
    for (int r = 0; r < static_cast<int>(pq.qp.rows.size()); ++r) {
      const auto side = warm->activeSet[static_cast<std::size_t>(r)];
      if (side != RowSide::Equality && side != RowSide::Inactive) priority.push_back(r);
    }
    if (auto sol = solve_with_active_set(pq.qp, warm->activeSet, priority)) {
      auto out = detail::to_vgne(t, game, blocks, sets, pq, *sol);
      if (out.kktResidual <= opt.tolerance) return out;
    }
  }
  InteriorPointOptions ipm;
  ipm.initial_x = opt.initial_x;
  const QpSolution sol = interior_point_qp(pq.qp, ipm);
  auto out = detail::to_vgne(t, game, blocks, sets, pq, sol);
  if (out.kktResidual > opt.tolerance) {
    throw Error(ErrorCode::IterationCap, "v-GNE KKT residual " + num(out.kktResidual) +
                                             " above tolerance at interval " + std::to_string(t));
  }
  return out;
}

/// Reference solution by exhaustive KKT active-set enumeration (total dimension <= 10).
inline VgneSolution brute_force_vgne(int t, const std::vector<double>& socs, const Game& game,
                                     const std::vector<ConstraintBlocks>& blocks) {
  const auto sets = local_sets(game, socs);
  const PotentialQp pq = build_potential_qp(t, game, sets);
  if (pq.qp.dim() > 10) {
    throw Error(ErrorCode::TooLarge, "brute force limited to 10 variables, got " + std::to_string(pq.qp.dim()));
  }
  const QpSolution sol = enumerate_active_sets(pq.qp);
  return detail::to_vgne(t, game, blocks, sets, pq, sol);
}

struct VgneSequence {
  std::vector<VgneSolution> solutions;
  double phiT = 0.0;  // sum_t ||x*(t+1) - x*(t)||
};

inline double path_length(const std::vector<VgneSolution>& seq) {
  double phi = 0.0;
  for (std::size_t t = 1; t < seq.size(); ++t) phi += (seq[t].xStar.vec() - seq[t - 1].xStar.vec()).norm();
  return phi;
}

/// Oracle along a state-of-charge path: socPath[t][i] for every interval t.
inline VgneSequence vgne_sequence(const Game& game, const std::vector<std::vector<double>>& socPath,
                                  const OracleOptions& opt = {}) {
  if (static_cast<int>(socPath.size()) < game.horizon()) {
    throw Error(ErrorCode::LengthMismatch, "state-of-charge path shorter than the horizon");
  }
  const auto blocks = build_all_blocks(game);
  VgneSequence out;
  out.solutions.reserve(static_cast<std::size_t>(game.horizon()));
  for (int t = 0; t < game.horizon(); ++t) {
    const VgneSolution* warm = out.solutions.empty() ? nullptr : &out.solutions.back();
    out.solutions.push_back(solve_vgne(t, socPath[static_cast<std::size_t>(t)], game, blocks, opt, warm));
  }
  out.phiT = path_length(out.solutions);
  return out;
}

}  // namespace p2pgne
