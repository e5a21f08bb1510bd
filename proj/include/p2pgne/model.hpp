#pragma once

// Prosumer cost model: per-prosumer objective, the pseudo-gradient of the
// game, its affine form F_t(x) = M_t x + q_t, and the strong-monotonicity /
// Lipschitz constants of F_t.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "p2pgne/error.hpp"
#include "p2pgne/graph.hpp"

namespace p2pgne {

struct TradeLink {
  double pMin = 0.0;   // <= 0
  double pMax = 0.0;   // >= 0
  double price = 0.0;  // d_ij > 0
};

struct ProsumerParams {
  // generation: f = aG p^2 + bG p, p in [pGmin, pGmax]
  double aG = 1.0;
  double bG = 0.0;
  double pGmin = 0.0;
  double pGmax = 0.0;
  // storage: f = aC pc^2 + aD pd^2
  double aC = 1.0;
  double aD = 1.0;
  double pCmax = 0.0;
  double pDmax = 0.0;
  double etaC = 1.0;
  double etaD = 1.0;
  double eCap = 1.0;
  double sMin = 0.1;
  double sMax = 0.9;
  double s0 = 0.5;
  // individual bound |p_mg| <= pMgBox
  double pMgBox = 0.0;
  // indexed like TradingGraph::neighbors(i)
  std::vector<TradeLink> trades;

  bool has_storage() const noexcept { return pCmax > 0.0 || pDmax > 0.0; }
};

struct MarketSchedule {
  std::vector<double> cMg;                // grid cost coefficient per interval
  std::vector<std::vector<double>> load;  // [prosumer][interval], net undispatchable load
  double pMgMin = 0.0;
  double pMgMax = 0.0;
  double dt = 1.0;  // sampling interval (hours when power is kW and capacity kWh)

  int horizon() const noexcept { return static_cast<int>(cMg.size()); }
};

/// Block offsets of the stacked decision vector.
class Layout {
 public:
  Layout() = default;
  explicit Layout(const TradingGraph& g) {
    offsets_.reserve(static_cast<std::size_t>(g.size()) + 1);
    int off = 0;
    for (int i = 0; i < g.size(); ++i) {
      offsets_.push_back(off);
      off += 4 + g.degree(i);
    }
    offsets_.push_back(off);
  }

  int prosumers() const noexcept { return offsets_.empty() ? 0 : static_cast<int>(offsets_.size()) - 1; }
  int offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }
  int dim(int i) const { return offsets_.at(static_cast<std::size_t>(i) + 1) - offset(i); }
  int total() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  int grid_index(int i) const { return offset(i) + 3; }

  friend bool operator==(const Layout&, const Layout&) = default;

 private:
  std::vector<int> offsets_;
};

/// One prosumer's decision x_i = (pG, pC, pD, pMg, pTr over neighbors).
class Decision {
 public:
  static constexpr int kGen = 0;
  static constexpr int kCharge = 1;
  static constexpr int kDischarge = 2;
  static constexpr int kGrid = 3;
  static constexpr int kTrade = 4;

  explicit Decision(int neighbor_count = 0) : v_(Eigen::VectorXd::Zero(4 + neighbor_count)) {}
  explicit Decision(Eigen::VectorXd values) : v_(std::move(values)) {
    if (v_.size() < 4) throw Error(ErrorCode::DimensionMismatch, "decision needs at least 4 entries");
  }

  int dim() const noexcept { return static_cast<int>(v_.size()); }
  int trade_count() const noexcept { return dim() - 4; }

  double& pG() { return v_[kGen]; }
  double& pC() { return v_[kCharge]; }
  double& pD() { return v_[kDischarge]; }
  double& pMg() { return v_[kGrid]; }
  double& pTr(int slot) { return v_[kTrade + slot]; }
  double pG() const { return v_[kGen]; }
  double pC() const { return v_[kCharge]; }
  double pD() const { return v_[kDischarge]; }
  double pMg() const { return v_[kGrid]; }
  double pTr(int slot) const { return v_[kTrade + slot]; }

  const Eigen::VectorXd& vec() const noexcept { return v_; }
  Eigen::VectorXd& vec() noexcept { return v_; }

 private:
  Eigen::VectorXd v_;
};

/// Stacked decision of all prosumers, x = col(x_1, ..., x_N).
class StackedDecision {
 public:
  StackedDecision() = default;
  explicit StackedDecision(Layout layout)
      : layout_(std::move(layout)), v_(Eigen::VectorXd::Zero(layout_.total())) {}
  StackedDecision(Layout layout, Eigen::VectorXd values) : layout_(std::move(layout)), v_(std::move(values)) {
    if (v_.size() != layout_.total()) {
      throw Error(ErrorCode::DimensionMismatch, "stacked vector size does not match layout");
    }
  }

  const Layout& layout() const noexcept { return layout_; }
  int prosumers() const noexcept { return layout_.prosumers(); }

  auto block(int i) { return v_.segment(layout_.offset(i), layout_.dim(i)); }
  auto block(int i) const { return v_.segment(layout_.offset(i), layout_.dim(i)); }

  Decision decision(int i) const { return Decision(Eigen::VectorXd(block(i))); }
  void set(int i, const Decision& d) {
    if (d.dim() != layout_.dim(i)) throw Error(ErrorCode::DimensionMismatch, "decision block size");
    block(i) = d.vec();
  }
  double grid(int i) const { return v_[layout_.grid_index(i)]; }

  const Eigen::VectorXd& vec() const noexcept { return v_; }
  Eigen::VectorXd& vec() noexcept { return v_; }

 private:
  Layout layout_;
  Eigen::VectorXd v_;
};

/// Static description of the trading game: graph, prosumers and market data.
struct Game {
  TradingGraph graph;
  std::vector<ProsumerParams> prosumers;
  double aTr = 0.01;  // platform tax coefficient, network-wide
  MarketSchedule schedule;

  int size() const noexcept { return graph.size(); }
  int horizon() const noexcept { return schedule.horizon(); }
  Layout layout() const { return Layout(graph); }
  const ProsumerParams& prosumer(int i) const {
    if (i < 0 || i >= size()) throw Error(ErrorCode::InvalidProsumer, "prosumer " + std::to_string(i + 1));
    return prosumers[static_cast<std::size_t>(i)];
  }
  double grid_cost(int t) const {
    if (t < 0 || t >= horizon()) {
      throw Error(ErrorCode::TimeOutOfRange, "interval " + std::to_string(t) + " outside horizon");
    }
    return schedule.cMg[static_cast<std::size_t>(t)];
  }
  double load(int i, int t) const {
    if (t < 0 || t >= horizon()) {
      throw Error(ErrorCode::TimeOutOfRange, "interval " + std::to_string(t) + " outside horizon");
    }
    return schedule.load.at(static_cast<std::size_t>(i))[static_cast<std::size_t>(t)];
  }
};

struct CostBreakdown {
  double generation = 0.0;
  double storage = 0.0;
  double grid = 0.0;
  double trade = 0.0;
  double total = 0.0;
};

namespace detail {

inline void check_layout(const Game& game, const StackedDecision& x) {
  if (!(x.layout() == game.layout())) {
    throw Error(ErrorCode::DimensionMismatch, "stacked decision layout does not match the game");
  }
}

inline double total_grid(const StackedDecision& x) {
  double sum = 0.0;
  for (int j = 0; j < x.prosumers(); ++j) sum += x.grid(j);
  return sum;
}

}  // namespace detail

/// J_{i,t}(x) split into its four cost terms.
inline CostBreakdown cost_components(int i, int t, const StackedDecision& x, const Game& game) {
  detail::check_layout(game, x);
  const auto& p = game.prosumer(i);
  const double c = game.grid_cost(t);
  const Decision d = x.decision(i);
  CostBreakdown out;
  out.generation = p.aG * d.pG() * d.pG() + p.bG * d.pG();
  out.storage = p.aC * d.pC() * d.pC() + p.aD * d.pD() * d.pD();
  out.grid = c * d.pMg() * detail::total_grid(x);
  for (int l = 0; l < d.trade_count(); ++l) {
    const double q = d.pTr(l);
    out.trade += game.aTr * q * q + p.trades[static_cast<std::size_t>(l)].price * q;
  }
  out.total = out.generation + out.storage + out.grid + out.trade;
  return out;
}

inline double objective(int i, int t, const StackedDecision& x, const Game& game) {
  return cost_components(i, t, x, game).total;
}

/// Aggregate grid cost C_t = c_t (sum_i p_i^mg)^2.
inline double aggregate_grid_cost(int t, const StackedDecision& x, const Game& game) {
  const double s = detail::total_grid(x);
  return game.grid_cost(t) * s * s;
}

namespace detail {

// Gradient of J_{i,t} in x_i given the total grid purchase of all others.
inline Eigen::VectorXd block_gradient(const ProsumerParams& p, double aTr, double c,
                                      const Eigen::Ref<const Eigen::VectorXd>& xi, double others_grid) {
  Eigen::VectorXd g(xi.size());
  g[Decision::kGen] = 2.0 * p.aG * xi[Decision::kGen] + p.bG;
  g[Decision::kCharge] = 2.0 * p.aC * xi[Decision::kCharge];
  g[Decision::kDischarge] = 2.0 * p.aD * xi[Decision::kDischarge];
  g[Decision::kGrid] = c * (2.0 * xi[Decision::kGrid] + others_grid);
  for (Eigen::Index l = Decision::kTrade; l < xi.size(); ++l) {
    g[l] = 2.0 * aTr * xi[l] + p.trades[static_cast<std::size_t>(l - Decision::kTrade)].price;
  }
  return g;
}

}  // namespace detail

/// F_t(x) = col(grad_{x_i} J_{i,t}(x_i, x_{-i})).
inline Eigen::VectorXd pseudo_gradient(int t, const StackedDecision& x, const Game& game) {
  detail::check_layout(game, x);
  const double c = game.grid_cost(t);
  const double total = detail::total_grid(x);
  Eigen::VectorXd out(x.layout().total());
  for (int i = 0; i < game.size(); ++i) {
    out.segment(x.layout().offset(i), x.layout().dim(i)) =
        detail::block_gradient(game.prosumer(i), game.aTr, c, x.block(i), total - x.grid(i));
  }
  return out;
}

/// grad_{x_i} J_{i,t} evaluated at (xi, estimate_{-i}); block i of `estimate` is ignored.
inline Eigen::VectorXd partial_gradient(int i, int t, const Decision& xi, const StackedDecision& estimate,
                                        const Game& game) {
  detail::check_layout(game, estimate);
  if (xi.dim() != estimate.layout().dim(i)) {
    throw Error(ErrorCode::DimensionMismatch, "own decision has wrong size");
  }
  double others = 0.0;
  for (int j = 0; j < game.size(); ++j) {
    if (j != i) others += estimate.grid(j);
  }
  return detail::block_gradient(game.prosumer(i), game.aTr, game.grid_cost(t), xi.vec(), others);
}

struct MonotonicityConstants {
  double eta = 0.0;         // strong monotonicity modulus
  double theta = 0.0;       // Lipschitz bound as stated with N * max c
  double theta_star = 0.0;  // max(theta, max c * (N + 1)), the bound actually guaranteed
};

inline MonotonicityConstants monotonicity_constants(const Game& game) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double ag_lo = inf, ag_hi = 0.0, ac_lo = inf, ac_hi = 0.0, ad_lo = inf, ad_hi = 0.0;
  for (const auto& p : game.prosumers) {
    ag_lo = std::min(ag_lo, p.aG);
    ag_hi = std::max(ag_hi, p.aG);
    ac_lo = std::min(ac_lo, p.aC);
    ac_hi = std::max(ac_hi, p.aC);
    ad_lo = std::min(ad_lo, p.aD);
    ad_hi = std::max(ad_hi, p.aD);
  }
  const auto [c_lo_it, c_hi_it] = std::minmax_element(game.schedule.cMg.begin(), game.schedule.cMg.end());
  const double c_lo = game.schedule.cMg.empty() ? 0.0 : *c_lo_it;
  const double c_hi = game.schedule.cMg.empty() ? 0.0 : *c_hi_it;
  const double n = static_cast<double>(game.size());

  MonotonicityConstants out;
  out.eta = std::min({2.0 * ag_lo, 2.0 * ac_lo, 2.0 * ad_lo, c_lo, 2.0 * game.aTr});
  out.theta = std::max({2.0 * ag_hi, 2.0 * ac_hi, 2.0 * ad_hi, n * c_hi, 2.0 * game.aTr});
  out.theta_star = std::max(out.theta, c_hi * (n + 1.0));
  return out;
}

struct AffineMap {
  Eigen::MatrixXd M;
  Eigen::VectorXd q;
};

/// F_t(x) = M_t x + q_t. The grid block of M_t is c_t (I_N + 1 1^T).
inline AffineMap affine_map(int t, const Game& game) {
  const Layout layout = game.layout();
  const double c = game.grid_cost(t);
  const int n = layout.total();
  AffineMap out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  for (int i = 0; i < game.size(); ++i) {
    const auto& p = game.prosumer(i);
    const int off = layout.offset(i);
    out.M(off + Decision::kGen, off + Decision::kGen) = 2.0 * p.aG;
    out.M(off + Decision::kCharge, off + Decision::kCharge) = 2.0 * p.aC;
    out.M(off + Decision::kDischarge, off + Decision::kDischarge) = 2.0 * p.aD;
    out.q[off + Decision::kGen] = p.bG;
    for (int l = 0; l < game.graph.degree(i); ++l) {
      out.M(off + Decision::kTrade + l, off + Decision::kTrade + l) = 2.0 * game.aTr;
      out.q[off + Decision::kTrade + l] = p.trades[static_cast<std::size_t>(l)].price;
    }
    for (int j = 0; j < game.size(); ++j) {
      out.M(layout.grid_index(i), layout.grid_index(j)) = (i == j) ? 2.0 * c : c;
    }
  }
  return out;
}

}  // namespace p2pgne
