#pragma once

// Coupling-constraint blocks (E_i, A_i, b_i, G_i), residuals, the one-step
// local feasible set chi_i(t) and its exact Euclidean projection.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "p2pgne/error.hpp"
#include "p2pgne/graph.hpp"
#include "p2pgne/model.hpp"

namespace p2pgne {

struct ConstraintBlocks {
  int prosumer = 0;
  Eigen::MatrixXd E;     // |ordered edges| x N_i, entries in {-1, 0, +1}
  Eigen::MatrixXd A;     // m x n_i
  Eigen::VectorXd b;     // m
  Eigen::RowVectorXd G;  // 1 x n_i, (1, -1, 1, 1, 1...)

  int rows() const noexcept { return static_cast<int>(A.rows()); }
  Eigen::VectorXd g(const Eigen::Ref<const Eigen::VectorXd>& xi) const { return A * xi - b; }
};

/// Builds the blocks of prosumer i. Rows of E_i follow the canonical ordered-edge list;
/// the first two rows of A_i encode p^{mg,min} <= sum p^mg <= p^{mg,max}.
inline ConstraintBlocks build_blocks(const TradingGraph& g, int i, double pMgMin, double pMgMax) {
  if (i < 0 || i >= g.size()) throw Error(ErrorCode::InvalidProsumer, "prosumer " + std::to_string(i + 1));
  const auto& edges = g.ordered_edges();
  const auto& nb = g.neighbors(i);
  const int ni = 4 + static_cast<int>(nb.size());
  const int rows = static_cast<int>(edges.size());
  const int m = 2 + rows;
  const double n = static_cast<double>(g.size());

  ConstraintBlocks out;
  out.prosumer = i;
  out.E = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(nb.size()));
  for (int k = 0; k < rows; ++k) {
    const auto [from, to] = edges[static_cast<std::size_t>(k)];
    for (std::size_t l = 0; l < nb.size(); ++l) {
      const bool same_pair = (from == i && to == nb[l]) || (from == nb[l] && to == i);
      if (same_pair) out.E(k, static_cast<Eigen::Index>(l)) = from < to ? 1.0 : -1.0;
    }
  }
  out.A = Eigen::MatrixXd::Zero(m, ni);
  out.A(0, Decision::kGrid) = -1.0;
  out.A(1, Decision::kGrid) = 1.0;
  out.A.block(2, Decision::kTrade, rows, static_cast<Eigen::Index>(nb.size())) = out.E;
  out.b = Eigen::VectorXd::Zero(m);
  out.b[0] = -pMgMin / n;
  out.b[1] = pMgMax / n;
  out.G = Eigen::RowVectorXd::Ones(ni);
  out.G[Decision::kCharge] = -1.0;
  return out;
}

inline std::vector<ConstraintBlocks> build_all_blocks(const Game& game) {
  std::vector<ConstraintBlocks> out;
  out.reserve(static_cast<std::size_t>(game.size()));
  for (int i = 0; i < game.size(); ++i) {
    out.push_back(build_blocks(game.graph, i, game.schedule.pMgMin, game.schedule.pMgMax));
  }
  return out;
}

/// sum_i (A_i x_i - b_i). Feasible iff every entry is <= 0.
inline Eigen::VectorXd coupling_residual(const StackedDecision& x, const std::vector<ConstraintBlocks>& blocks) {
  if (static_cast<int>(blocks.size()) != x.prosumers() || blocks.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "one constraint block per prosumer expected");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(blocks.front().rows());
  for (int i = 0; i < x.prosumers(); ++i) {
    const auto& blk = blocks[static_cast<std::size_t>(i)];
    if (blk.A.cols() != x.layout().dim(i) || blk.rows() != out.size()) {
      throw Error(ErrorCode::DimensionMismatch, "constraint block " + std::to_string(i + 1) + " size");
    }
    out += blk.g(x.block(i));
  }
  return out;
}

/// G_i x_i - p_i^l(t).
inline double balance_residual(const Decision& xi, double load) {
  double s = xi.pG() - xi.pC() + xi.pD() + xi.pMg();
  for (int l = 0; l < xi.trade_count(); ++l) s += xi.pTr(l);
  return s - load;
}

inline double soc_step(double soc, double pC, double pD, const ProsumerParams& p, double dt) {
  return soc + (dt / p.eCap) * (p.etaC * pC - pD / p.etaD);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double clamp(double v) const { return std::clamp(v, lo, hi); }
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
  double max_abs() const { return std::max(std::abs(lo), std::abs(hi)); }
};

using Point2 = std::array<double, 2>;

/// Feasible (charge, discharge) pairs for one interval:
/// box [0,pCmax] x [0,pDmax] intersected with lo <= a . (pC,pD) <= hi.
class StoragePolygon {
 public:
  StoragePolygon() = default;
  StoragePolygon(double pCmax, double pDmax, Point2 normal, double lo, double hi)
      : pCmax_(pCmax), pDmax_(pDmax), normal_(normal), lo_(lo), hi_(hi) {
    build_vertices();
  }

  bool empty() const noexcept { return vertices_.empty(); }
  const std::vector<Point2>& vertices() const noexcept { return vertices_; }
  double charge_max() const noexcept { return pCmax_; }
  double discharge_max() const noexcept { return pDmax_; }
  Point2 normal() const noexcept { return normal_; }
  double slab_lo() const noexcept { return lo_; }
  double slab_hi() const noexcept { return hi_; }

  bool contains(Point2 p, double tol = 0.0) const {
    if (p[0] < -tol || p[0] > pCmax_ + tol || p[1] < -tol || p[1] > pDmax_ + tol) return false;
    const double v = normal_[0] * p[0] + normal_[1] * p[1];
    return v >= lo_ - tol && v <= hi_ + tol;
  }

  /// Exact nearest point: identity inside, otherwise the closest point over all edges.
  Point2 project(Point2 p) const {
    if (empty()) throw Error(ErrorCode::EmptyFeasibleSet, "storage polygon is empty");
    if (contains(p)) return p;
    if (vertices_.size() == 1) return vertices_.front();
    Point2 best = vertices_.front();
    double best_d2 = std::numeric_limits<double>::infinity();
    const std::size_t k = vertices_.size();
    for (std::size_t e = 0; e < k; ++e) {
      const Point2 c = closest_on_segment(p, vertices_[e], vertices_[(e + 1) % k]);
      const double d2 = sq(c[0] - p[0]) + sq(c[1] - p[1]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    return best;
  }

 private:
  static double sq(double v) { return v * v; }

  static Point2 closest_on_segment(Point2 p, Point2 a, Point2 b) {
    const double dx = b[0] - a[0];
    const double dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) return a;
    const double s = std::clamp(((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2, 0.0, 1.0);
    return {a[0] + s * dx, a[1] + s * dy};
  }

  // Sutherland-Hodgman clip of the box against dir . p <= bound.
  static std::vector<Point2> clip(const std::vector<Point2>& poly, Point2 dir, double bound) {
    std::vector<Point2> out;
    const std::size_t k = poly.size();
    for (std::size_t e = 0; e < k; ++e) {
      const Point2 a = poly[e];
      const Point2 b = poly[(e + 1) % k];
      const double va = dir[0] * a[0] + dir[1] * a[1] - bound;
      const double vb = dir[0] * b[0] + dir[1] * b[1] - bound;
      if (va <= 0.0) out.push_back(a);
      if ((va < 0.0 && vb > 0.0) || (va > 0.0 && vb < 0.0)) {
        const double s = va / (va - vb);
        out.push_back({a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])});
      }
    }
    return out;
  }

  void build_vertices() {
    std::vector<Point2> poly{{0.0, 0.0}, {pCmax_, 0.0}, {pCmax_, pDmax_}, {0.0, pDmax_}};
    poly = clip(poly, normal_, hi_);
    if (!poly.empty()) poly = clip(poly, {-normal_[0], -normal_[1]}, -lo_);
    vertices_.clear();
    for (const auto& v : poly) {
      if (vertices_.empty() || v != vertices_.back()) vertices_.push_back(v);
    }
    while (vertices_.size() > 1 && vertices_.front() == vertices_.back()) vertices_.pop_back();
  }

  double pCmax_ = 0.0;
  double pDmax_ = 0.0;
  Point2 normal_{0.0, 0.0};
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<Point2> vertices_;
};

/// chi_i(t): boxes for generation, grid exchange and trades plus the storage polygon
/// induced by the current state of charge.
struct LocalFeasibleSet {
  Interval gen;
  Interval grid;
  std::vector<Interval> trades;
  StoragePolygon storage;

  int dim() const noexcept { return 4 + static_cast<int>(trades.size()); }

  bool contains(const Decision& x, double tol = 1e-9) const {
    if (x.dim() != dim()) return false;
    if (!gen.contains(x.pG(), tol) || !grid.contains(x.pMg(), tol)) return false;
    for (int l = 0; l < x.trade_count(); ++l) {
      if (!trades[static_cast<std::size_t>(l)].contains(x.pTr(l), tol)) return false;
    }
    return storage.contains({x.pC(), x.pD()}, tol);
  }
};

inline LocalFeasibleSet local_feasible_set(const ProsumerParams& p, double soc, double dt) {
  LocalFeasibleSet out;
  out.gen = {p.pGmin, p.pGmax};
  out.grid = {-p.pMgBox, p.pMgBox};
  for (const auto& link : p.trades) out.trades.push_back({link.pMin, link.pMax});
  const double k = dt / p.eCap;
  out.storage = StoragePolygon(p.pCmax, p.pDmax, {k * p.etaC, -k / p.etaD}, p.sMin - soc, p.sMax - soc);
  return out;
}

/// Time-invariant box containing chi_i(t) for every admissible state of charge.
inline LocalFeasibleSet local_feasible_hull(const ProsumerParams& p, double dt) {
  LocalFeasibleSet out = local_feasible_set(p, 0.5 * (p.sMin + p.sMax), dt);
  out.storage = StoragePolygon(p.pCmax, p.pDmax, {0.0, 0.0}, 0.0, 0.0);
  return out;
}

/// Euclidean projection onto chi_i. Separable: clamps for the scalar boxes and the
/// exact polygon projection for (pC, pD).
inline Decision project_chi(const Decision& x, const LocalFeasibleSet& set) {
  if (x.dim() != set.dim()) throw Error(ErrorCode::DimensionMismatch, "decision does not match feasible set");
  if (set.storage.empty()) {
    throw Error(ErrorCode::EmptyFeasibleSet, "storage polygon empty: state of charge outside its bounds");
  }
  Decision out = x;
  out.pG() = set.gen.clamp(x.pG());
  out.pMg() = set.grid.clamp(x.pMg());
  for (int l = 0; l < x.trade_count(); ++l) out.pTr(l) = set.trades[static_cast<std::size_t>(l)].clamp(x.pTr(l));
  const Point2 pc = set.storage.project({x.pC(), x.pD()});
  out.pC() = pc[0];
  out.pD() = pc[1];
  return out;
}

}  // namespace p2pgne
