#pragma once

// Communication/trading graph: weight matrix, neighbor sets, canonical
// ordered-edge list, Laplacian spectrum and the consensus contraction factor.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "p2pgne/error.hpp"

namespace p2pgne {

struct WeightedEdge {
  int i = 0;  // 0-based endpoints
  int j = 0;
  double w = 0.0;
};

struct OrderedEdge {
  int from = 0;
  int to = 0;
  friend bool operator==(const OrderedEdge&, const OrderedEdge&) = default;
};

/// Row-sum tolerance used to validate the uniform-row-sum weight assumption.
inline constexpr double kRowSumTolerance = 1e-9;

class TradingGraph {
 public:
  TradingGraph() = default;

  int size() const noexcept { return n_; }
  double weight(int i, int j) const { return weights_(i, j); }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(static_cast<std::size_t>(i)); }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }
  double w0() const noexcept { return w0_; }
  /// Consensus gain c = 1 / w0.
  double consensus_gain() const noexcept { return 1.0 / w0_; }
  const std::vector<OrderedEdge>& ordered_edges() const noexcept { return ordered_edges_; }

  /// Position of neighbor j inside i's neighbor list, or -1.
  int neighbor_slot(int i, int j) const {
    const auto& nb = neighbors(i);
    auto it = std::lower_bound(nb.begin(), nb.end(), j);
    if (it == nb.end() || *it != j) return -1;
    return static_cast<int>(it - nb.begin());
  }

  /// Row index of ordered edge (from, to) in the canonical list, or -1.
  int edge_row(int from, int to) const {
    auto it = std::lower_bound(ordered_edges_.begin(), ordered_edges_.end(), OrderedEdge{from, to},
                               [](const OrderedEdge& a, const OrderedEdge& b) {
                                 return a.from != b.from ? a.from < b.from : a.to < b.to;
                               });
    if (it == ordered_edges_.end() || !(*it == OrderedEdge{from, to})) return -1;
    return static_cast<int>(it - ordered_edges_.begin());
  }

  /// Weighted Laplacian built from the off-diagonal weights only.
  Eigen::MatrixXd laplacian() const {
    Eigen::MatrixXd off = weights_;
    off.diagonal().setZero();
    Eigen::MatrixXd lap = -off;
    lap.diagonal() = off.rowwise().sum();
    return lap;
  }

  /// Undirected edge list (i < j) with weights, in lexicographic order.
  std::vector<WeightedEdge> undirected_edges() const {
    std::vector<WeightedEdge> out;
    for (const auto& e : ordered_edges_) {
      if (e.from < e.to) out.push_back({e.from, e.to, weights_(e.from, e.to)});
    }
    return out;
  }

  std::vector<double> self_weights() const {
    std::vector<double> out(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = weights_(i, i);
    return out;
  }

 private:
  friend TradingGraph build_graph(int, std::span<const WeightedEdge>, std::span<const double>);

  int n_ = 0;
  Eigen::MatrixXd weights_;
  std::vector<std::vector<int>> neighbors_;
  double w0_ = 0.0;
  std::vector<OrderedEdge> ordered_edges_;
};

inline bool is_connected(const std::vector<std::vector<int>>& adjacency) {
  const auto n = adjacency.size();
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adjacency[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n;
}

/// Assembles and validates the weighted graph. Edges use 0-based endpoints.
inline TradingGraph build_graph(int n, std::span<const WeightedEdge> edges,
                                std::span<const double> self_weights) {
  if (n < 1) throw Error(ErrorCode::InvalidEdge, "graph needs at least one node");
  if (static_cast<int>(self_weights.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(n) + " self weights");
  }
  TradingGraph g;
  g.n_ = n;
  g.weights_ = Eigen::MatrixXd::Zero(n, n);
  g.neighbors_.assign(static_cast<std::size_t>(n), {});

  for (const auto& e : edges) {
    const std::string label = "(" + std::to_string(e.i + 1) + "," + std::to_string(e.j + 1) + ")";
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) {
      throw Error(ErrorCode::InvalidEdge, "edge " + label + " has an endpoint out of range");
    }
    if (e.i == e.j) throw Error(ErrorCode::InvalidEdge, "self loop " + label);
    if (!(e.w > 0.0) || !std::isfinite(e.w)) {
      throw Error(ErrorCode::InvalidEdge, "edge " + label + " needs a positive weight");
    }
    if (g.weights_(e.i, e.j) != 0.0) throw Error(ErrorCode::InvalidEdge, "duplicate edge " + label);
    g.weights_(e.i, e.j) = e.w;
    g.weights_(e.j, e.i) = e.w;
    g.neighbors_[static_cast<std::size_t>(e.i)].push_back(e.j);
    g.neighbors_[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  for (int i = 0; i < n; ++i) {
    const double wii = self_weights[static_cast<std::size_t>(i)];
    if (!(wii > 0.0) || !std::isfinite(wii)) {
      throw Error(ErrorCode::NonPositiveSelfWeight,
                  "self weight of node " + std::to_string(i + 1) + " must be positive");
    }
    g.weights_(i, i) = wii;
    auto& nb = g.neighbors_[static_cast<std::size_t>(i)];
    std::sort(nb.begin(), nb.end());
  }

  g.w0_ = g.weights_.row(0).sum();
  for (int i = 1; i < n; ++i) {
    const double row = g.weights_.row(i).sum();
    if (std::abs(row - g.w0_) > kRowSumTolerance) {
      throw Error(ErrorCode::RowSumMismatch, "row " + std::to_string(i + 1) + " sums to " +
                                                 num(row) + ", row 1 sums to " +
                                                 num(g.w0_));
    }
  }
  if (!is_connected(g.neighbors_)) throw Error(ErrorCode::DisconnectedGraph, "graph is not connected");

  for (int i = 0; i < n; ++i) {
    for (int j : g.neighbors_[static_cast<std::size_t>(i)]) g.ordered_edges_.push_back({i, j});
  }
  // Lexicographic on (from, to); the per-node loop above already produces it.
  return g;
}

struct LaplacianSpectrum {
  std::vector<double> eigenvalues;  // ascending

  double largest() const { return eigenvalues.empty() ? 0.0 : eigenvalues.back(); }
};

inline LaplacianSpectrum laplacian_spectrum(const TradingGraph& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g.laplacian(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::SpectrumFailure, "symmetric eigensolver did not converge");
  }
  LaplacianSpectrum out;
  const auto& ev = solver.eigenvalues();
  out.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  return out;
}

/// eps = max over the horizon and over positive Laplacian eigenvalues s of
/// |1 - c * rho(t) * s|. A single-node graph has no positive eigenvalue and
/// no consensus error; 0 is returned.
inline double epsilon_factor(const LaplacianSpectrum& spectrum, double c, std::span<const double> rho) {
  if (rho.empty()) throw Error(ErrorCode::EmptyHorizon, "step-size horizon is empty");
  for (double r : rho) {
    if (!(r > 0.0 && r < 1.0)) {
      throw Error(ErrorCode::StepOutOfRange, "step size " + num(r) + " not in (0,1)");
    }
  }
  const double scale = std::max(1.0, std::abs(spectrum.largest()));
  double eps = 0.0;
  for (double s : spectrum.eigenvalues) {
    if (s <= 1e-10 * scale) continue;
    for (double r : rho) eps = std::max(eps, std::abs(1.0 - c * r * s));
  }
  return eps;
}

}  // namespace p2pgne
