#pragma once

// Random games and small fixtures shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "p2pgne/pipeline.hpp"

namespace p2pgne::fixture {

/// Code of the p2pgne::Error thrown by f, or nullopt if it returns normally.
template <class F>
std::optional<ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::string source_path(const std::string& rel) { return std::string(P2PGNE_SOURCE_DIR) + "/" + rel; }

/// Connected graph with uniform row sums 1: a random spanning tree plus extra edges,
/// off-diagonal weight 1/(max degree + 1).
inline TradingGraph random_graph(std::mt19937_64& rng, int n, double extra_edge_prob = 0.3) {
  std::vector<std::pair<int, int>> pairs;
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> pick(0, v - 1);
    pairs.emplace_back(pick(rng), v);
  }
  std::bernoulli_distribution extra(extra_edge_prob);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool present = std::any_of(pairs.begin(), pairs.end(), [&](const auto& e) {
        return (e.first == i && e.second == j) || (e.first == j && e.second == i);
      });
      if (!present && extra(rng)) pairs.emplace_back(i, j);
    }
  }
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (const auto& [a, b] : pairs) ++deg[static_cast<std::size_t>(a)], ++deg[static_cast<std::size_t>(b)];
  const int dmax = n == 1 ? 0 : *std::max_element(deg.begin(), deg.end());
  const double w = 1.0 / (dmax + 1.0);
  std::vector<WeightedEdge> edges;
  for (const auto& [a, b] : pairs) edges.push_back({a, b, w});
  std::vector<double> self(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) self[static_cast<std::size_t>(i)] = 1.0 - deg[static_cast<std::size_t>(i)] * w;
  return build_graph(n, edges, self);
}

inline TradingGraph ring_graph(int n) {
  std::vector<WeightedEdge> edges;
  if (n == 2) {
    edges.push_back({0, 1, 1.0 / 3.0});
  } else {
    for (int i = 0; i < n; ++i) edges.push_back({std::min(i, (i + 1) % n), std::max(i, (i + 1) % n), 1.0 / 3.0});
  }
  std::vector<double> self(static_cast<std::size_t>(n), n == 2 ? 2.0 / 3.0 : 1.0 / 3.0);
  return build_graph(n, edges, self);
}

struct GameOptions {
  int horizon = 4;
  bool storage = true;
  bool varying = true;  // time-varying loads and grid price
};

/// Feasible game on the given graph with random coefficients of the magnitudes used
/// by the reference scenario.
inline Game random_game(std::mt19937_64& rng, TradingGraph graph, const GameOptions& opt = {}) {
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  Game game;
  game.graph = std::move(graph);
  const int n = game.graph.size();
  game.aTr = U(0.005, 0.03);
  game.schedule.dt = 1.0 / 60.0;
  game.schedule.pMgMin = -8.0 * n;
  game.schedule.pMgMax = 8.0 * n;

  std::vector<std::vector<double>> price(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<std::vector<double>> cap(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      price[i][j] = price[j][i] = U(0.01, 0.05);
      cap[i][j] = cap[j][i] = U(2.0, 5.0);
    }
  }
  for (int i = 0; i < n; ++i) {
    ProsumerParams p;
    p.aG = U(0.02, 0.2);
    p.bG = U(0.1, 1.0);
    p.pGmin = 0.0;
    p.pGmax = U(2.0, 5.0);
    p.aC = U(0.01, 0.1);
    p.aD = U(0.01, 0.1);
    p.pCmax = opt.storage ? U(1.0, 3.0) : 0.0;
    p.pDmax = opt.storage ? U(1.0, 3.0) : 0.0;
    p.etaC = U(0.9, 0.98);
    p.etaD = U(0.9, 0.98);
    p.eCap = U(5.0, 15.0);
    p.sMin = 0.1;
    p.sMax = 0.9;
    p.s0 = U(0.3, 0.7);
    p.pMgBox = 10.0;
    for (int j : game.graph.neighbors(i)) p.trades.push_back({-cap[i][j], cap[i][j], price[i][j]});
    game.prosumers.push_back(p);
  }
  const int T = opt.horizon;
  const double c0 = U(0.01, 0.03);
  for (int t = 0; t < T; ++t) game.schedule.cMg.push_back(opt.varying ? c0 * (1.0 + 0.2 * std::sin(0.3 * t)) : c0);
  for (int i = 0; i < n; ++i) {
    const double base = U(1.0, 5.0);
    std::vector<double> load;
    for (int t = 0; t < T; ++t) load.push_back(opt.varying ? base + 0.5 * std::sin(0.2 * t + i) : base);
    game.schedule.load.push_back(load);
  }
  return game;
}

inline std::vector<double> initial_socs(const Game& game) {
  std::vector<double> s;
  for (const auto& p : game.prosumers) s.push_back(p.s0);
  return s;
}

}  // namespace p2pgne::fixture
