#pragma once

// Distributed online GNE tracker over a round-synchronous message-passing
// abstraction. Each prosumer owns (x_i, xbar^i, lambda_i, mu_i, soc_i); in a
// round it reads only its own state and the round-start messages of its
// neighbors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "p2pgne/constraints.hpp"
#include "p2pgne/error.hpp"
#include "p2pgne/graph.hpp"
#include "p2pgne/model.hpp"

namespace p2pgne {

/// rho(t) = K / (a t + b)^alpha for t = 1, 2, ..., or an explicit table.
class StepSchedule {
 public:
  StepSchedule() = default;

  static StepSchedule power(double K, double a, double b, double alpha) {
    if (!(K > 0.0 && K <= 1.0) || !(a > 0.0) || !(b > 0.0) || !(alpha > 0.0 && alpha < 0.5)) {
      throw Error(ErrorCode::StepOutOfRange, "step schedule needs K in (0,1], a,b > 0, alpha in (0,1/2)");
    }
    StepSchedule s;
    s.K_ = K;
    s.a_ = a;
    s.b_ = b;
    s.alpha_ = alpha;
    return s;
  }

  static StepSchedule table(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyHorizon, "step table is empty");
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!(values[k] > 0.0 && values[k] < 1.0)) {
        throw Error(ErrorCode::StepOutOfRange, "step " + std::to_string(k + 1) + " not in (0,1)");
      }
      if (k > 0 && values[k] > values[k - 1]) {
        throw Error(ErrorCode::StepOutOfRange, "step table increases at entry " + std::to_string(k + 1));
      }
    }
    StepSchedule s;
    s.table_ = std::move(values);
    return s;
  }

  /// The schedule used in the reference case: 0.8 (5 / (0.1 t + 5))^(1/3).
  static StepSchedule reference() { return power(0.8, 0.02, 1.0, 1.0 / 3.0); }

  bool is_table() const noexcept { return !table_.empty(); }
  double K() const noexcept { return K_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double alpha() const noexcept { return alpha_; }
  const std::vector<double>& values() const noexcept { return table_; }

  /// rho(t), t >= 1.
  double operator()(long t) const {
    if (t < 1) throw Error(ErrorCode::StepOutOfRange, "step index starts at 1");
    double r = 0.0;
    if (is_table()) {
      if (t > static_cast<long>(table_.size())) {
        throw Error(ErrorCode::StepOutOfRange, "step table has no entry " + std::to_string(t));
      }
      r = table_[static_cast<std::size_t>(t - 1)];
    } else {
      r = K_ / std::pow(a_ * static_cast<double>(t) + b_, alpha_);
    }
    if (!(r > 0.0 && r < 1.0)) throw Error(ErrorCode::StepOutOfRange, "rho(" + std::to_string(t) + ") not in (0,1)");
    return r;
  }

  /// rho(1..T).
  std::vector<double> horizon(long T) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(std::max(0L, T)));
    for (long t = 1; t <= T; ++t) out.push_back((*this)(t));
    return out;
  }

  friend bool operator==(const StepSchedule&, const StepSchedule&) = default;

 private:
  double K_ = 0.8;
  double a_ = 0.02;
  double b_ = 1.0;
  double alpha_ = 1.0 / 3.0;
  std::vector<double> table_;
};

struct ProsumerState {
  Decision x;
  StackedDecision estimate;  // xbar^i; block i mirrors x
  Eigen::VectorXd lambda;
  double mu = 0.0;
  double soc = 0.0;
};

/// What a neighbor publishes at the start of a round.
struct RoundMessage {
  int sender = -1;
  StackedDecision estimate;
  Eigen::VectorXd lambda;
};

namespace detail {

inline const RoundMessage& message_from(int j, const std::vector<RoundMessage>& msgs) {
  for (const auto& m : msgs) {
    if (m.sender == j) return m;
  }
  throw Error(ErrorCode::MissingNeighborMessage, "no message from prosumer " + std::to_string(j + 1));
}

inline void check_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorCode::StepOutOfRange, "rho " + std::to_string(rho) + " not in (0,1)");
}

}  // namespace detail

/// Update (a): x_i(t+1) = (1-rho) x_i + rho P_chi{x_i - rho[grad + rho(A'lambda + G'mu) + c sum_j (x_i - xbar_i^j)]}.
inline Decision step_primal(int i, int t, const ProsumerState& state, const std::vector<RoundMessage>& msgs,
                            const Game& game, const ConstraintBlocks& blocks, const LocalFeasibleSet& set,
                            double rho) {
  detail::check_rho(rho);
  const Eigen::VectorXd& xi = state.x.vec();
  Eigen::VectorXd consensus = Eigen::VectorXd::Zero(xi.size());
  for (int j : game.graph.neighbors(i)) consensus += xi - detail::message_from(j, msgs).estimate.block(i);
  const Eigen::VectorXd grad = partial_gradient(i, t, state.x, state.estimate, game);
  const Eigen::VectorXd dir = grad + rho * (blocks.A.transpose() * state.lambda + blocks.G.transpose() * state.mu) +
                              game.graph.consensus_gain() * consensus;
  const Decision target = project_chi(Decision(Eigen::VectorXd(xi - rho * dir)), set);
  return Decision(Eigen::VectorXd((1.0 - rho) * xi + rho * target.vec()));
}

/// Update (b): xbar^i -= c rho sum_j w_ij (xbar^i - xbar^j); block i is then set to x_i(t+1).
inline StackedDecision step_estimate(int i, const ProsumerState& state, const std::vector<RoundMessage>& msgs,
                                     const TradingGraph& graph, const Decision& xNext, double rho) {
  detail::check_rho(rho);
  const Eigen::VectorXd& own = state.estimate.vec();
  Eigen::VectorXd mix = Eigen::VectorXd::Zero(own.size());
  for (int j : graph.neighbors(i)) mix += graph.weight(i, j) * (own - detail::message_from(j, msgs).estimate.vec());
  StackedDecision out(state.estimate.layout(), Eigen::VectorXd(own - graph.consensus_gain() * rho * mix));
  out.set(i, xNext);
  return out;
}

/// Update (c): lambda_i(t+1) = P_+{(1-rho) sum_{j in N_i + i} (w_ij/w0) lambda_j + rho[A_i(2x+ - x) - b_i]}.
inline Eigen::VectorXd step_dual_lambda(int i, const ProsumerState& state, const std::vector<RoundMessage>& msgs,
                                        const TradingGraph& graph, const ConstraintBlocks& blocks,
                                        const Decision& xNext, double rho) {
  detail::check_rho(rho);
  Eigen::VectorXd mix = (graph.weight(i, i) / graph.w0()) * state.lambda;
  for (int j : graph.neighbors(i)) mix += (graph.weight(i, j) / graph.w0()) * detail::message_from(j, msgs).lambda;
  const Eigen::VectorXd extrapolated = 2.0 * xNext.vec() - state.x.vec();
  return ((1.0 - rho) * mix + rho * (blocks.A * extrapolated - blocks.b)).cwiseMax(0.0);
}

/// Update (d): mu_i(t+1) = (1-rho) mu_i + rho[G_i(2x+ - x) - p_i^l(t)].
inline double step_dual_mu(const ProsumerState& state, const ConstraintBlocks& blocks, const Decision& xNext,
                           double load, double rho) {
  detail::check_rho(rho);
  const Eigen::VectorXd extrapolated = 2.0 * xNext.vec() - state.x.vec();
  return (1.0 - rho) * state.mu + rho * (blocks.G.dot(extrapolated) - load);
}

enum class RunMode { Online, Frozen };
enum class InitRule { Local, Zero };

struct SolverConfig {
  StepSchedule rho = StepSchedule::reference();
  RunMode mode = RunMode::Online;
  InitRule init = InitRule::Local;
  int threads = 1;
  int frozenInterval = 0;          // schedule index used in frozen mode
  long frozenMaxIterations = 200000;
  double frozenTolerance = 1e-9;   // ||x(r+1) - x(r)||_inf
  bool keepRounds = false;         // frozen mode: store every round, not only the last one
};

/// Called as (reader, source) whenever prosumer `reader` consumes a message. Must be
/// thread-safe when threads > 1.
using ReadObserver = std::function<void(int, int)>;

struct ProsumerSnapshot {
  Eigen::VectorXd x;        // algorithm iterate
  Eigen::VectorXd played;   // action applied to the physical system (online mode)
  Eigen::VectorXd lambda;
  double mu = 0.0;
  double soc = 0.0;         // state of charge after the round's played action
  double errorNorm = 0.0;   // ||e_i||, e_i^j = xbar_i^j - x_i over all j
};

/// State after a round (or the initial state). Round r uses rho(r+1) and interval r.
struct RoundRecord {
  long round = 0;
  double rho = 0.0;
  std::vector<ProsumerSnapshot> prosumers;
};

struct Trajectory {
  RunMode mode = RunMode::Online;
  RoundRecord initial;
  std::vector<RoundRecord> rounds;  // rounds[r] holds the state x(r+1) reached by round r
  std::vector<ProsumerState> final;
  std::vector<std::vector<double>> socPath;  // [r][i], SoC at the start of round r
  long iterations = 0;
  bool converged = false;
};

namespace detail {

inline double estimation_error(int i, const std::vector<ProsumerState>& states) {
  double s = 0.0;
  for (const auto& st : states) s += (st.estimate.block(i) - states[static_cast<std::size_t>(i)].x.vec()).squaredNorm();
  return std::sqrt(s);
}

inline RoundRecord snapshot(long round, double rho, const std::vector<ProsumerState>& states,
                            const std::vector<Decision>* played, const std::vector<double>& socs) {
  RoundRecord rec;
  rec.round = round;
  rec.rho = rho;
  for (std::size_t i = 0; i < states.size(); ++i) {
    ProsumerSnapshot p;
    p.x = states[i].x.vec();
    p.played = played ? (*played)[i].vec() : states[i].x.vec();
    p.lambda = states[i].lambda;
    p.mu = states[i].mu;
    p.soc = socs[i];
    p.errorNorm = estimation_error(static_cast<int>(i), states);
    rec.prosumers.push_back(std::move(p));
  }
  return rec;
}

inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline Decision initial_decision(const Game& game, int i, int t, const LocalFeasibleSet& set, InitRule rule) {
  Decision d(game.graph.degree(i));
  if (rule == InitRule::Local) {
    const double load = game.load(i, t);
    d.pG() = set.gen.clamp(load);
    d.pMg() = set.grid.clamp(load - d.pG());
  }
  return project_chi(d, set);
}

}  // namespace detail

/// Initial states: x_i(0) in chi_i, xbar^i(0) zero except its own block, zero duals.
inline std::vector<ProsumerState> initial_states(const Game& game, const std::vector<ConstraintBlocks>& blocks,
                                                 InitRule rule, int interval) {
  const Layout layout = game.layout();
  std::vector<ProsumerState> out;
  for (int i = 0; i < game.size(); ++i) {
    const auto& p = game.prosumer(i);
    ProsumerState st;
    st.soc = p.s0;
    const auto set = local_feasible_set(p, st.soc, game.schedule.dt);
    st.x = detail::initial_decision(game, i, interval, set, rule);
    st.estimate = StackedDecision(layout);
    st.estimate.set(i, st.x);
    st.lambda = Eigen::VectorXd::Zero(blocks[static_cast<std::size_t>(i)].rows());
    out.push_back(std::move(st));
  }
  return out;
}

/// One synchronous round of updates (a)-(d) for every prosumer at schedule index t.
/// Returns the new states; `states` is left untouched.
inline std::vector<ProsumerState> algorithm_round(const Game& game, const std::vector<ConstraintBlocks>& blocks,
                                                  const std::vector<ProsumerState>& states,
                                                  const std::vector<LocalFeasibleSet>& sets, int t, double rho,
                                                  int threads = 1, const ReadObserver& observer = {}) {
  const int n = game.size();
  std::vector<RoundMessage> published;
  published.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const auto& st = states[static_cast<std::size_t>(j)];
    published.push_back({j, st.estimate, st.lambda});
  }
  std::vector<ProsumerState> next(states.size());
  detail::parallel_for(n, threads, [&](int i) {
    const auto& st = states[static_cast<std::size_t>(i)];
    std::vector<RoundMessage> inbox;
    for (int j : game.graph.neighbors(i)) {
      if (observer) observer(i, j);
      inbox.push_back(published[static_cast<std::size_t>(j)]);
    }
    const auto& blk = blocks[static_cast<std::size_t>(i)];
    ProsumerState out;
    out.x = step_primal(i, t, st, inbox, game, blk, sets[static_cast<std::size_t>(i)], rho);
    out.estimate = step_estimate(i, st, inbox, game.graph, out.x, rho);
    out.lambda = step_dual_lambda(i, st, inbox, game.graph, blk, out.x, rho);
    out.mu = step_dual_mu(st, blk, out.x, game.load(i, t), rho);
    out.soc = st.soc;
    next[static_cast<std::size_t>(i)] = std::move(out);
  });
  return next;
}

namespace detail {

inline double advance_soc(int i, double soc, const Decision& played, const Game& game) {
  const auto& p = game.prosumer(i);
  double s = soc_step(soc, played.pC(), played.pD(), p, game.schedule.dt);
  constexpr double slack = 1e-12;
  if (s < p.sMin - slack || s > p.sMax + slack) {
    throw Error(ErrorCode::InfeasibleSoC, "state of charge of prosumer " + std::to_string(i + 1) +
                                              " left its bounds: " + std::to_string(s));
  }
  return std::clamp(s, p.sMin, p.sMax);
}

}  // namespace detail

/// Runs Algorithm 1. Online: one round per market interval, the played action is
/// P_chi(t)(x_i(t+1)) and the SoC advances on it. Frozen: interval `frozenInterval`
/// and the initial SoC are held fixed and rounds repeat until the iterate settles.
inline Trajectory run_horizon(const Game& game, const SolverConfig& cfg, const ReadObserver& observer = {}) {
  const auto blocks = build_all_blocks(game);
  const int n = game.size();
  const bool online = cfg.mode == RunMode::Online;
  if (!online && (cfg.frozenInterval < 0 || cfg.frozenInterval >= game.horizon())) {
    throw Error(ErrorCode::TimeOutOfRange, "frozen interval outside horizon");
  }
  if (online && game.horizon() < 1) throw Error(ErrorCode::EmptyHorizon, "horizon is empty");
  Trajectory traj;
  traj.mode = cfg.mode;
  auto states = initial_states(game, blocks, cfg.init, online ? 0 : cfg.frozenInterval);
  std::vector<double> socs;
  for (const auto& st : states) socs.push_back(st.soc);
  traj.initial = detail::snapshot(0, 0.0, states, nullptr, socs);

  const long rounds = online ? game.horizon() : cfg.frozenMaxIterations;
  std::vector<LocalFeasibleSet> sets(static_cast<std::size_t>(n));
  auto refresh_sets = [&] {
    for (int i = 0; i < n; ++i) {
      sets[static_cast<std::size_t>(i)] =
          local_feasible_set(game.prosumer(i), socs[static_cast<std::size_t>(i)], game.schedule.dt);
    }
  };
  refresh_sets();
  for (long r = 0; r < rounds; ++r) {
    const int t = online ? static_cast<int>(r) : cfg.frozenInterval;
    const double rho = cfg.rho(r + 1);
    auto next = algorithm_round(game, blocks, states, sets, t, rho, cfg.threads, observer);
    if (online) {
      traj.socPath.push_back(socs);
      std::vector<Decision> played;
      for (int i = 0; i < n; ++i) {
        played.push_back(project_chi(next[static_cast<std::size_t>(i)].x, sets[static_cast<std::size_t>(i)]));
      }
      std::vector<double> soc_next(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        soc_next[static_cast<std::size_t>(i)] =
            detail::advance_soc(i, socs[static_cast<std::size_t>(i)], played[static_cast<std::size_t>(i)], game);
      }
      traj.rounds.push_back(detail::snapshot(r, rho, next, &played, soc_next));
      socs = std::move(soc_next);
      for (int i = 0; i < n; ++i) next[static_cast<std::size_t>(i)].soc = socs[static_cast<std::size_t>(i)];
      refresh_sets();
      states = std::move(next);
      traj.iterations = r + 1;
      continue;
    }
    double change = 0.0;
    for (int i = 0; i < n; ++i) {
      change = std::max(change, (next[static_cast<std::size_t>(i)].x.vec() - states[static_cast<std::size_t>(i)].x.vec())
                                    .lpNorm<Eigen::Infinity>());
    }
    const bool settled = change < cfg.frozenTolerance;
    if (cfg.keepRounds || settled || r + 1 == rounds) {
      traj.rounds.push_back(detail::snapshot(r, rho, next, nullptr, socs));
    }
    states = std::move(next);
    traj.iterations = r + 1;
    if (settled) {
      traj.converged = true;
      break;
    }
  }
  traj.final = std::move(states);
  return traj;
}

/// Stacked iterate of a record.
inline StackedDecision stacked(const Game& game, const RoundRecord& rec, bool played = false) {
  StackedDecision x(game.layout());
  for (int i = 0; i < game.size(); ++i) {
    const auto& p = rec.prosumers[static_cast<std::size_t>(i)];
    x.block(i) = played ? p.played : p.x;
  }
  return x;
}

}  // namespace p2pgne
