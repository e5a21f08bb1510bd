#pragma once

// Dynamic regret against the oracle sequence, the kappa constants, the
// constant block used by the regret bound, and slack series for the
// estimation-error and dual-variable inequalities.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "p2pgne/constraints.hpp"
#include "p2pgne/error.hpp"
#include "p2pgne/graph.hpp"
#include "p2pgne/model.hpp"
#include "p2pgne/oracle.hpp"
#include "p2pgne/solver.hpp"

namespace p2pgne {

struct KappaBounds {
  double kappa1 = 0.0;  // sup ||x_i||
  double kappa2 = 0.0;  // sup ||g_i(x_i)||
  double kappa3 = 0.0;  // sup ||grad_{x_i} J_{i,t}||
  double kappa4 = 0.0;  // ||A_i||_2
  double kappa5 = 0.0;  // sup |G_i x_i - p_i^l(t)|
  double kappa6 = 0.0;  // ||G_i||_2
};

/// Upper bounds over the time-invariant box hull of chi_i (the SoC slab is
/// dropped, which can only enlarge the set), maximized over prosumers.
inline KappaBounds kappa_bounds(const Game& game, const std::vector<ConstraintBlocks>& blocks) {
  KappaBounds k;
  const double n = static_cast<double>(game.size());
  const double c_hi = game.schedule.cMg.empty()
                          ? 0.0
                          : *std::max_element(game.schedule.cMg.begin(), game.schedule.cMg.end());
  double grid_sum = 0.0;
  for (const auto& p : game.prosumers) grid_sum += p.pMgBox;
  auto sq = [](double v) { return v * v; };
  for (int i = 0; i < game.size(); ++i) {
    const auto& p = game.prosumer(i);
    const auto hull = local_feasible_hull(p, game.schedule.dt);
    const double M = hull.grid.max_abs();
    double x2 = sq(hull.gen.max_abs()) + sq(p.pCmax) + sq(p.pDmax) + sq(M);
    double g2 = std::max(sq(-(-M) + game.schedule.pMgMin / n) + sq(-M - game.schedule.pMgMax / n),
                         sq(-M + game.schedule.pMgMin / n) + sq(M - game.schedule.pMgMax / n));
    double grad2 = std::max(sq(2.0 * p.aG * hull.gen.lo + p.bG), sq(2.0 * p.aG * hull.gen.hi + p.bG)) +
                   sq(2.0 * p.aC * p.pCmax) + sq(2.0 * p.aD * p.pDmax) + sq(c_hi * (M + grid_sum));
    double lo = hull.gen.lo - p.pCmax - M;
    double hi = hull.gen.hi + p.pDmax + M;
    for (std::size_t l = 0; l < hull.trades.size(); ++l) {
      const auto& box = hull.trades[l];
      x2 += sq(box.max_abs());
      g2 += 2.0 * sq(box.max_abs());
      const double d = p.trades[l].price;
      grad2 += std::max(sq(2.0 * game.aTr * box.lo + d), sq(2.0 * game.aTr * box.hi + d));
      lo += box.lo;
      hi += box.hi;
    }
    double k5 = 0.0;
    for (int t = 0; t < game.horizon(); ++t) {
      const double load = game.load(i, t);
      k5 = std::max({k5, std::abs(lo - load), std::abs(hi - load)});
    }
    const auto& blk = blocks[static_cast<std::size_t>(i)];
    const double k4 = Eigen::JacobiSVD<Eigen::MatrixXd>(blk.A).singularValues()(0);
    k.kappa1 = std::max(k.kappa1, std::sqrt(x2));
    k.kappa2 = std::max(k.kappa2, std::sqrt(g2));
    k.kappa3 = std::max(k.kappa3, std::sqrt(grad2));
    k.kappa4 = std::max(k.kappa4, k4);
    k.kappa5 = std::max(k.kappa5, k5);
    k.kappa6 = std::max(k.kappa6, blk.G.norm());
  }
  for (double v : {k.kappa1, k.kappa2, k.kappa3, k.kappa4, k.kappa5, k.kappa6}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::UnboundedSet, "local feasible set is not compact");
  }
  return k;
}

struct TheoremConstants {
  double eta = 0.0;
  double theta = 0.0;
  double thetaStar = 0.0;
  double epsilon = 0.0;
  double c = 0.0;
  double varthetaLambda = 0.0;
  double varthetaMu = 0.0;
  double deltaLambda = 0.0;
  double deltaMu = 0.0;
  double pi1 = 0.0;
  double pi2 = 0.0;
  double pi3 = 0.0;
};

/// The vartheta's are the largest oracle multiplier norms over the horizon; the
/// oracle's lambda* is shared, so every prosumer carries the same one.
inline TheoremConstants theorem_constants(const Game& game, const KappaBounds& k, double epsilon,
                                          const std::vector<VgneSolution>& oracle) {
  TheoremConstants tc;
  const auto mono = monotonicity_constants(game);
  tc.eta = mono.eta;
  tc.theta = mono.theta;
  tc.thetaStar = mono.theta_star;
  tc.epsilon = epsilon;
  tc.c = game.graph.consensus_gain();
  for (const auto& s : oracle) {
    tc.varthetaLambda = std::max(tc.varthetaLambda, s.lambdaStar.norm());
    for (double m : s.muStar) tc.varthetaMu = std::max(tc.varthetaMu, std::abs(m));
  }
  const double n = static_cast<double>(game.size());
  const double rn = std::sqrt(n);
  tc.deltaLambda = k.kappa4 * (3.0 * rn * k.kappa2 + tc.varthetaLambda);
  tc.deltaMu = k.kappa6 * (3.0 * rn * k.kappa5 + tc.varthetaMu);
  const double dsum = tc.deltaLambda + tc.deltaMu;
  tc.pi1 = n * dsum * dsum + 4.0 * n * (k.kappa1 + k.kappa3) * dsum + 4.0 * n * k.kappa3 * k.kappa3;
  tc.pi2 = 2.0 * rn * (tc.c + tc.theta) * (2.0 * k.kappa1 + 2.0 * k.kappa3 + dsum);
  tc.pi3 = n * tc.c * tc.c + rn * tc.c + rn * tc.c * tc.theta * tc.theta + tc.theta * tc.theta;
  return tc;
}

struct RegretReport {
  std::vector<std::vector<double>> regret;   // [i][t-1] = R_i(t), t = 1..T
  std::vector<std::vector<double>> average;  // R_i(t) / t
  double phiT = 0.0;
  std::vector<double> boundCurve;  // sqrt(t((Phi_t + 1)/rho(t)^2 + sum_{s<=t} sqrt(rho(s)))), shape only

  int horizon() const { return regret.empty() ? 0 : static_cast<int>(regret.front().size()); }
  /// max_i R_i(t) / t.
  double max_average(int t) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& a : average) m = std::max(m, a.at(static_cast<std::size_t>(t - 1)));
    return m;
  }
  double max_regret(int t) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& r : regret) m = std::max(m, r.at(static_cast<std::size_t>(t - 1)));
    return m;
  }
};

/// R_i(T) = sum_t [J_{i,t}(y_i(t), x*_{-i}(t)) - J_{i,t}(x*(t))] with y the played actions.
inline RegretReport regret(const Game& game, const Trajectory& traj, const std::vector<VgneSolution>& oracle,
                           const StepSchedule& rho) {
  const std::size_t T = traj.rounds.size();
  if (oracle.size() != T) {
    throw Error(ErrorCode::LengthMismatch, "trajectory has " + std::to_string(T) + " rounds, oracle " +
                                               std::to_string(oracle.size()) + " solutions");
  }
  RegretReport rep;
  const int n = game.size();
  rep.regret.assign(static_cast<std::size_t>(n), std::vector<double>(T, 0.0));
  rep.average = rep.regret;
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  double phi = 0.0;
  double sqrt_rho_sum = 0.0;
  for (std::size_t r = 0; r < T; ++r) {
    const int t = static_cast<int>(r);
    const auto& star = oracle[r].xStar;
    const StackedDecision played = stacked(game, traj.rounds[r], true);
    for (int i = 0; i < n; ++i) {
      StackedDecision mixed = star;
      mixed.block(i) = played.block(i);
      acc[static_cast<std::size_t>(i)] += objective(i, t, mixed, game) - objective(i, t, star, game);
      rep.regret[static_cast<std::size_t>(i)][r] = acc[static_cast<std::size_t>(i)];
      rep.average[static_cast<std::size_t>(i)][r] = acc[static_cast<std::size_t>(i)] / static_cast<double>(r + 1);
    }
    if (r > 0) phi += (star.vec() - oracle[r - 1].xStar.vec()).norm();
    const double rt = rho(static_cast<long>(r + 1));
    sqrt_rho_sum += std::sqrt(rt);
    rep.boundCurve.push_back(std::sqrt(static_cast<double>(r + 1) * ((phi + 1.0) / (rt * rt) + sqrt_rho_sum)));
  }
  rep.phiT = phi;
  return rep;
}

struct LemmaMargins {
  // [state][i]; state r is the iterate after r rounds
  std::vector<std::vector<double>> lemma3;
  std::vector<std::vector<double>> lemma4Lambda;
  std::vector<std::vector<double>> lemma4Mu;
  double min3 = std::numeric_limits<double>::infinity();
  double min4 = std::numeric_limits<double>::infinity();
};

/// Slack = bound - observed.
///   estimation error, states r = 0..R:
///     ||e_i(r)|| <= eps^r ||e_i(0)|| + 2 sqrt(N) kappa1 sum_{k=0}^{r-1} eps^k rho(r-k)
///   duals, states r = 0..R-1 (rho(r+1) is the step that state r meets):
///     sqrt(rho(r+1)) ||lambda_i(r)|| <= 3 sqrt(N) kappa2,  sqrt(rho(r+1)) |mu_i(r)| <= 3 sqrt(N) kappa5
inline LemmaMargins lemma_margins(const Trajectory& traj, const KappaBounds& k, double epsilon,
                                  const StepSchedule& rho, int N) {
  LemmaMargins out;
  const double rn = std::sqrt(static_cast<double>(N));
  const std::size_t R = traj.rounds.size();
  auto state = [&](std::size_t r) -> const RoundRecord& { return r == 0 ? traj.initial : traj.rounds[r - 1]; };
  const auto& init = traj.initial.prosumers;
  double forcing = 0.0;  // sum_{k=0}^{r-1} eps^k rho(r-k)
  double eps_pow = 1.0;
  for (std::size_t r = 0; r <= R; ++r) {
    if (r > 0) {
      forcing = epsilon * forcing + rho(static_cast<long>(r));
      eps_pow *= epsilon;
    }
    const auto& rec = state(r);
    std::vector<double> s3;
    for (std::size_t i = 0; i < rec.prosumers.size(); ++i) {
      const double bound = eps_pow * init[i].errorNorm + 2.0 * rn * k.kappa1 * forcing;
      s3.push_back(bound - rec.prosumers[i].errorNorm);
      out.min3 = std::min(out.min3, s3.back());
    }
    out.lemma3.push_back(std::move(s3));
    if (r == R) break;
    const double sr = std::sqrt(rho(static_cast<long>(r + 1)));
    std::vector<double> sl, sm;
    for (const auto& p : rec.prosumers) {
      sl.push_back(3.0 * rn * k.kappa2 - sr * p.lambda.norm());
      sm.push_back(3.0 * rn * k.kappa5 - sr * std::abs(p.mu));
      out.min4 = std::min({out.min4, sl.back(), sm.back()});
    }
    out.lemma4Lambda.push_back(std::move(sl));
    out.lemma4Mu.push_back(std::move(sm));
  }
  return out;
}

struct SublinearityFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool usedShift = false;  // |R| + 1 was fitted because some R <= 0
};

/// Least-squares slope of log R against log T.
inline SublinearityFit sublinearity_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw Error(ErrorCode::InsufficientData, "need at least 3 horizons");
  SublinearityFit fit;
  for (const auto& [T, R] : points) {
    if (!(T > 0.0)) throw Error(ErrorCode::InsufficientData, "horizon must be positive");
    if (!(R > 0.0)) fit.usedShift = true;
  }
  const double m = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [T, R] : points) {
    const double x = std::log(T);
    const double y = std::log(fit.usedShift ? std::abs(R) + 1.0 : R);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = m * sxx - sx * sx;
  if (den <= 0.0) throw Error(ErrorCode::InsufficientData, "horizons must differ");
  fit.slope = (m * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / m;
  return fit;
}

struct DecayCheck {
  double ratio = 0.0;      // value(late) / value(early)
  double worstRipple = 0.0;  // max over t >= from of value(t) / min_{from <= s <= t} value(s) - 1
  bool positive = true;    // every value used was > 0 (log scale defined)
};

/// Decay of max_i R_i(t)/t: ratio between two times and ripple after `from` on a log scale.
inline DecayCheck average_regret_decay(const RegretReport& rep, int early, int late, int from) {
  DecayCheck d;
  const double e = rep.max_average(early);
  const double l = rep.max_average(late);
  d.positive = e > 0.0 && l > 0.0;
  d.ratio = l / e;
  double running_min = std::numeric_limits<double>::infinity();
  for (int t = from; t <= rep.horizon(); ++t) {
    const double v = rep.max_average(t);
    if (!(v > 0.0)) {
      d.positive = false;
      continue;
    }
    running_min = std::min(running_min, v);
    d.worstRipple = std::max(d.worstRipple, v / running_min - 1.0);
  }
  return d;
}

}  // namespace p2pgne
