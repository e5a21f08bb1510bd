#pragma once

// Small dense convex quadratic programs
//
//   minimize 1/2 x'Hx + f'x   subject to   lo_r <= a_r'x <= hi_r  for every row r
//
// with H symmetric positive definite. Two independent solvers live here: a
// Mehrotra predictor-corrector interior-point method followed by an
// active-set polish, and an exhaustive active-set enumeration used as a
// reference on tiny problems.
//
// Row multipliers are signed: stationarity reads Hx + f + sum_r y_r a_r = 0,
// with y_r >= 0 when the upper side is active and y_r <= 0 on the lower side.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "p2pgne/error.hpp"

namespace p2pgne {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double lo = -kInf;
  double hi = kInf;

  double eval(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& [k, a] : terms) v += a * x[k];
    return v;
  }
  bool is_equality() const noexcept { return lo == hi; }
};

struct QuadraticProgram {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  std::vector<LinearRow> rows;

  int dim() const noexcept { return static_cast<int>(f.size()); }
};

enum class RowSide : std::int8_t { Inactive = 0, Lower = -1, Upper = 1, Equality = 2 };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // signed row multipliers
  std::vector<RowSide> active;
  int iterations = 0;
  std::int64_t combinations = 0;  // enumeration only
  bool polished = false;
};

struct QpResidual {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual_sign = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, dual_sign, complementarity}); }
};

inline QpResidual qp_residual(const QuadraticProgram& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  QpResidual r;
  Eigen::VectorXd grad = qp.H * x + qp.f;
  for (std::size_t k = 0; k < qp.rows.size(); ++k) {
    const auto& row = qp.rows[k];
    const double yk = y[static_cast<Eigen::Index>(k)];
    for (const auto& [j, a] : row.terms) grad[j] += yk * a;
    const double v = row.eval(x);
    r.primal = std::max({r.primal, row.lo - v, v - row.hi});
    if (!row.is_equality()) {
      if (yk > 0.0) {
        r.complementarity = std::max(r.complementarity, yk * std::abs(row.hi - v));
        if (!std::isfinite(row.hi)) r.dual_sign = std::max(r.dual_sign, yk);
      } else if (yk < 0.0) {
        r.complementarity = std::max(r.complementarity, -yk * std::abs(v - row.lo));
        if (!std::isfinite(row.lo)) r.dual_sign = std::max(r.dual_sign, -yk);
      }
    }
  }
  r.stationarity = grad.lpNorm<Eigen::Infinity>();
  return r;
}

namespace detail {

inline Eigen::RowVectorXd dense_row(const LinearRow& row, int n) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(n);
  for (const auto& [k, a] : row.terms) out[k] += a;
  return out;
}

/// Solves the equality-constrained QP with the given rows held at the given values.
/// Returns nullopt when the active rows are linearly dependent.
inline std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> solve_eqp(const QuadraticProgram& qp,
                                                                            const Eigen::MatrixXd& A,
                                                                            const Eigen::VectorXd& rhs) {
  const auto n = qp.H.rows();
  const auto a = A.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + a, n + a);
  K.topLeftCorner(n, n) = qp.H;
  if (a > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> rank_check(A);
    if (rank_check.rank() < a) return std::nullopt;
    K.topRightCorner(n, a) = A.transpose();
    K.bottomLeftCorner(a, n) = A;
  }
  Eigen::VectorXd b(n + a);
  b.head(n) = -qp.f;
  b.tail(a) = rhs;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  Eigen::VectorXd sol = lu.solve(b);
  if (!sol.allFinite()) return std::nullopt;
  return std::make_pair(Eigen::VectorXd(sol.head(n)), Eigen::VectorXd(sol.tail(a)));
}

inline double row_scale(const LinearRow& row) {
  double s = 1.0;
  if (std::isfinite(row.lo)) s = std::max(s, std::abs(row.lo));
  if (std::isfinite(row.hi)) s = std::max(s, std::abs(row.hi));
  return s;
}

/// Checks a candidate produced for a fixed active set; fills full multiplier vector.
inline bool accept_candidate(const QuadraticProgram& qp, const std::vector<int>& active_rows,
                             const std::vector<RowSide>& sides, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y_active, double tol, Eigen::VectorXd& y_full) {
  for (const auto& row : qp.rows) {
    const double v = row.eval(x);
    const double t = tol * row_scale(row);
    if (v < row.lo - t || v > row.hi + t) return false;
  }
  y_full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.rows.size()));
  for (std::size_t k = 0; k < active_rows.size(); ++k) {
    const double yk = y_active[static_cast<Eigen::Index>(k)];
    const RowSide side = sides[k];
    const double t = tol * (1.0 + std::abs(yk));
    if (side == RowSide::Upper && yk < -t) return false;
    if (side == RowSide::Lower && yk > t) return false;
    double clean = yk;
    if (side == RowSide::Upper) clean = std::max(0.0, yk);
    if (side == RowSide::Lower) clean = std::min(0.0, yk);
    y_full[active_rows[k]] = clean;
  }
  return true;
}

/// Lawson-Hanson nonnegative least squares: argmin ||C u - d|| subject to u >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& C, const Eigen::VectorXd& d, int max_iterations = 500) {
  const auto m = C.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  std::vector<char> passive(static_cast<std::size_t>(m), 0);
  const double tol = 1e-14 * (1.0 + C.cwiseAbs().maxCoeff()) * (1.0 + d.cwiseAbs().maxCoeff());
  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (passive[static_cast<std::size_t>(k)]) idx.push_back(k);
    }
    Eigen::MatrixXd Cp(C.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Cp.col(static_cast<Eigen::Index>(k)) = C.col(idx[k]);
    const Eigen::VectorXd zp = Cp.completeOrthogonalDecomposition().solve(d);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
    return z;
  };
  for (int outer = 0; outer < max_iterations; ++outer) {
    const Eigen::VectorXd w = C.transpose() * (d - C * u);
    Eigen::Index best = -1;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (!passive[static_cast<std::size_t>(k)] && w[k] > tol && (best < 0 || w[k] > w[best])) best = k;
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = 1;
    for (int inner = 0; inner < max_iterations; ++inner) {
      const Eigen::VectorXd z = solve_passive();
      bool feasible = true;
      double alpha = 1.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (passive[static_cast<std::size_t>(k)] && z[k] <= 0.0) {
          feasible = false;
          alpha = std::min(alpha, u[k] / (u[k] - z[k]));
        }
      }
      if (feasible) {
        u = z;
        break;
      }
      u += alpha * (z - u);
      for (Eigen::Index k = 0; k < m; ++k) {
        if (passive[static_cast<std::size_t>(k)] && u[k] <= tol) {
          passive[static_cast<std::size_t>(k)] = 0;
          u[k] = 0.0;
        }
      }
    }
  }
  return u;
}

/// Sign-constrained multipliers at a fixed x for every guessed-active row, used when
/// the active set is degenerate and the equality-QP multipliers are not unique.
inline std::optional<Eigen::VectorXd> degenerate_multipliers(const QuadraticProgram& qp,
                                                             const std::vector<RowSide>& guess,
                                                             const Eigen::VectorXd& x, double tol) {
  const int n = qp.dim();
  std::vector<std::pair<int, double>> cols;  // (row, sign of y)
  for (int r = 0; r < static_cast<int>(qp.rows.size()); ++r) {
    switch (guess[static_cast<std::size_t>(r)]) {
      case RowSide::Upper: cols.emplace_back(r, 1.0); break;
      case RowSide::Lower: cols.emplace_back(r, -1.0); break;
      case RowSide::Equality:
        cols.emplace_back(r, 1.0);
        cols.emplace_back(r, -1.0);
        break;
      case RowSide::Inactive: break;
    }
  }
  const Eigen::VectorXd g = qp.H * x + qp.f;
  Eigen::MatrixXd C(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    C.col(static_cast<Eigen::Index>(k)) =
        cols[k].second * dense_row(qp.rows[static_cast<std::size_t>(cols[k].first)], n).transpose();
  }
  const Eigen::VectorXd u = nnls(C, -g);
  if ((C * u + g).lpNorm<Eigen::Infinity>() > tol * (1.0 + g.lpNorm<Eigen::Infinity>())) return std::nullopt;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.rows.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) y[cols[k].first] += cols[k].second * u[static_cast<Eigen::Index>(k)];
  return y;
}

}  // namespace detail

/// Solves with a fixed guess of the active set; rows that are linearly dependent on
/// earlier ones are skipped. Returns nullopt when the guess is not optimal.
inline std::optional<QpSolution> solve_with_active_set(const QuadraticProgram& qp,
                                                       const std::vector<RowSide>& guess,
                                                       const std::vector<int>& priority, double tol = 1e-9) {
  const int n = qp.dim();
  std::vector<int> rows;
  std::vector<RowSide> sides;
  Eigen::MatrixXd A(0, n);
  Eigen::VectorXd rhs(0);
  for (int r : priority) {
    const RowSide side = guess[static_cast<std::size_t>(r)];
    if (side == RowSide::Inactive) continue;
    const auto& row = qp.rows[static_cast<std::size_t>(r)];
    Eigen::MatrixXd trial(A.rows() + 1, n);
    trial << A, detail::dense_row(row, n);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
    if (lu.rank() < trial.rows()) continue;
    A = std::move(trial);
    rhs.conservativeResize(rhs.size() + 1);
    rhs[rhs.size() - 1] = side == RowSide::Lower ? row.lo : row.hi;
    rows.push_back(r);
    sides.push_back(side);
  }
  auto eqp = detail::solve_eqp(qp, A, rhs);
  if (!eqp) return std::nullopt;
  QpSolution out;
  if (!detail::accept_candidate(qp, rows, sides, eqp->first, eqp->second, tol, out.y)) {
    // a skipped dependent row may be needed to carry part of the multiplier
    const bool degenerate = static_cast<std::size_t>(std::count_if(guess.begin(), guess.end(), [](RowSide s) {
                              return s != RowSide::Inactive;
                            })) > rows.size();
    if (!degenerate || !detail::accept_candidate(qp, {}, {}, eqp->first, Eigen::VectorXd(), tol, out.y)) {
      return std::nullopt;
    }
    auto y = detail::degenerate_multipliers(qp, guess, eqp->first, tol);
    if (!y) return std::nullopt;
    out.y = *y;
  }
  out.x = eqp->first;
  out.active = guess;
  out.polished = true;
  return out;
}

/// Primal active-set method started from a point that is feasible up to rounding and
/// a guess of the working set. The first step moves onto the guessed rows exactly.
/// Returns nullopt on cycling or when the start is infeasible.
inline std::optional<QpSolution> primal_active_set(const QuadraticProgram& qp, const Eigen::VectorXd& x0,
                                                   const std::vector<RowSide>& guess, const std::vector<int>& priority,
                                                   double tol = 1e-9) {
  const int n = qp.dim();
  const int m = static_cast<int>(qp.rows.size());
  Eigen::VectorXd x = x0;
  for (const auto& row : qp.rows) {
    const double v = row.eval(x);
    const double t = 1e-6 * detail::row_scale(row);
    if (v < row.lo - t || v > row.hi + t) return std::nullopt;
  }
  std::vector<int> work;
  std::vector<RowSide> side(static_cast<std::size_t>(m), RowSide::Inactive);
  Eigen::MatrixXd A(0, n);
  auto try_add = [&](int r, RowSide sd) {
    Eigen::MatrixXd trial(A.rows() + 1, n);
    trial << A, detail::dense_row(qp.rows[static_cast<std::size_t>(r)], n);
    if (Eigen::FullPivLU<Eigen::MatrixXd>(trial).rank() < trial.rows()) return false;
    A = std::move(trial);
    work.push_back(r);
    side[static_cast<std::size_t>(r)] = sd;
    return true;
  };
  for (int r = 0; r < m; ++r) {
    if (qp.rows[static_cast<std::size_t>(r)].is_equality()) try_add(r, RowSide::Equality);
  }
  for (int r : priority) {
    const RowSide g = guess[static_cast<std::size_t>(r)];
    if (g == RowSide::Upper || g == RowSide::Lower) try_add(r, g);
  }
  auto target = [&](int r) {
    const auto& row = qp.rows[static_cast<std::size_t>(r)];
    return side[static_cast<std::size_t>(r)] == RowSide::Lower ? row.lo : row.hi;
  };

  const int cap = 20 * (m + n) + 50;
  for (int it = 0; it < cap; ++it) {
    if (it > 0) {
      // rows broken by the correction step join the working set
      int worst = -1;
      double worst_gap = 0.0;
      for (int r = 0; r < m; ++r) {
        if (side[static_cast<std::size_t>(r)] != RowSide::Inactive) continue;
        const auto& row = qp.rows[static_cast<std::size_t>(r)];
        const double v = row.eval(x);
        const double gap = std::max(row.lo - v, v - row.hi) / detail::row_scale(row);
        if (gap > std::max(worst_gap, 1e-13)) {
          worst_gap = gap;
          worst = r;
        }
      }
      if (worst >= 0) {
        const auto& row = qp.rows[static_cast<std::size_t>(worst)];
        if (!try_add(worst, row.eval(x) < row.lo ? RowSide::Lower : RowSide::Upper)) return std::nullopt;
        continue;
      }
    }
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(work.size()));
    for (std::size_t k = 0; k < work.size(); ++k) {
      rhs[static_cast<Eigen::Index>(k)] = target(work[k]) - qp.rows[static_cast<std::size_t>(work[k])].eval(x);
    }
    QuadraticProgram step{qp.H, qp.H * x + qp.f, {}};
    auto eqp = detail::solve_eqp(step, A, rhs);
    if (!eqp) return std::nullopt;
    const Eigen::VectorXd& p = eqp->first;
    const Eigen::VectorXd& y = eqp->second;
    if (p.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      x += p;
      int worst = -1;
      double worst_val = 0.0;
      for (std::size_t k = 0; k < work.size(); ++k) {
        const RowSide sd = side[static_cast<std::size_t>(work[k])];
        const double yk = y[static_cast<Eigen::Index>(k)];
        const double wrong = sd == RowSide::Upper ? -yk : (sd == RowSide::Lower ? yk : 0.0);
        if (wrong > worst_val) {
          worst_val = wrong;
          worst = static_cast<int>(k);
        }
      }
      if (worst < 0 || worst_val <= 1e-14 * (1.0 + y.lpNorm<Eigen::Infinity>())) {
        QpSolution out;
        out.x = x;
        out.y = Eigen::VectorXd::Zero(m);
        for (std::size_t k = 0; k < work.size(); ++k) {
          const RowSide sd = side[static_cast<std::size_t>(work[k])];
          double yk = y[static_cast<Eigen::Index>(k)];
          if (sd == RowSide::Upper) yk = std::max(0.0, yk);
          if (sd == RowSide::Lower) yk = std::min(0.0, yk);
          out.y[work[k]] = yk;
        }
        out.active = side;
        out.iterations = it;
        out.polished = true;
        return out;
      }
      side[static_cast<std::size_t>(work[static_cast<std::size_t>(worst)])] = RowSide::Inactive;
      work.erase(work.begin() + worst);
      Eigen::MatrixXd reduced(A.rows() - 1, n);
      for (Eigen::Index k = 0, q = 0; k < A.rows(); ++k) {
        if (k != worst) reduced.row(q++) = A.row(k);
      }
      A = std::move(reduced);
      continue;
    }
    if (it == 0 && rhs.size() > 0 && rhs.lpNorm<Eigen::Infinity>() > 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      // correction onto the guessed rows, not blocked by the ratio test
      x += p;
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    RowSide blocking_side = RowSide::Inactive;
    for (int r = 0; r < m; ++r) {
      if (side[static_cast<std::size_t>(r)] != RowSide::Inactive) continue;
      const auto& row = qp.rows[static_cast<std::size_t>(r)];
      double d = 0.0;
      for (const auto& [j, a] : row.terms) d += a * p[j];
      if (std::abs(d) <= 1e-14 * (1.0 + p.lpNorm<Eigen::Infinity>())) continue;
      const double v = row.eval(x);
      double a_r = kInf;
      RowSide sd = RowSide::Inactive;
      if (d > 0.0 && std::isfinite(row.hi)) {
        a_r = std::max(0.0, (row.hi - v) / d);
        sd = RowSide::Upper;
      } else if (d < 0.0 && std::isfinite(row.lo)) {
        a_r = std::max(0.0, (row.lo - v) / d);
        sd = RowSide::Lower;
      }
      if (a_r < alpha) {
        alpha = a_r;
        blocking = r;
        blocking_side = sd;
      }
    }
    x += alpha * p;
    if (blocking >= 0 && !try_add(blocking, blocking_side)) return std::nullopt;
  }
  (void)tol;
  return std::nullopt;
}

struct InteriorPointOptions {
  double tolerance = 1e-11;
  int max_iterations = 200;
  std::optional<Eigen::VectorXd> initial_x;
  bool polish = true;
};

/// Mehrotra predictor-corrector on the standard-form KKT system, then an
/// active-set polish so that the returned point is exact to rounding.
inline QpSolution interior_point_qp(const QuadraticProgram& qp, const InteriorPointOptions& opt = {}) {
  const int n = qp.dim();
  // Split rows into equalities and one-sided inequalities c'x <= d.
  std::vector<int> eq_rows;
  struct Side {
    int row;
    double sign;
  };
  std::vector<Side> ineq;
  for (int r = 0; r < static_cast<int>(qp.rows.size()); ++r) {
    const auto& row = qp.rows[static_cast<std::size_t>(r)];
    if (row.lo > row.hi) throw Error(ErrorCode::Infeasible, "row with lo > hi");
    if (row.is_equality()) {
      eq_rows.push_back(r);
      continue;
    }
    if (std::isfinite(row.hi)) ineq.push_back({r, 1.0});
    if (std::isfinite(row.lo)) ineq.push_back({r, -1.0});
  }
  const auto p = static_cast<Eigen::Index>(eq_rows.size());
  const auto q = static_cast<Eigen::Index>(ineq.size());
  Eigen::MatrixXd E(p, n), C(q, n);
  Eigen::VectorXd e(p), d(q);
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto& row = qp.rows[static_cast<std::size_t>(eq_rows[static_cast<std::size_t>(k)])];
    E.row(k) = detail::dense_row(row, n);
    e[k] = row.lo;
  }
  for (Eigen::Index k = 0; k < q; ++k) {
    const auto [r, sign] = ineq[static_cast<std::size_t>(k)];
    const auto& row = qp.rows[static_cast<std::size_t>(r)];
    C.row(k) = sign * detail::dense_row(row, n);
    d[k] = sign > 0 ? row.hi : -row.lo;
  }

  Eigen::VectorXd x = opt.initial_x ? *opt.initial_x : Eigen::VectorXd::Zero(n);
  if (x.size() != n) throw Error(ErrorCode::DimensionMismatch, "initial point size");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd s = (d - C * x).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(q);

  const double scale_d = 1.0 + qp.f.lpNorm<Eigen::Infinity>();
  const double scale_p = 1.0 + std::max(e.size() ? e.lpNorm<Eigen::Infinity>() : 0.0,
                                        d.size() ? d.lpNorm<Eigen::Infinity>() : 0.0);
  constexpr double reg = 1e-12;

  QpSolution out;
  bool converged = false;
  double last_primal = kInf;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it;
    const Eigen::VectorXd r_d = qp.H * x + qp.f + E.transpose() * y + C.transpose() * z;
    const Eigen::VectorXd r_e = E * x - e;
    const Eigen::VectorXd r_p = C * x + s - d;
    const double mu = q > 0 ? s.dot(z) / static_cast<double>(q) : 0.0;
    const double primal = std::max(r_e.size() ? r_e.lpNorm<Eigen::Infinity>() : 0.0,
                                   r_p.size() ? r_p.lpNorm<Eigen::Infinity>() : 0.0);
    last_primal = primal;
    if (r_d.lpNorm<Eigen::Infinity>() <= opt.tolerance * scale_d && primal <= opt.tolerance * scale_p &&
        mu <= opt.tolerance * 1e-2) {
      converged = true;
      break;
    }

    const Eigen::VectorXd w = z.cwiseQuotient(s);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + p, n + p);
    K.topLeftCorner(n, n) = qp.H + C.transpose() * w.asDiagonal() * C;
    K.topRightCorner(n, p) = E.transpose();
    K.bottomLeftCorner(p, n) = E;
    K.bottomRightCorner(p, p) = -reg * Eigen::MatrixXd::Identity(p, p);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

    auto newton = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& ds,
                      Eigen::VectorXd& dz) {
      Eigen::VectorXd rhs(n + p);
      rhs.head(n) = -r_d - C.transpose() * ((z.cwiseProduct(r_p) - r_c).cwiseQuotient(s));
      rhs.tail(p) = -r_e;
      const Eigen::VectorXd sol = lu.solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(p);
      ds = -r_p - C * dx;
      dz = (-r_c - z.cwiseProduct(ds)).cwiseQuotient(s);
    };
    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (dv[k] < 0.0) a = std::min(a, -v[k] / dv[k]);
      }
      return a;
    };

    Eigen::VectorXd dx, dy, ds, dz;
    const Eigen::VectorXd sz = s.cwiseProduct(z);
    newton(sz, dx, dy, ds, dz);
    if (q > 0) {
      const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(q);
      const double sigma = std::pow(mu_aff / mu, 3.0);
      const Eigen::VectorXd r_c = sz + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(q, sigma * mu);
      newton(r_c, dx, dy, ds, dz);
    }
    const double alpha = q > 0 ? std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(z, dz))) : 1.0;
    x += alpha * dx;
    y += alpha * dy;
    s += alpha * ds;
    z += alpha * dz;
    if (!x.allFinite() || !z.allFinite()) break;
  }
  if (!converged) {
    if (last_primal > 1e-6 * scale_p) {
      throw Error(ErrorCode::Infeasible, "interior-point primal residual stalled at " + num(last_primal));
    }
    throw Error(ErrorCode::IterationCap, "interior-point method hit its iteration cap");
  }

  // Map back to signed row multipliers.
  out.x = x;
  out.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.rows.size()));
  out.active.assign(qp.rows.size(), RowSide::Inactive);
  for (Eigen::Index k = 0; k < p; ++k) {
    const int r = eq_rows[static_cast<std::size_t>(k)];
    out.y[r] = y[k];
    out.active[static_cast<std::size_t>(r)] = RowSide::Equality;
  }
  std::vector<std::pair<double, int>> strength;
  for (Eigen::Index k = 0; k < q; ++k) {
    const auto [r, sign] = ineq[static_cast<std::size_t>(k)];
    out.y[r] += sign * z[k];
    if (z[k] > s[k]) {
      out.active[static_cast<std::size_t>(r)] = sign > 0 ? RowSide::Upper : RowSide::Lower;
      strength.emplace_back(z[k], r);
    }
  }
  if (opt.polish) {
    std::sort(strength.begin(), strength.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<int> priority;
    for (const auto& [zk, r] : strength) priority.push_back(r);
    if (auto polished = primal_active_set(qp, out.x, out.active, priority)) {
      const double before = qp_residual(qp, out.x, out.y).max();
      const double after = qp_residual(qp, polished->x, polished->y).max();
      if (after <= before) {
        polished->iterations = out.iterations;
        return *polished;
      }
    }
  }
  return out;
}

/// Exhaustive KKT active-set enumeration by increasing active-set size. Exact to
/// rounding; only meant for tiny problems.
inline QpSolution enumerate_active_sets(const QuadraticProgram& qp, std::int64_t max_combinations = 1 << 20,
                                        double tol = 1e-9) {
  const int n = qp.dim();
  std::vector<int> eq_rows, free_rows;
  for (int r = 0; r < static_cast<int>(qp.rows.size()); ++r) {
    const auto& row = qp.rows[static_cast<std::size_t>(r)];
    if (row.lo > row.hi) throw Error(ErrorCode::Infeasible, "row with lo > hi");
    (row.is_equality() ? eq_rows : free_rows).push_back(r);
  }
  // Keep a linearly independent subset of the equalities.
  Eigen::MatrixXd Aeq(0, n);
  Eigen::VectorXd beq(0);
  std::vector<int> kept_eq;
  for (int r : eq_rows) {
    const auto& row = qp.rows[static_cast<std::size_t>(r)];
    Eigen::MatrixXd trial(Aeq.rows() + 1, n);
    trial << Aeq, detail::dense_row(row, n);
    if (Eigen::FullPivLU<Eigen::MatrixXd>(trial).rank() < trial.rows()) continue;
    Aeq = std::move(trial);
    beq.conservativeResize(beq.size() + 1);
    beq[beq.size() - 1] = row.lo;
    kept_eq.push_back(r);
  }
  const int max_active = n - static_cast<int>(kept_eq.size());
  const int R = static_cast<int>(free_rows.size());

  std::int64_t count = 0;
  std::vector<int> combo;
  std::optional<QpSolution> found;

  auto try_sides = [&](const std::vector<int>& chosen) {
    const int k = static_cast<int>(chosen.size());
    std::vector<RowSide> options(static_cast<std::size_t>(k));
    // Iterate over side assignments; rows with one finite side have one option.
    std::vector<std::vector<RowSide>> per_row(static_cast<std::size_t>(k));
    for (int a = 0; a < k; ++a) {
      const auto& row = qp.rows[static_cast<std::size_t>(chosen[static_cast<std::size_t>(a)])];
      if (std::isfinite(row.lo)) per_row[static_cast<std::size_t>(a)].push_back(RowSide::Lower);
      if (std::isfinite(row.hi)) per_row[static_cast<std::size_t>(a)].push_back(RowSide::Upper);
      if (per_row[static_cast<std::size_t>(a)].empty()) return;
    }
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    while (true) {
      if (++count > max_combinations) {
        throw Error(ErrorCode::TooLarge, "active-set enumeration exceeded " + std::to_string(max_combinations) +
                                             " combinations");
      }
      Eigen::MatrixXd A(Aeq.rows() + k, n);
      Eigen::VectorXd rhs(Aeq.rows() + k);
      A.topRows(Aeq.rows()) = Aeq;
      rhs.head(Aeq.rows()) = beq;
      std::vector<int> rows = kept_eq;
      std::vector<RowSide> sides(kept_eq.size(), RowSide::Equality);
      for (int a = 0; a < k; ++a) {
        const int r = chosen[static_cast<std::size_t>(a)];
        const auto& row = qp.rows[static_cast<std::size_t>(r)];
        const RowSide side = per_row[static_cast<std::size_t>(a)][idx[static_cast<std::size_t>(a)]];
        A.row(Aeq.rows() + a) = detail::dense_row(row, n);
        rhs[Aeq.rows() + a] = side == RowSide::Lower ? row.lo : row.hi;
        rows.push_back(r);
        sides.push_back(side);
      }
      if (auto eqp = detail::solve_eqp(qp, A, rhs)) {
        Eigen::VectorXd y;
        if (detail::accept_candidate(qp, rows, sides, eqp->first, eqp->second, tol, y)) {
          QpSolution sol;
          sol.x = eqp->first;
          sol.y = y;
          sol.active.assign(qp.rows.size(), RowSide::Inactive);
          for (std::size_t a = 0; a < rows.size(); ++a) sol.active[static_cast<std::size_t>(rows[a])] = sides[a];
          found = std::move(sol);
          return;
        }
      }
      int a = k - 1;
      while (a >= 0) {
        auto& ia = idx[static_cast<std::size_t>(a)];
        if (++ia < per_row[static_cast<std::size_t>(a)].size()) break;
        ia = 0;
        --a;
      }
      if (a < 0) return;
    }
  };

  for (int k = 0; k <= std::min(max_active, R) && !found; ++k) {
    combo.resize(static_cast<std::size_t>(k));
    for (int a = 0; a < k; ++a) combo[static_cast<std::size_t>(a)] = a;
    while (!found) {
      std::vector<int> chosen(static_cast<std::size_t>(k));
      for (int a = 0; a < k; ++a) chosen[static_cast<std::size_t>(a)] = free_rows[static_cast<std::size_t>(combo[static_cast<std::size_t>(a)])];
      try_sides(chosen);
      if (found) break;
      int a = k - 1;
      while (a >= 0 && combo[static_cast<std::size_t>(a)] == R - k + a) --a;
      if (a < 0) break;
      ++combo[static_cast<std::size_t>(a)];
      for (int b = a + 1; b < k; ++b) combo[static_cast<std::size_t>(b)] = combo[static_cast<std::size_t>(b - 1)] + 1;
    }
  }
  if (!found) throw Error(ErrorCode::Infeasible, "no active set satisfies the KKT conditions");
  found->combinations = count;
  return *found;
}

}  // namespace p2pgne
