#pragma once

// CSV output of runs and oracle sequences, and the trajectory reader used by
// offline validation. Numbers use the shortest round-trip decimal form.
// Column definitions: docs/csv-schema.md.

#include <Eigen/Dense>

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "p2pgne/error.hpp"
#include "p2pgne/pipeline.hpp"
#include "p2pgne/scenario.hpp"

namespace p2pgne {

inline constexpr int kCsvSchemaVersion = 1;

inline std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::string out;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) out += ' ';
    out += fmt(v[k]);
  }
  return out;
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "bad number '" + std::string(s) + "'");
  }
  return v;
}

inline Eigen::VectorXd parse_vec(std::string_view s) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t end = s.find(' ', pos);
    const std::string_view tok = s.substr(pos, end == std::string_view::npos ? s.size() - pos : end - pos);
    if (!tok.empty()) vals.push_back(parse_double(tok));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline const char* kTrajectoryHeader =
    "state,rho,prosumer,soc,pg,pc,pd,pmg,ptr,played_pg,played_pc,played_pd,played_pmg,played_ptr,lambda,"
    "lambda_norm,mu,error_norm";

/// One row per (state, prosumer). State r is the iterate after r rounds; rho is the
/// step that produced it (empty for the initial state); soc is the state of charge
/// after the round's played action.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << kTrajectoryHeader << '\n';
  const std::size_t R = traj.rounds.size();
  for (std::size_t r = 0; r <= R; ++r) {
    const RoundRecord& rec = r == 0 ? traj.initial : traj.rounds[r - 1];
    for (std::size_t i = 0; i < rec.prosumers.size(); ++i) {
      const auto& p = rec.prosumers[i];
      const long state = traj.mode == RunMode::Online || r == 0 ? static_cast<long>(r) : rec.round + 1;
      out << state << ',' << (r == 0 ? std::string() : fmt(rec.rho)) << ',' << i + 1 << ',' << fmt(p.soc);
      for (int k = 0; k < 4; ++k) out << ',' << fmt(p.x[k]);
      out << ',' << fmt_vec(p.x.tail(p.x.size() - 4));
      for (int k = 0; k < 4; ++k) out << ',' << fmt(p.played[k]);
      out << ',' << fmt_vec(p.played.tail(p.played.size() - 4));
      out << ',' << fmt_vec(p.lambda) << ',' << fmt(p.lambda.norm()) << ',' << fmt(p.mu) << ',' << fmt(p.errorNorm)
          << '\n';
    }
  }
}

/// Reads a trajectory CSV back into records (initial state plus one record per round).
inline Trajectory read_trajectory_csv(std::istream& in, int N) {
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw Error(ErrorCode::ParseError, "trajectory header mismatch");
  }
  Trajectory traj;
  std::vector<RoundRecord> states;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 18) throw Error(ErrorCode::ParseError, "trajectory row has " + std::to_string(c.size()) + " fields");
    const long state = std::stol(c[0]);
    const int i = std::stoi(c[2]) - 1;
    if (i < 0 || i >= N) throw Error(ErrorCode::ParseError, "prosumer id out of range");
    if (states.empty() || states.back().round != state) {
      RoundRecord rec;
      rec.round = state;
      rec.rho = c[1].empty() ? 0.0 : parse_double(c[1]);
      rec.prosumers.resize(static_cast<std::size_t>(N));
      states.push_back(std::move(rec));
    }
    auto& p = states.back().prosumers[static_cast<std::size_t>(i)];
    p.soc = parse_double(c[3]);
    const Eigen::VectorXd tr = parse_vec(c[8]);
    p.x.resize(4 + tr.size());
    for (int k = 0; k < 4; ++k) p.x[k] = parse_double(c[4 + static_cast<std::size_t>(k)]);
    p.x.tail(tr.size()) = tr;
    const Eigen::VectorXd ptr = parse_vec(c[13]);
    p.played.resize(4 + ptr.size());
    for (int k = 0; k < 4; ++k) p.played[k] = parse_double(c[9 + static_cast<std::size_t>(k)]);
    p.played.tail(ptr.size()) = ptr;
    p.lambda = parse_vec(c[14]);
    p.mu = parse_double(c[16]);
    p.errorNorm = parse_double(c[17]);
  }
  if (states.empty()) throw Error(ErrorCode::ParseError, "trajectory is empty");
  traj.initial = states.front();
  traj.rounds.assign(states.begin() + 1, states.end());
  traj.iterations = static_cast<long>(traj.rounds.size());
  return traj;
}

inline void write_summary_csv(std::ostream& out, const Scenario& sc, const RunResult& res) {
  const auto& k = res.kappas;
  const auto& c = res.constants;
  out << "key,value\n";
  out << "schema_version," << kCsvSchemaVersion << '\n';
  out << "scenario," << sc.name << '\n';
  out << "seed," << sc.seed << '\n';
  out << "mode," << (sc.solver.mode == RunMode::Online ? "online" : "frozen") << '\n';
  out << "prosumers," << sc.game.size() << '\n';
  out << "rounds," << res.trajectory.iterations << '\n';
  out << "converged," << (res.trajectory.converged ? 1 : 0) << '\n';
  out << "phi_T," << fmt(res.oracle.phiT) << '\n';
  out << "epsilon," << fmt(c.epsilon) << '\n';
  out << "eta," << fmt(c.eta) << '\n';
  out << "theta," << fmt(c.theta) << '\n';
  out << "theta_star," << fmt(c.thetaStar) << '\n';
  out << "c," << fmt(c.c) << '\n';
  const double kv[] = {k.kappa1, k.kappa2, k.kappa3, k.kappa4, k.kappa5, k.kappa6};
  for (int q = 0; q < 6; ++q) out << "kappa" << q + 1 << ',' << fmt(kv[q]) << '\n';
  out << "vartheta_lambda," << fmt(c.varthetaLambda) << '\n';
  out << "vartheta_mu," << fmt(c.varthetaMu) << '\n';
  out << "delta_lambda," << fmt(c.deltaLambda) << '\n';
  out << "delta_mu," << fmt(c.deltaMu) << '\n';
  out << "pi1," << fmt(c.pi1) << '\n';
  out << "pi2," << fmt(c.pi2) << '\n';
  out << "pi3," << fmt(c.pi3) << '\n';
  out << "oracle_max_kkt," << fmt(res.oracleMaxKkt) << '\n';
  if (!res.margins.lemma3.empty()) {
    out << "lemma3_min_slack," << fmt(res.margins.min3) << '\n';
    out << "lemma4_min_slack," << fmt(res.margins.min4) << '\n';
  }
  const int T = res.regret.horizon();
  for (std::size_t i = 0; i < res.regret.regret.size() && T > 0; ++i) {
    out << "regret_" << i + 1 << ',' << fmt(res.regret.regret[i].back()) << '\n';
  }
  if (T > 0) out << "max_average_regret," << fmt(res.regret.max_average(T)) << '\n';
}

/// t, R_i(t) for every i, R_i(t)/t for every i, and the bound shape.
inline void write_metrics_csv(std::ostream& out, const RegretReport& rep) {
  const std::size_t N = rep.regret.size();
  out << "t";
  for (std::size_t i = 0; i < N; ++i) out << ",R_" << i + 1;
  for (std::size_t i = 0; i < N; ++i) out << ",avg_" << i + 1;
  out << ",bound_shape\n";
  for (int t = 1; t <= rep.horizon(); ++t) {
    const auto k = static_cast<std::size_t>(t - 1);
    out << t;
    for (std::size_t i = 0; i < N; ++i) out << ',' << fmt(rep.regret[i][k]);
    for (std::size_t i = 0; i < N; ++i) out << ',' << fmt(rep.average[i][k]);
    out << ',' << fmt(rep.boundCurve[k]) << '\n';
  }
}

struct AverageSeries {
  std::vector<int> t;
  std::vector<std::vector<double>> avg;  // [i][k]
};

inline AverageSeries read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "metrics file is empty");
  const auto header = split_csv(line);
  std::vector<std::size_t> cols;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k].rfind("avg_", 0) == 0) cols.push_back(k);
  }
  if (header.empty() || header[0] != "t" || cols.empty()) throw Error(ErrorCode::ParseError, "not a metrics CSV");
  AverageSeries s;
  s.avg.resize(cols.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != header.size()) throw Error(ErrorCode::ParseError, "metrics row width mismatch");
    s.t.push_back(std::stoi(c[0]));
    for (std::size_t q = 0; q < cols.size(); ++q) s.avg[q].push_back(parse_double(c[cols[q]]));
  }
  return s;
}

/// One row per (interval, prosumer) with x*, the shared lambda* and mu*_i.
inline void write_vgne_csv(std::ostream& out, const VgneSequence& seq) {
  out << "interval,prosumer,pg,pc,pd,pmg,ptr,lambda,mu,kkt\n";
  for (std::size_t t = 0; t < seq.solutions.size(); ++t) {
    const auto& s = seq.solutions[t];
    for (int i = 0; i < s.xStar.prosumers(); ++i) {
      const Eigen::VectorXd b = s.xStar.block(i);
      out << t << ',' << i + 1;
      for (int k = 0; k < 4; ++k) out << ',' << fmt(b[k]);
      out << ',' << fmt_vec(b.tail(b.size() - 4)) << ',' << fmt_vec(s.lambdaStar) << ','
          << fmt(s.muStar[static_cast<std::size_t>(i)]) << ',' << fmt(s.kktResidual) << '\n';
    }
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace p2pgne
