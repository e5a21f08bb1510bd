#pragma once

// Scenario files (JSON), time-series specs and synthetic profiles, and the
// reference six-prosumer case.
//
// Ids in files are 1-based. A series is a number (constant), an array, a
// CSV reference {"csv": path, "column": name}, or a list of components that
// are summed: {"shape": "constant" | "sinusoid" | "step" | "pv" | "noise", ...}.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "p2pgne/error.hpp"
#include "p2pgne/graph.hpp"
#include "p2pgne/model.hpp"
#include "p2pgne/solver.hpp"

namespace p2pgne {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kScenarioDirEnv = "P2PGNE_SCENARIO_DIR";

enum class ProfileShape { Constant, Sinusoid, Step, Pv, Noise };

/// One additive series component. Times are sample indices; `Pv` uses the
/// clock (startHour + t * dt) and is a half sine over [6:00, 18:00], zero outside.
struct ProfileSpec {
  ProfileShape shape = ProfileShape::Constant;
  double amplitude = 0.0;  // constant value, sinusoid/pv peak, or step height
  double period = 1.0;     // sinusoid period in samples
  double phase = 0.0;      // sinusoid phase in radians
  int stepAt = 0;          // first sample of the step
  double noiseStd = 0.0;
  std::uint64_t seed = 0;
};

/// Samples of one component. Deterministic for a given seed.
inline std::vector<double> synth_profiles(const ProfileSpec& spec, int T, double dt = 1.0, double startHour = 0.0) {
  if (T < 1) throw Error(ErrorCode::BadSpec, "series length must be at least 1");
  if (!(spec.noiseStd >= 0.0) || !std::isfinite(spec.noiseStd)) throw Error(ErrorCode::BadSpec, "noise std must be >= 0");
  if (spec.shape == ProfileShape::Sinusoid && !(spec.period > 0.0)) {
    throw Error(ErrorCode::BadSpec, "sinusoid period must be positive");
  }
  std::vector<double> out(static_cast<std::size_t>(T), 0.0);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < T; ++t) {
    double v = 0.0;
    switch (spec.shape) {
      case ProfileShape::Constant:
        v = spec.amplitude;
        break;
      case ProfileShape::Sinusoid:
        v = spec.amplitude * std::sin(2.0 * std::numbers::pi * t / spec.period + spec.phase);
        break;
      case ProfileShape::Step:
        v = t >= spec.stepAt ? spec.amplitude : 0.0;
        break;
      case ProfileShape::Pv: {
        const double hour = startHour + t * dt;
        v = spec.amplitude * std::max(0.0, std::sin(std::numbers::pi * (hour - 6.0) / 12.0));
        if (hour < 6.0 || hour > 18.0) v = 0.0;
        break;
      }
      case ProfileShape::Noise:
        break;
    }
    if (spec.noiseStd > 0.0) v += spec.noiseStd * noise(rng);
    out[static_cast<std::size_t>(t)] = v;
  }
  return out;
}

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  double startHour = 0.0;  // clock time of interval 0
  Game game;
  SolverConfig solver;
  double oracleTolerance = 1e-8;
};

inline bool same_game(const Game& a, const Game& b) {
  auto same_params = [](const ProsumerParams& p, const ProsumerParams& q) {
    if (p.trades.size() != q.trades.size()) return false;
    for (std::size_t l = 0; l < p.trades.size(); ++l) {
      const auto& s = p.trades[l];
      const auto& u = q.trades[l];
      if (s.pMin != u.pMin || s.pMax != u.pMax || s.price != u.price) return false;
    }
    return p.aG == q.aG && p.bG == q.bG && p.pGmin == q.pGmin && p.pGmax == q.pGmax && p.aC == q.aC &&
           p.aD == q.aD && p.pCmax == q.pCmax && p.pDmax == q.pDmax && p.etaC == q.etaC && p.etaD == q.etaD &&
           p.eCap == q.eCap && p.sMin == q.sMin && p.sMax == q.sMax && p.s0 == q.s0 && p.pMgBox == q.pMgBox;
  };
  if (a.size() != b.size() || a.graph.weights() != b.graph.weights() || a.aTr != b.aTr) return false;
  for (int i = 0; i < a.size(); ++i) {
    if (!same_params(a.prosumer(i), b.prosumer(i))) return false;
  }
  const auto& s = a.schedule;
  const auto& u = b.schedule;
  return s.cMg == u.cMg && s.load == u.load && s.pMgMin == u.pMgMin && s.pMgMax == u.pMgMax && s.dt == u.dt;
}

inline bool operator==(const Scenario& a, const Scenario& b) {
  const auto& s = a.solver;
  const auto& u = b.solver;
  return a.name == b.name && a.seed == b.seed && a.startHour == b.startHour && same_game(a.game, b.game) &&
         s.rho == u.rho && s.mode == u.mode && s.init == u.init && s.threads == u.threads &&
         s.frozenInterval == u.frozenInterval && s.frozenMaxIterations == u.frozenMaxIterations &&
         s.frozenTolerance == u.frozenTolerance && a.oracleTolerance == b.oracleTolerance;
}

/// Resolves a scenario path: as given if it exists, else relative to $P2PGNE_SCENARIO_DIR.
inline std::filesystem::path resolve_scenario_path(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path) || path.is_absolute()) return path;
  if (const char* dir = std::getenv(kScenarioDirEnv); dir != nullptr && *dir != '\0') {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate;
  }
  return path;
}

namespace detail {

using nlohmann::json;

inline std::vector<double> read_csv_column(const std::filesystem::path& file, const std::string& column) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open series file " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "series file " + file.string() + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int col = -1;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == column) col = static_cast<int>(k);
  }
  if (col < 0) throw Error(ErrorCode::ParseError, "column '" + column + "' missing in " + file.string());
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (int k = 0; k <= col; ++k) {
      if (!std::getline(ss, cell, ',')) throw Error(ErrorCode::ParseError, "short row in " + file.string());
    }
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad number '" + cell + "' in " + file.string());
    }
  }
  return out;
}

inline ProfileSpec parse_component(const json& j) {
  static const std::pair<const char*, ProfileShape> shapes[] = {{"constant", ProfileShape::Constant},
                                                                {"sinusoid", ProfileShape::Sinusoid},
                                                                {"step", ProfileShape::Step},
                                                                {"pv", ProfileShape::Pv},
                                                                {"noise", ProfileShape::Noise}};
  ProfileSpec spec;
  const std::string shape = j.at("shape").get<std::string>();
  bool known = false;
  for (const auto& [name, value] : shapes) {
    if (shape == name) {
      spec.shape = value;
      known = true;
    }
  }
  if (!known) throw Error(ErrorCode::BadSpec, "unknown series shape '" + shape + "'");
  spec.amplitude = j.value("amplitude", j.value("value", 0.0));
  spec.period = j.value("period", 1.0);
  spec.phase = j.value("phase", 0.0);
  spec.stepAt = j.value("at", 0);
  spec.noiseStd = j.value("std", 0.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  return spec;
}

struct SeriesContext {
  int T = 0;
  double dt = 1.0;
  double startHour = 0.0;
  std::uint64_t seed = 0;
  std::filesystem::path baseDir;
};

inline std::vector<double> parse_series(const json& j, const SeriesContext& ctx) {
  if (j.is_number()) return std::vector<double>(static_cast<std::size_t>(std::max(ctx.T, 0)), j.get<double>());
  if (j.is_object() && j.contains("csv")) {
    return read_csv_column(ctx.baseDir / j.at("csv").get<std::string>(), j.value("column", std::string("value")));
  }
  if (j.is_array() && (j.empty() || j.front().is_number())) return j.get<std::vector<double>>();
  const json& parts = j.is_object() && j.contains("components") ? j.at("components") : j;
  if (!parts.is_array()) throw Error(ErrorCode::BadSpec, "series must be a number, array, csv reference or components");
  std::vector<double> out(static_cast<std::size_t>(std::max(ctx.T, 0)), 0.0);
  for (const auto& part : parts) {
    ProfileSpec spec = parse_component(part);
    // noise seeds are offset by the scenario seed so one knob reseeds every profile
    spec.seed += ctx.seed;
    const auto samples = synth_profiles(spec, ctx.T, ctx.dt, ctx.startHour);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += samples[k];
  }
  return out;
}

inline const char* mode_name(RunMode m) { return m == RunMode::Online ? "online" : "frozen"; }
inline const char* init_name(InitRule r) { return r == InitRule::Local ? "local" : "zero"; }

}  // namespace detail

/// Parses and validates a scenario document. Every violation is collected before throwing.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& baseDir = {}) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "scenario must be a JSON object");
  const int version = doc.value("schema_version", -1);
  if (version != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersion, "unsupported schema_version " + std::to_string(version));
  }

  std::vector<std::string> v;
  Scenario sc;
  try {
    sc.name = doc.value("name", std::string("scenario"));
    sc.seed = doc.value("seed", std::uint64_t{0});
    sc.startHour = doc.value("start_hour", 0.0);
    const int T = doc.at("horizon").get<int>();
    const double dt = doc.at("dt").get<double>();
    if (T < 1) v.push_back("horizon must be at least 1");
    if (!(dt > 0.0)) v.push_back("dt must be positive");
    detail::SeriesContext ctx{T, dt, sc.startHour, sc.seed, baseDir};

    // graph
    const auto& g = doc.at("graph");
    const int n = g.at("nodes").get<int>();
    std::vector<WeightedEdge> edges;
    for (const auto& e : g.at("edges")) {
      edges.push_back({e.at(0).get<int>() - 1, e.at(1).get<int>() - 1, e.at(2).get<double>()});
    }
    const auto self = g.at("self_weights").get<std::vector<double>>();
    bool graph_ok = false;
    try {
      sc.game.graph = build_graph(n, edges, self);
      graph_ok = true;
    } catch (const Error& e) {
      v.push_back(std::string("graph: ") + e.what());
    }

    // market
    const auto& m = doc.at("market");
    sc.game.aTr = m.at("a_tr").get<double>();
    if (!(sc.game.aTr > 0.0)) v.push_back("market.a_tr must be positive");
    auto& sched = sc.game.schedule;
    sched.dt = dt;
    sched.pMgMin = m.at("p_mg_min").get<double>();
    sched.pMgMax = m.at("p_mg_max").get<double>();
    if (!(sched.pMgMin <= sched.pMgMax)) v.push_back("market.p_mg_min exceeds p_mg_max");
    sched.cMg = detail::parse_series(m.at("c_mg"), ctx);
    if (static_cast<int>(sched.cMg.size()) != T) {
      v.push_back("market.c_mg has " + std::to_string(sched.cMg.size()) + " samples, horizon is " + std::to_string(T));
    }
    for (std::size_t t = 0; t < sched.cMg.size(); ++t) {
      if (!(sched.cMg[t] > 0.0)) {
        v.push_back("market.c_mg[" + std::to_string(t) + "] must be positive");
        break;
      }
    }
    const double box_default = std::max(std::abs(sched.pMgMin), std::abs(sched.pMgMax));

    // prosumers
    const auto& ps = doc.at("prosumers");
    if (static_cast<int>(ps.size()) != n) {
      v.push_back("expected " + std::to_string(n) + " prosumers, found " + std::to_string(ps.size()));
    }
    std::vector<std::vector<std::pair<int, TradeLink>>> links;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const auto& pj = ps[k];
      const std::string who = "prosumer " + std::to_string(k + 1);
      if (pj.value("id", static_cast<int>(k) + 1) != static_cast<int>(k) + 1) v.push_back(who + ": ids must be 1..N in order");
      ProsumerParams p;
      p.aG = pj.at("a_g").get<double>();
      p.bG = pj.value("b_g", 0.0);
      p.pGmin = pj.value("p_g_min", 0.0);
      p.pGmax = pj.value("p_g_max", 0.0);
      p.aC = pj.at("a_c").get<double>();
      p.aD = pj.at("a_d").get<double>();
      p.pCmax = pj.value("p_c_max", 0.0);
      p.pDmax = pj.value("p_d_max", 0.0);
      p.etaC = pj.value("eta_c", 1.0);
      p.etaD = pj.value("eta_d", 1.0);
      p.eCap = pj.value("e_cap", 1.0);
      p.sMin = pj.value("s_min", 0.1);
      p.sMax = pj.value("s_max", 0.9);
      p.s0 = pj.value("s0", 0.5 * (p.sMin + p.sMax));
      p.pMgBox = pj.value("p_mg_box", box_default);
      if (!(p.aG > 0.0)) v.push_back(who + ": a_g must be positive");
      if (!(p.aC > 0.0)) v.push_back(who + ": a_c must be positive");
      if (!(p.aD > 0.0)) v.push_back(who + ": a_d must be positive");
      if (!(p.pGmin <= p.pGmax)) v.push_back(who + ": p_g_min exceeds p_g_max");
      if (!(p.pCmax >= 0.0) || !(p.pDmax >= 0.0)) v.push_back(who + ": storage power limits must be >= 0");
      if (!(p.etaC > 0.0 && p.etaC <= 1.0) || !(p.etaD > 0.0 && p.etaD <= 1.0)) {
        v.push_back(who + ": efficiencies must lie in (0,1]");
      }
      if (!(p.eCap > 0.0)) v.push_back(who + ": e_cap must be positive");
      if (!(p.sMin > 0.0 && p.sMin < p.sMax && p.sMax < 1.0)) v.push_back(who + ": need 0 < s_min < s_max < 1");
      if (!(p.s0 >= p.sMin && p.s0 <= p.sMax)) v.push_back(who + ": s0 outside [s_min, s_max]");
      if (!(p.pMgBox > 0.0) || !std::isfinite(p.pMgBox)) v.push_back(who + ": p_mg_box must be positive and finite");
      std::vector<std::pair<int, TradeLink>> mine;
      for (const auto& tj : pj.value("trades", json::array())) {
        TradeLink link{tj.at("min").get<double>(), tj.at("max").get<double>(), tj.at("price").get<double>()};
        const int nb = tj.at("neighbor").get<int>() - 1;
        if (!(link.pMin <= 0.0 && link.pMax >= 0.0)) {
          v.push_back(who + ": trade limits with " + std::to_string(nb + 1) + " must satisfy min <= 0 <= max");
        }
        if (!(link.price > 0.0)) v.push_back(who + ": trade price with " + std::to_string(nb + 1) + " must be positive");
        mine.emplace_back(nb, link);
      }
      std::sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      links.push_back(mine);
      sc.game.prosumers.push_back(p);
      sched.load.push_back(detail::parse_series(pj.at("load"), ctx));
      if (static_cast<int>(sched.load.back().size()) != T) {
        v.push_back(who + ": load has " + std::to_string(sched.load.back().size()) + " samples, horizon is " +
                    std::to_string(T));
      }
    }
    if (graph_ok && static_cast<int>(links.size()) == n) {
      for (int i = 0; i < n; ++i) {
        const auto& nb = sc.game.graph.neighbors(i);
        const auto& mine = links[static_cast<std::size_t>(i)];
        std::vector<int> ids;
        for (const auto& [j, link] : mine) ids.push_back(j);
        if (ids != nb) {
          v.push_back("prosumer " + std::to_string(i + 1) + ": trade list must cover exactly its graph neighbors");
          continue;
        }
        for (const auto& [j, link] : mine) sc.game.prosumers[static_cast<std::size_t>(i)].trades.push_back(link);
      }
      for (int i = 0; i < n; ++i) {
        for (int j : sc.game.graph.neighbors(i)) {
          if (j < i) continue;
          const auto& pi = sc.game.prosumers[static_cast<std::size_t>(i)].trades;
          const auto& pj = sc.game.prosumers[static_cast<std::size_t>(j)].trades;
          const int si = sc.game.graph.neighbor_slot(i, j);
          const int sj = sc.game.graph.neighbor_slot(j, i);
          if (static_cast<int>(pi.size()) <= si || static_cast<int>(pj.size()) <= sj) continue;
          if (pi[static_cast<std::size_t>(si)].price != pj[static_cast<std::size_t>(sj)].price) {
            v.push_back("trade price asymmetry: d_" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                        " != d_" + std::to_string(j + 1) + "," + std::to_string(i + 1));
          }
        }
      }
    }

    // step schedule and solver settings
    const auto& st = doc.value("step", json::object());
    try {
      if (st.contains("table")) {
        sc.solver.rho = StepSchedule::table(st.at("table").get<std::vector<double>>());
      } else {
        sc.solver.rho = StepSchedule::power(st.value("K", 0.8), st.value("a", 0.02), st.value("b", 1.0),
                                            st.value("alpha", 1.0 / 3.0));
      }
      if (T >= 1) (void)sc.solver.rho.horizon(T);
    } catch (const Error& e) {
      v.push_back(std::string("step: ") + e.what());
    }
    const auto& so = doc.value("solver", json::object());
    const std::string mode = so.value("mode", std::string("online"));
    if (mode == "online") {
      sc.solver.mode = RunMode::Online;
    } else if (mode == "frozen") {
      sc.solver.mode = RunMode::Frozen;
    } else {
      v.push_back("solver.mode must be online or frozen");
    }
    const std::string init = so.value("init", std::string("local"));
    if (init == "local") {
      sc.solver.init = InitRule::Local;
    } else if (init == "zero") {
      sc.solver.init = InitRule::Zero;
    } else {
      v.push_back("solver.init must be local or zero");
    }
    sc.solver.threads = so.value("threads", 1);
    sc.solver.frozenInterval = so.value("frozen_interval", 0);
    sc.solver.frozenMaxIterations = so.value("max_iterations", 200000L);
    sc.solver.frozenTolerance = so.value("tolerance", 1e-9);
    sc.oracleTolerance = so.value("oracle_tolerance", 1e-8);
    if (sc.solver.threads < 1) v.push_back("solver.threads must be >= 1");
    if (sc.solver.frozenInterval < 0 || sc.solver.frozenInterval >= T) v.push_back("solver.frozen_interval outside horizon");
  } catch (const json::exception& e) {
    v.push_back(std::string("malformed field: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError || e.code() == ErrorCode::ParseError) throw;
    v.push_back(e.what());
  }
  if (!v.empty()) throw ValidationError(std::move(v));
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  const auto resolved = resolve_scenario_path(path);
  std::ifstream in(resolved);
  if (!in) throw Error(ErrorCode::IoError, "cannot open scenario " + resolved.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), resolved.parent_path());
}

/// Serializes with every series written out as an explicit array.
inline nlohmann::json scenario_to_json(const Scenario& sc) {
  using detail::json;
  const Game& g = sc.game;
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["name"] = sc.name;
  doc["seed"] = sc.seed;
  doc["start_hour"] = sc.startHour;
  doc["horizon"] = g.horizon();
  doc["dt"] = g.schedule.dt;
  json edges = json::array();
  for (const auto& e : g.graph.undirected_edges()) edges.push_back({e.i + 1, e.j + 1, e.w});
  doc["graph"] = {{"nodes", g.size()}, {"edges", edges}, {"self_weights", g.graph.self_weights()}};
  doc["market"] = {{"a_tr", g.aTr},
                   {"p_mg_min", g.schedule.pMgMin},
                   {"p_mg_max", g.schedule.pMgMax},
                   {"c_mg", g.schedule.cMg}};
  json ps = json::array();
  for (int i = 0; i < g.size(); ++i) {
    const auto& p = g.prosumer(i);
    json trades = json::array();
    const auto& nb = g.graph.neighbors(i);
    for (std::size_t l = 0; l < nb.size(); ++l) {
      trades.push_back(
          {{"neighbor", nb[l] + 1}, {"min", p.trades[l].pMin}, {"max", p.trades[l].pMax}, {"price", p.trades[l].price}});
    }
    ps.push_back({{"id", i + 1},          {"a_g", p.aG},       {"b_g", p.bG},         {"p_g_min", p.pGmin},
                  {"p_g_max", p.pGmax},   {"a_c", p.aC},       {"a_d", p.aD},         {"p_c_max", p.pCmax},
                  {"p_d_max", p.pDmax},   {"eta_c", p.etaC},   {"eta_d", p.etaD},     {"e_cap", p.eCap},
                  {"s_min", p.sMin},      {"s_max", p.sMax},   {"s0", p.s0},          {"p_mg_box", p.pMgBox},
                  {"trades", trades},     {"load", g.schedule.load[static_cast<std::size_t>(i)]}});
  }
  doc["prosumers"] = ps;
  const auto& rho = sc.solver.rho;
  if (rho.is_table()) {
    doc["step"] = {{"table", rho.values()}};
  } else {
    doc["step"] = {{"K", rho.K()}, {"a", rho.a()}, {"b", rho.b()}, {"alpha", rho.alpha()}};
  }
  doc["solver"] = {{"mode", detail::mode_name(sc.solver.mode)},
                   {"init", detail::init_name(sc.solver.init)},
                   {"threads", sc.solver.threads},
                   {"frozen_interval", sc.solver.frozenInterval},
                   {"max_iterations", sc.solver.frozenMaxIterations},
                   {"tolerance", sc.solver.frozenTolerance},
                   {"oracle_tolerance", sc.oracleTolerance}};
  return doc;
}

inline void save_scenario(const Scenario& sc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << scenario_to_json(sc).dump(2) << '\n';
}

/// Copy of the scenario with the horizon cut to T intervals.
inline Scenario truncated(const Scenario& sc, int T) {
  if (T < 1 || T > sc.game.horizon()) throw Error(ErrorCode::TimeOutOfRange, "cannot cut horizon to " + std::to_string(T));
  Scenario out = sc;
  out.game.schedule.cMg.resize(static_cast<std::size_t>(T));
  for (auto& l : out.game.schedule.load) l.resize(static_cast<std::size_t>(T));
  return out;
}

}  // namespace p2pgne
