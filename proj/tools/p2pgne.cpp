// Command-line front end: run, oracle, validate, plot.
//
// Errors go to stderr as one JSON object {"error": code, "message": text} and
// the process exits with 2 (bad input or failure) or 1 (validate found a violation).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "p2pgne/io.hpp"
#include "p2pgne/metrics.hpp"
#include "p2pgne/pipeline.hpp"
#include "p2pgne/plot.hpp"
#include "p2pgne/scenario.hpp"

namespace fs = std::filesystem;
using namespace p2pgne;

namespace {

void report_error(const std::string& code, const std::string& message, const nlohmann::json& extra = {}) {
  nlohmann::json j{{"error", code}, {"message", message}};
  if (!extra.is_null()) j["details"] = extra;
  std::cerr << j.dump() << '\n';
}

Scenario load_with_overrides(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> threads,
                             std::optional<int> horizon) {
  Scenario sc = load_scenario(path);
  if (seed && *seed != sc.seed) {
    // the seed feeds the series generators, so the file has to be parsed again
    std::ifstream in(resolve_scenario_path(path));
    nlohmann::json doc = nlohmann::json::parse(in);
    doc["seed"] = *seed;
    sc = parse_scenario(doc.dump(), resolve_scenario_path(path).parent_path());
  }
  if (threads) sc.solver.threads = *threads;
  if (horizon) sc = truncated(sc, *horizon);
  return sc;
}

int cmd_run(const Scenario& sc, const fs::path& out) {
  const RunResult res = run_scenario(sc);
  {
    auto f = open_output(out / "trajectory.csv");
    write_trajectory_csv(f, res.trajectory);
  }
  {
    auto f = open_output(out / "summary.csv");
    write_summary_csv(f, sc, res);
  }
  if (sc.solver.mode == RunMode::Online) {
    auto f = open_output(out / "metrics.csv");
    write_metrics_csv(f, res.regret);
  }
  std::cout << "rounds " << res.trajectory.iterations << ", phi_T " << fmt(res.oracle.phiT);
  if (res.regret.horizon() > 0) std::cout << ", max R_i(T)/T " << fmt(res.regret.max_average(res.regret.horizon()));
  std::cout << "\nwrote " << out.string() << '\n';
  return 0;
}

int cmd_oracle(const Scenario& sc, const std::optional<std::string>& trajectory, const fs::path& out) {
  std::vector<std::vector<double>> socPath;
  if (trajectory) {
    std::ifstream in(*trajectory);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + *trajectory);
    const Trajectory traj = read_trajectory_csv(in, sc.game.size());
    // SoC at the start of round r is the logged SoC of state r
    for (long r = 0; r < sc.game.horizon(); ++r) {
      const RoundRecord& rec = r == 0 ? traj.initial : traj.rounds.at(static_cast<std::size_t>(r - 1));
      std::vector<double> socs;
      for (const auto& p : rec.prosumers) socs.push_back(p.soc);
      socPath.push_back(socs);
    }
  } else {
    std::vector<double> socs;
    for (const auto& p : sc.game.prosumers) socs.push_back(p.s0);
    socPath.assign(static_cast<std::size_t>(sc.game.horizon()), socs);
  }
  OracleOptions opt;
  opt.tolerance = sc.oracleTolerance;
  const VgneSequence seq = vgne_sequence(sc.game, socPath, opt);
  auto f = open_output(out);
  write_vgne_csv(f, seq);
  std::cout << "intervals " << seq.solutions.size() << ", phi_T " << fmt(seq.phiT) << "\nwrote " << out.string() << '\n';
  return 0;
}

int cmd_validate(const Scenario& sc, const std::string& trajectory, double tolerance) {
  std::ifstream in(trajectory);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + trajectory);
  const Trajectory traj = read_trajectory_csv(in, sc.game.size());
  const auto blocks = build_all_blocks(sc.game);
  const KappaBounds k = kappa_bounds(sc.game, blocks);
  const auto spectrum = laplacian_spectrum(sc.game.graph);
  const double eps = scenario_epsilon(sc, spectrum, traj.iterations);
  const LemmaMargins m = lemma_margins(traj, k, eps, sc.solver.rho, sc.game.size());
  long negative_lambda = 0;
  for (const auto& rec : traj.rounds) {
    for (const auto& p : rec.prosumers) negative_lambda += (p.lambda.array() < 0.0).count();
  }
  nlohmann::json violations = nlohmann::json::array();
  auto scan = [&](const std::vector<std::vector<double>>& slack, const char* name) {
    for (std::size_t r = 0; r < slack.size(); ++r) {
      for (std::size_t i = 0; i < slack[r].size(); ++i) {
        if (slack[r][i] < -tolerance) {
          violations.push_back({{"check", name}, {"state", r}, {"prosumer", i + 1}, {"slack", slack[r][i]}});
        }
      }
    }
  };
  scan(m.lemma3, "estimation_error");
  scan(m.lemma4Lambda, "dual_lambda");
  scan(m.lemma4Mu, "dual_mu");
  std::cout << "states " << m.lemma3.size() << ", epsilon " << fmt(eps) << '\n'
            << "estimation-error bound: min slack " << fmt(m.min3) << '\n'
            << "dual bounds: min slack " << fmt(m.min4) << '\n'
            << "negative lambda entries: " << negative_lambda << '\n';
  if (negative_lambda > 0) violations.push_back({{"check", "lambda_sign"}, {"count", negative_lambda}});
  if (!violations.empty()) {
    report_error("BoundViolation", std::to_string(violations.size()) + " violation(s)", violations);
    return 1;
  }
  std::cout << "all bounds hold\n";
  return 0;
}

int cmd_plot(const fs::path& input, const fs::path& out) {
  fs::path metrics = input;
  if (fs::is_directory(input)) metrics = input / "metrics.csv";
  std::ifstream in(metrics);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + metrics.string());
  const AverageSeries s = read_metrics_csv(in);
  auto f = open_output(out);
  write_regret_svg(f, s);
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online GNE tracking for peer-to-peer energy trading"};
  app.require_subcommand(1);

  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> horizon;
  std::string out_dir = "out";

  auto* run = app.add_subcommand("run", "run the online tracker and write trajectory, summary and metrics CSVs");
  run->add_option("--scenario,-s", scenario, "scenario JSON (also looked up in $P2PGNE_SCENARIO_DIR)")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--threads", threads, "worker threads per round");
  run->add_option("--horizon", horizon, "cut the horizon to this many intervals");
  run->add_option("--out,-o", out_dir, "output directory");

  std::string oracle_out = "vgne.csv";
  std::optional<std::string> oracle_traj;
  auto* oracle = app.add_subcommand("oracle", "solve the v-GNE for every interval and write it as CSV");
  oracle->add_option("--scenario,-s", scenario, "scenario JSON")->required();
  oracle->add_option("--seed", seed, "override the scenario seed");
  oracle->add_option("--horizon", horizon, "cut the horizon to this many intervals");
  oracle->add_option("--trajectory", oracle_traj, "take the SoC path from a run's trajectory CSV");
  oracle->add_option("--out,-o", oracle_out, "output CSV");

  std::string traj_path;
  double tolerance = 1e-9;
  auto* validate = app.add_subcommand("validate", "check logged iterates against the estimation-error and dual bounds");
  validate->add_option("--scenario,-s", scenario, "scenario JSON the run used")->required();
  validate->add_option("--trajectory,-t", traj_path, "trajectory CSV")->required();
  validate->add_option("--seed", seed, "seed the run used");
  validate->add_option("--horizon", horizon, "horizon the run used");
  validate->add_option("--tolerance", tolerance, "allowed negative slack");

  std::string plot_in;
  std::string plot_out = "regret.svg";
  auto* plot = app.add_subcommand("plot", "draw R_i(t)/t on linear and log axes");
  plot->add_option("--input,-i", plot_in, "metrics CSV or run directory")->required();
  plot->add_option("--out,-o", plot_out, "output SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error("UsageError", e.what());
    return 2;
  }

  try {
    if (*run) return cmd_run(load_with_overrides(scenario, seed, threads, horizon), out_dir);
    if (*oracle) return cmd_oracle(load_with_overrides(scenario, seed, std::nullopt, horizon), oracle_traj, oracle_out);
    if (*validate) return cmd_validate(load_with_overrides(scenario, seed, std::nullopt, horizon), traj_path, tolerance);
    if (*plot) return cmd_plot(plot_in, plot_out);
  } catch (const ValidationError& e) {
    report_error(std::string(to_string(e.code())), "scenario is invalid", e.violations());
    return 2;
  } catch (const Error& e) {
    report_error(std::string(to_string(e.code())), e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return 2;
  }
  return 0;
}
