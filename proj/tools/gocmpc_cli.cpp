// Command-line entry point: run, render, bench and generate.
// Exit codes: 0 success, 2 failed episode, 1 error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gocmpc/io.hpp"

namespace {

using namespace gocmpc;

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kEpisodeFailed = 2;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << content)) throw IoError("cannot write " + path);
}

struct RunArgs {
  std::string scenario;
  std::string method = "goc";
  std::optional<std::uint64_t> seed;
  std::string metrics;
  std::string traj;
  std::optional<double> budget;
};

int cmd_run(const RunArgs& a) {
  Scenario s = load_scenario(a.scenario);
  if (a.seed) s = reseed(s, *a.seed);
  if (a.budget) {
    if (!(*a.budget > 0)) throw Error("--budget must be positive");
    s.budget = *a.budget;
  }
  EpisodeOptions opts;
  opts.method = a.method == "baseline" ? Method::kBaseline : Method::kGoc;
  opts.record_trajectory = !a.traj.empty();
  const auto report = run_episode(s, opts);
  const auto row = MetricsRow::from_report(s, opts.method, report);
  if (!a.metrics.empty()) {
    append_metrics(a.metrics, {row});
  } else {
    std::cout << metrics_header() << "\n" << metrics_csv_line(row) << "\n";
  }
  if (!a.traj.empty()) write_text(a.traj, trajectory_csv(s, report));
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (!report.error.empty()) std::cerr << "episode error: " << report.error << "\n";
  return report.success ? kOk : kEpisodeFailed;
}

int cmd_render(const std::string& traj, const std::string& out, const std::string& view) {
  const auto t = parse_trajectory_csv(read_text(traj));
  write_text(out, render_svg(t, view == "xz" ? View::kXZ : View::kXY));
  return kOk;
}

int cmd_bench(const std::string& suite, int trials, const std::string& out, int threads) {
  BenchOptions opts;
  opts.trials = trials;
  opts.threads = threads;
  const auto result = run_bench(suite, opts);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  const auto csv = bench_csv(result);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return kOk;
}

int cmd_generate(const std::string& kind, int objects, int agents, std::uint64_t seed, const std::string& out,
                 const std::string& id) {
  Scenario s = kind == "stacking" ? generate_stacking_scenario(objects, agents, seed)
                                  : generate_parallel_pickup_scenario(seed);
  if (!id.empty()) s.id = id;
  const auto text = serialize_scenario(s);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-of-constraints model predictive control planner"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one episode of a scenario");
  run_cmd->add_option("scenario", run.scenario, "Scenario file (.scn)")->required();
  run_cmd->add_option("--method", run.method, "goc or baseline")->check(CLI::IsMember({"goc", "baseline"}));
  run_cmd->add_option("--seed", run.seed, "Trial seed");
  run_cmd->add_option("--metrics", run.metrics, "Metrics CSV to append to");
  run_cmd->add_option("--traj", run.traj, "Trajectory CSV to write");
  run_cmd->add_option("--budget", run.budget, "Simulated time budget, s");

  std::string traj_in, svg_out, view = "xy";
  auto* render_cmd = app.add_subcommand("render", "Render a trajectory CSV as SVG");
  render_cmd->add_option("trajectory", traj_in, "Trajectory CSV")->required();
  render_cmd->add_option("-o,--output", svg_out, "SVG output path")->required();
  render_cmd->add_option("--view", view, "xy or xz")->check(CLI::IsMember({"xy", "xz"}));

  std::string suite, bench_out;
  int trials = 5, threads = 0;
  auto* bench_cmd = app.add_subcommand("bench", "Run a directory of scenarios for both methods");
  bench_cmd->add_option("suite", suite, "Directory of .scn files")->required();
  bench_cmd->add_option("--trials", trials, "Seeded trials per scenario and method")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--out", bench_out, "Metrics CSV output (stdout if omitted)");
  bench_cmd->add_option("--threads", threads, "Parallel episodes (default GOC_MPC_THREADS or 1)");

  std::string kind = "stacking", gen_out, gen_id;
  int objects = 3, agents = 2;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("generate", "Write a generated scenario");
  gen_cmd->add_option("kind", kind, "stacking or parallel_pickup")
      ->check(CLI::IsMember({"stacking", "parallel_pickup"}));
  gen_cmd->add_option("--objects", objects, "Blocks (stacking)");
  gen_cmd->add_option("--agents", agents, "Agents (stacking)");
  gen_cmd->add_option("--seed", gen_seed, "Generator seed");
  gen_cmd->add_option("--id", gen_id, "Scenario id");
  gen_cmd->add_option("-o,--output", gen_out, "Output path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*render_cmd) return cmd_render(traj_in, svg_out, view);
    if (*bench_cmd) return cmd_bench(suite, trials, bench_out, threads);
    if (*gen_cmd) return cmd_generate(kind, objects, agents, gen_seed, gen_out, gen_id);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
