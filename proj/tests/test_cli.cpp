#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path kSource = GOCMPC_SOURCE_DIR;
const std::string kCli = GOCMPC_CLI;

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / "gocmpc_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kScenario = "\"" + (kSource / "scenarios" / "stacking_2agent.scn").string() + "\"";

}  // namespace

TEST_CASE("run writes one metrics row per episode") {
  const auto dir = scratch();
  const auto metrics = dir / "m.csv";
  CHECK(run("run " + kScenario + " --method goc --seed 0 --metrics " + metrics.string()) == 0);
  CHECK(run("run " + kScenario + " --method baseline --seed 0 --metrics " + metrics.string()) == 0);
  const auto rows = lines(slurp(metrics));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "scenario,method,seed,success,max_time_s,avg_time_s,total_length_m,backtracks,cycles");
  CHECK(rows[1].rfind("stacking_2agent,goc,0,1,", 0) == 0);
  CHECK(rows[2].rfind("stacking_2agent,linearized-baseline,0,1,", 0) == 0);
}

TEST_CASE("run reports errors and failed episodes by exit code") {
  CHECK(run("run missing.scn") == 1);
  CHECK(run("run " + kScenario + " --method sideways") == 1);
  // A budget shorter than one control step cannot finish the task.
  CHECK(run("run " + kScenario + " --budget 0.05") == 2);
  CHECK(run("frobnicate") == 1);
}

TEST_CASE("run is reproducible apart from wall clock fields") {
  const auto dir = scratch();
  CHECK(run("run " + kScenario + " --seed 1 --traj " + (dir / "a.csv").string()) == 0);
  CHECK(run("run " + kScenario + " --seed 1 --traj " + (dir / "b.csv").string()) == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
}

TEST_CASE("render produces identical svg for identical input") {
  const auto dir = scratch();
  const auto traj = dir / "t.csv";
  REQUIRE(run("run " + kScenario + " --traj " + traj.string()) == 0);
  CHECK(run("render " + traj.string() + " -o " + (dir / "a.svg").string()) == 0);
  CHECK(run("render " + traj.string() + " -o " + (dir / "b.svg").string() + " --view xy") == 0);
  CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));
  CHECK(run("render " + traj.string() + " -o " + (dir / "c.svg").string() + " --view xz") == 0);
  std::ofstream(dir / "bad.csv") << "t,a0_x\n0,1\n";
  CHECK(run("render " + (dir / "bad.csv").string() + " -o " + (dir / "d.svg").string()) == 1);
}

TEST_CASE("bench writes rows and a summary") {
  const auto dir = scratch();
  const auto suite = dir / "suite";
  fs::create_directories(suite);
  std::ofstream(suite / "one.scn") << R"({"schema_version": 1, "id": "s11",
                                          "generator": {"kind": "stacking", "objects": 1, "agents": 1}})";
  std::ofstream(suite / "broken.scn") << "[]";
  CHECK(run("bench " + suite.string() + " --trials 2 --out " + (dir / "b.csv").string()) == 0);
  const auto text = slurp(dir / "b.csv");
  const auto rows = lines(text);
  REQUIRE(rows.size() >= 5);
  CHECK(rows[0].rfind("scenario,method,seed", 0) == 0);
  CHECK(text.find("# warning: broken.scn") != std::string::npos);
  CHECK(text.find("# summary") != std::string::npos);
  CHECK(run("bench " + suite.string() + " --trials 0 --out " + (dir / "e.csv").string()) == 0);
  CHECK(slurp(dir / "e.csv").find("# summary") != std::string::npos);
}

TEST_CASE("generate writes a parsable scenario") {
  const auto dir = scratch();
  CHECK(run("generate stacking --objects 2 --agents 2 --seed 5 -o " + (dir / "g.scn").string()) == 0);
  CHECK(run("run " + (dir / "g.scn").string()) == 0);
}
