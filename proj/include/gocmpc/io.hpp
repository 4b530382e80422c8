#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gocmpc/sim.hpp"

namespace gocmpc {

inline constexpr int kSchemaVersion = 1;

/// Malformed scenario document. `path` locates the offending value, for
/// example "goc.edges[3].to", or "$" for the document root.
class ParseError : public Error {
 public:
  ParseError(std::string path, std::string reason);
  const std::string& path() const { return path_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string path_;
  std::string reason_;
};

class SchemaVersionMismatch : public Error {
 public:
  explicit SchemaVersionMismatch(long long found);
  long long found() const { return found_; }

 private:
  long long found_;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Parses and validates a scenario document. A document holding only a
/// `generator` block (plus optional id and seed) is expanded by the matching
/// generator.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// Canonical text form: keys sorted, two-space indent, trailing newline.
std::string serialize_scenario(const Scenario& s);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

struct MetricsRow {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  bool success = false;
  double max_time_s = 0.0;
  double avg_time_s = 0.0;
  double total_length_m = 0.0;
  int backtracks = 0;
  int cycles = 0;

  static MetricsRow from_report(const Scenario& s, Method method, const EpisodeReport& r);
};

/// "scenario,method,seed,success,max_time_s,avg_time_s,total_length_m,backtracks,cycles"
std::string metrics_header();
std::string metrics_csv_line(const MetricsRow& row);
/// Appends rows, writing the header first when the file is new or empty.
void append_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// Columns t, a<j>_<axis> per agent, k<p>_<axis> per keypoint.
std::string trajectory_csv(const Scenario& s, const EpisodeReport& r);

struct Trajectory {
  int dim = 0;
  int agents = 0;
  int keypoints = 0;
  std::vector<double> t;
  std::vector<std::vector<double>> rows;  // values after t, agents then keypoints

  double agent(std::size_t row, int j, int axis) const { return rows[row][j * dim + axis]; }
  double keypoint(std::size_t row, int p, int axis) const { return rows[row][(agents + p) * dim + axis]; }
};

/// Throws ParseError; its path is "header" or "row <line number>".
Trajectory parse_trajectory_csv(std::string_view text);

enum class View { kXY, kXZ };

/// Deterministic SVG with one polyline per agent and keypoint start and end
/// markers. Throws Error when the view needs an axis the data lacks.
std::string render_svg(const Trajectory& traj, View view);

struct BenchOptions {
  int trials = 5;
  int threads = 0;  // 0 selects GOC_MPC_THREADS or 1
};

struct BenchSummary {
  std::string scenario;
  std::string method;
  int trials = 0;
  double success_rate = 0.0;
  // Mean and sample standard deviation per metric.
  double max_time_mean = 0.0, max_time_std = 0.0;
  double avg_time_mean = 0.0, avg_time_std = 0.0;
  double length_mean = 0.0, length_std = 0.0;
  double backtracks_mean = 0.0, backtracks_std = 0.0;
  double cycles_mean = 0.0, cycles_std = 0.0;
};

struct BenchResult {
  std::vector<MetricsRow> rows;
  std::vector<std::string> warnings;
  std::vector<BenchSummary> summary;
};

/// Runs every `.scn` file of a directory, in name order, for both methods and
/// seeds 0..trials-1. Unreadable scenarios become warnings.
BenchResult run_bench(const std::filesystem::path& suite, const BenchOptions& options);
std::vector<BenchSummary> summarize(const std::vector<MetricsRow>& rows);

/// Rows, then warning lines, then a "# summary" block.
std::string bench_csv(const BenchResult& result);

}  // namespace gocmpc
