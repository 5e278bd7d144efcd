#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maif/env.hpp"
#include "maif/rl.hpp"
#include "maif/scalarization.hpp"

namespace maif {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic: map i uses a seed derived from (seed, i).
std::vector<GridMap> generate_map_pool(int count = 100, int size = 32, double density = 0.15,
                                       std::uint64_t seed = 0);

// Draws a pool map uniformly and places the formation with a fresh seed.
EpisodeFactory pool_episode_factory(std::vector<GridMap> pool, FormationSpec formation);

// Obstacle-free map of the given size with FOV-connected random spawns.
EpisodeFactory formation_episode_factory(int size, FormationSpec formation);

// One fixed instance per pool map (start anchor seeded by `seed` + index).
std::vector<Instance> pool_instances(std::span<const GridMap> pool, const FormationSpec& formation,
                                     std::uint64_t seed);

FormationSpec formation_for(const std::string& name, int agents);

struct PipelineConfig {
  TrainConfig path;
  TrainConfig formation;
  TrainConfig meta;
  int weight_episodes = 200;
  double weight_multiplier = 1.0;  // meta policy trained at multiplier x w_f
  int formation_map_size = 10;
};

struct PipelineResult {
  PolicyBundle bundle;
  WeightEstimate weight;
  std::map<std::string, std::vector<TrainingLogRow>> logs;  // keyed by phase name
};

// Path, then formation, then w_f from rollouts, then the meta policy.
PipelineResult train_hierarchical(const EpisodeFactory& envs, const FormationSpec& formation,
                                  const PipelineConfig& config);

// Retrains only the meta policy of an existing bundle at a new weight.
PolicyBundle retrain_meta(const PolicyBundle& bundle, double w_f, const EpisodeFactory& envs,
                          const TrainConfig& config);

// Directory layout: path.json, formation.json, meta.json, bundle.json.
void save_bundle(const std::filesystem::path& dir, const PolicyBundle& bundle);
PolicyBundle load_bundle(const std::filesystem::path& dir);

// Training run description for the CLI: where episodes come from and the
// per-phase budgets.
struct TrainingSetup {
  int size = 10;
  double density = 0.05;
  int agents = 3;
  std::string formation = "line";
  int maps = 100;
  int episodes = 2000;       // path, formation and end-to-end phases
  int meta_episodes = 2000;
  double learning_rate = 0.01;
  int weight_episodes = 200;
  double weight_multiplier = 1.0;
  std::string backend = "tabular";
  std::uint64_t seed = 1;

  void validate() const;
  FormationSpec formation_spec() const { return formation_for(formation, agents); }
  EpisodeFactory episodes_factory() const;
  // seed_offset keeps the phases on distinct random streams.
  TrainConfig train_config(int episode_count, std::uint64_t seed_offset) const;
  PipelineConfig pipeline_config() const;
};

TrainingSetup parse_training_setup(std::istream& in);
TrainingSetup load_training_setup(const std::string& path);

struct BenchmarkConfig {
  std::vector<int> sizes{10, 20};
  std::vector<double> densities{0.05};
  std::vector<int> agents{3};
  std::string formation = "line";
  std::vector<std::string> methods{"ours", "cbs", "joint_astar"};
  int maps = 10;
  int episodes = 5;  // per map, "ours" keeps the best
  double time_limit = 300.0;
  int warmup_steps = 5;
  std::uint64_t seed = 0;
  double weight = -1.0;  // joint A* weight; < 0 uses the bundle's w_f
  std::string bundle;    // checkpoint directory for "ours"

  void validate() const;
};

// Throws ConfigError on malformed or unknown fields.
BenchmarkConfig parse_benchmark_config(std::istream& in);
BenchmarkConfig load_benchmark_config(const std::string& path);

struct ResultRow {
  int size = 0;
  int agents = 0;
  double density = 0.0;
  std::string method;
  std::optional<double> makespan;        // empty when no map succeeded
  std::optional<double> formation_loss;  // normalized by map size
  double success = 0.0;
  std::optional<double> runtime;  // seconds per map; the time limit for timed-out cells

  bool operator==(const ResultRow&) const = default;
};

struct BenchmarkReport {
  std::vector<ResultRow> rows;
  int timeouts = 0;  // planner calls that hit the time limit
  int attempts = 0;  // planner calls

  // More than half of all planner attempts hit the time limit.
  bool timeout_dominated() const { return attempts > 0 && 2 * timeouts > attempts; }
};

// `bundle` may be null when "ours" is not among the methods.
BenchmarkReport run_benchmark(const BenchmarkConfig& config, const PolicyBundle* bundle);

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results_csv(std::istream& in);
void write_summary_table(std::ostream& out, std::span<const ResultRow> rows);

// pareto.csv has columns weight,makespan,loss (failed points are skipped).
void write_pareto_points(std::ostream& out, std::span<const ParetoPoint> points);

// Writes results.csv, summary.txt, pareto.csv and training_<name>.csv into
// `dir` (created if missing). pareto.csv holds the learned points when there
// are any, with the exact frontier going to pareto_exact.csv. Throws std::runtime_error on I/O failure.
void emit_reports(const std::filesystem::path& dir, std::span<const ResultRow> rows,
                  std::span<const ParetoPoint> pareto,
                  const std::map<std::string, std::vector<TrainingLogRow>>& training_logs);

}  // namespace maif
