#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "maif/bench.hpp"
#include "maif/planners.hpp"

using namespace maif;
namespace fs = std::filesystem;

namespace {

BenchmarkConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_benchmark_config(in);
}

TrainingSetup parse_setup(const std::string& text) {
  std::istringstream in(text);
  return parse_training_setup(in);
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("maif_test_bench_" + name);
  fs::remove_all(dir);
  return dir;
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("results csv has the exact header and round trips") {
  const std::vector<ResultRow> rows{
      {10, 3, 0.05, "cbs", 12.5, 0.125, 1.0, 0.004},
      {20, 3, 0.1, "joint_astar", std::nullopt, std::nullopt, 0.0, 300.0},
      {10, 4, 0.05, "ours", 1.0 / 3.0, 0.0123456789012345, 0.7, std::nullopt},
  };
  std::stringstream s;
  write_results_csv(s, rows);
  std::string header;
  std::getline(std::istringstream(s.str()) >> std::ws, header);
  CHECK(header == "size,agents,density,method,makespan,formation_loss,success,runtime");
  CHECK(s.str().find("20,3,0.10000000000000001,joint_astar,-,-,0,300\n") != std::string::npos);
  CHECK(read_results_csv(s) == rows);

  std::istringstream bad("size,agents\n");
  CHECK_THROWS(read_results_csv(bad));
}

TEST_CASE("benchmark config defaults and parsing") {
  const auto d = parse("{}");
  CHECK(d.sizes == std::vector<int>{10, 20});
  CHECK(d.time_limit == 300.0);
  CHECK(d.maps == 10);
  const auto c = parse(R"({"sizes": [12], "methods": ["cbs"], "time_limit": 5, "warmup_steps": 0, "seed": 4})");
  CHECK(c.sizes == std::vector<int>{12});
  CHECK(c.methods == std::vector<std::string>{"cbs"});
  CHECK(c.time_limit == 5.0);
  CHECK(c.seed == 4);
}

TEST_CASE("benchmark config errors") {
  CHECK_THROWS_AS(parse("{\"colour\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse("{\"sizes\": \"ten\"}"), ConfigError);
  CHECK_THROWS_AS(parse("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse("{\"methods\": [\"dijkstra\"]}"), ConfigError);
  CHECK_THROWS_AS(parse("{\"sizes\": [4]}"), ConfigError);
  CHECK_THROWS_AS(parse("{\"densities\": [0.7]}"), ConfigError);
  CHECK_THROWS_AS(parse("{\"time_limit\": 0}"), ConfigError);
  CHECK_THROWS_AS(parse("{\"formation\": \"blob\"}"), ConfigError);
  CHECK_THROWS_AS(parse("{not json"), ConfigError);
  CHECK_THROWS_AS(load_benchmark_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("training setup parsing") {
  const auto d = parse_setup("{}");
  CHECK(d.size == 10);
  CHECK(d.density == 0.05);
  CHECK(d.agents == 3);
  CHECK(d.learning_rate == 0.01);
  const auto s = parse_setup(R"({"size": 12, "episodes": 50, "backend": "mlp", "seed": 3})");
  CHECK(s.size == 12);
  CHECK(s.train_config(50, 2).seed == 32);
  CHECK(s.train_config(50, 2).total_episodes == 50);
  CHECK(s.pipeline_config().formation_map_size == 12);
  CHECK_THROWS_AS(parse_setup(R"({"backend": "forest"})"), ConfigError);
  CHECK_THROWS_AS(parse_setup(R"({"weight_episodes": 5})"), ConfigError);
  CHECK_THROWS_AS(parse_setup(R"({"episode": 5})"), ConfigError);
  CHECK_THROWS_AS(parse_setup(R"({"agents": 1})"), ConfigError);
}

TEST_CASE("same seed gives the same pool and instances") {
  const auto a = generate_map_pool(5, 12, 0.1, 9);
  const auto b = generate_map_pool(5, 12, 0.1, 9);
  CHECK(a == b);
  CHECK_FALSE(generate_map_pool(5, 12, 0.1, 10) == a);
  const auto f = line_formation(3);
  const auto ia = pool_instances(a, f, 3);
  const auto ib = pool_instances(b, f, 3);
  for (std::size_t i = 0; i < ia.size(); ++i) {
    CHECK(ia[i].starts == ib[i].starts);
    CHECK(ia[i].goals == ib[i].goals);
  }
}

TEST_CASE("planners agree inside the benchmark") {
  const auto c = parse(R"({"sizes": [10], "densities": [0.05], "agents": [3], "methods": ["cbs", "joint_astar"],
                           "maps": 10, "weight": 0, "warmup_steps": 0})");
  const auto report = run_benchmark(c, nullptr);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.attempts == 20);
  CHECK(report.timeouts == 0);
  CHECK_FALSE(report.timeout_dominated());
  for (const auto& r : report.rows) CHECK(r.success == 1.0);
  REQUIRE(report.rows[0].makespan);
  CHECK(*report.rows[0].makespan == doctest::Approx(*report.rows[1].makespan));
}

TEST_CASE("timed-out cells are marked missing at the time limit") {
  const auto c = parse(R"({"sizes": [64], "densities": [0.2], "agents": [4], "formation": "square",
                           "methods": ["joint_astar"], "maps": 2, "weight": 1, "time_limit": 0.05})");
  const auto report = run_benchmark(c, nullptr);
  REQUIRE(report.rows.size() == 1);
  const auto& r = report.rows[0];
  CHECK_FALSE(r.makespan);
  CHECK_FALSE(r.formation_loss);
  CHECK(r.success == 0.0);
  REQUIRE(r.runtime);
  CHECK(*r.runtime == 0.05);
  CHECK(report.timeout_dominated());
}

TEST_CASE("ours needs a bundle") {
  const auto c = parse(R"({"methods": ["ours"]})");
  CHECK_THROWS_AS(run_benchmark(c, nullptr), ConfigError);
}

TEST_CASE("emit reports writes plot-ready files") {
  const auto dir = scratch_dir("emit");
  const std::vector<ResultRow> rows{{10, 3, 0.05, "cbs", 12.0, 0.1, 1.0, 0.01}};
  emit_reports(dir, rows, {}, {});
  CHECK(line_count(dir / "results.csv") == 2);
  CHECK(fs::exists(dir / "summary.txt"));
  CHECK_FALSE(fs::exists(dir / "pareto.csv"));

  std::vector<ParetoPoint> pts(3);
  pts[0].source = "learned", pts[0].weight = 0, pts[0].makespan = 14, pts[0].formation_loss = 0.2;
  pts[1].source = "learned", pts[1].weight = 2, pts[1].error = "failed";
  pts[2].source = "joint_astar", pts[2].weight = 2, pts[2].makespan = 15, pts[2].formation_loss = 0.05;
  std::map<std::string, std::vector<TrainingLogRow>> logs{{"path", {{1, -3.5, 20, 0.1, false}}}};
  emit_reports(dir, {}, pts, logs);
  std::ifstream p(dir / "pareto.csv");
  std::stringstream body;
  body << p.rdbuf();
  CHECK(body.str() == "weight,makespan,loss\n0,14,0.2\n");
  CHECK(line_count(dir / "pareto_exact.csv") == 2);
  CHECK(line_count(dir / "training_path.csv") == 2);

  CHECK_THROWS_AS(emit_reports(dir, {}, {}, {}), std::invalid_argument);
  // A regular file where the directory should be.
  CHECK_THROWS_AS(emit_reports(dir / "results.csv" / "sub", rows, {}, {}), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("summary table marks missing entries") {
  const std::vector<ResultRow> rows{{512, 3, 0.05, "cbs", std::nullopt, std::nullopt, 0.0, 300.0}};
  std::ostringstream out;
  write_summary_table(out, rows);
  const auto text = out.str();
  CHECK(text.find("makespan") != std::string::npos);
  CHECK(text.find("cbs") != std::string::npos);
  CHECK(text.find(" -") != std::string::npos);
  CHECK(text.find("300.000") != std::string::npos);
}

TEST_CASE("bundle checkpoints round trip") {
  const auto setup = parse_setup(R"({"episodes": 30, "meta_episodes": 30, "weight_episodes": 30, "maps": 3})");
  const auto trained = train_hierarchical(setup.episodes_factory(), setup.formation_spec(), setup.pipeline_config());
  const auto dir = scratch_dir("bundle");
  save_bundle(dir, trained.bundle);
  const auto back = load_bundle(dir);
  CHECK(back.w_f == doctest::Approx(trained.bundle.w_f));
  CHECK(back.path.q->same_parameters(*trained.bundle.path.q));
  CHECK(back.formation.q->same_parameters(*trained.bundle.formation.q));
  CHECK(back.meta.q->same_parameters(*trained.bundle.meta.q));
  CHECK_THROWS(load_bundle(dir / "missing"));
  fs::remove_all(dir);
}
