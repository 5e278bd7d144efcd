#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "maif/bench.hpp"
#include "maif/planners.hpp"
#include "maif/scalarization.hpp"

namespace fs = std::filesystem;
using namespace maif;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTimeouts = 3;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "out";
  std::optional<double> time_limit;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--time-limit", c.time_limit, "Planner time limit in seconds")->check(CLI::PositiveNumber);
}

TrainingSetup training_setup(const Common& c) {
  TrainingSetup s = c.config.empty() ? TrainingSetup{} : load_training_setup(c.config);
  if (c.seed) s.seed = *c.seed;
  s.validate();
  return s;
}

PolicyBundle bundle_or_empty(const fs::path& dir) {
  if (fs::exists(dir / "bundle.json")) return load_bundle(dir);
  return {};
}

void write_log(const fs::path& dir, const std::string& name, const std::vector<TrainingLogRow>& log) {
  std::ofstream out(dir / ("training_" + name + ".csv"));
  if (!out) throw std::runtime_error("cannot write training log in " + dir.string());
  write_training_log(out, log);
}

void write_weight(const fs::path& dir, const WeightEstimate& w) {
  std::ofstream out(dir / "weight.txt");
  if (!out) throw std::runtime_error("cannot write " + (dir / "weight.txt").string());
  write_weight_report(out, w);
}

WeightEstimate weigh(const PolicyBundle& bundle, const TrainingSetup& setup, const EpisodeFactory& envs) {
  if (!bundle.formation.q) throw ConfigError("weigh: bundle has no formation policy");
  std::mt19937_64 probe(setup.seed);
  const int T = envs(probe).episode_limit;
  return estimate_weight_from_policies(bundle.formation, envs, setup.weight_episodes, T, setup.seed);
}

int cmd_gen_maps(const Common& c, int count, int size, double density) {
  if (count < 1 || size < 10 || !(density >= 0.0 && density < 0.5))
    throw ConfigError("gen-maps: need count >= 1, size >= 10, density in [0, 0.5)");
  const auto pool = generate_map_pool(count, size, density, c.seed.value_or(0));
  fs::create_directories(c.out);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "map_%03zu.txt", i);
    save_map((fs::path(c.out) / name).string(), pool[i]);
  }
  std::cout << "wrote " << pool.size() << " maps to " << c.out << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& phase) {
  const TrainingSetup setup = training_setup(c);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  const auto envs = setup.episodes_factory();

  if (phase == "all") {
    auto res = train_hierarchical(envs, setup.formation_spec(), setup.pipeline_config());
    save_bundle(dir, res.bundle);
    write_weight(dir, res.weight);
    for (const auto& [name, log] : res.logs) write_log(dir, name, log);
    std::cout << "w_f " << res.weight.w_f << " (+/- " << res.weight.confidence_halfwidth << ")\n";
    return kExitOk;
  }

  PolicyBundle bundle = bundle_or_empty(dir);
  TrainingResult result;
  if (phase == "path") {
    result = train_path_policy(envs, setup.train_config(setup.episodes, 1));
    bundle.path = result.policy;
  } else if (phase == "formation") {
    const auto form_envs = formation_episode_factory(setup.size, setup.formation_spec());
    result = train_formation_policy(form_envs, setup.train_config(setup.episodes, 2));
    bundle.formation = result.policy;
  } else if (phase == "meta") {
    if (!bundle.path.q || !bundle.formation.q)
      throw ConfigError("train meta: " + dir.string() + " needs trained path and formation policies");
    if (!(bundle.w_f > 0.0)) {
      const auto w = weigh(bundle, setup, envs);
      write_weight(dir, w);
      bundle.w_f = setup.weight_multiplier * w.w_f;
    }
    result = train_meta_policy(bundle.path, bundle.formation, bundle.w_f, envs,
                               setup.train_config(setup.meta_episodes, 3));
    bundle.meta = result.policy;
  } else {  // end2end
    if (!(bundle.w_f > 0.0)) throw ConfigError("train end2end: run 'weigh' or 'train --phase meta' first");
    result = train_end_to_end_baseline(envs, setup.train_config(setup.episodes, 4), bundle.w_f);
    PolicyBundle flat;
    flat.path = result.policy;
    flat.w_f = bundle.w_f;
    save_bundle(dir / "end2end", flat);
    write_log(dir, "end2end", result.log);
    std::cout << "end-to-end policy saved to " << (dir / "end2end").string() << '\n';
    return kExitOk;
  }
  save_bundle(dir, bundle);
  write_log(dir, phase, result.log);
  std::cout << phase << " policy trained for " << result.log.size() << " episodes\n";
  return kExitOk;
}

int cmd_weigh(const Common& c, const std::string& bundle_dir) {
  const TrainingSetup setup = training_setup(c);
  const fs::path dir = bundle_dir.empty() ? fs::path(c.out) : fs::path(bundle_dir);
  PolicyBundle bundle = load_bundle(dir);
  const auto w = weigh(bundle, setup, setup.episodes_factory());
  fs::create_directories(c.out);
  write_weight(c.out, w);
  bundle.w_f = w.w_f;
  save_bundle(dir, bundle);
  write_weight_report(std::cout, w);
  return kExitOk;
}

int cmd_plan(const Common& c, const std::string& method, const std::string& scenario, const std::string& bundle_dir,
             std::optional<double> weight) {
  if (scenario.empty()) throw ConfigError("plan: --scenario is required");
  const Instance inst = instantiate(load_scenario(scenario));
  const double limit = c.time_limit.value_or(kDefaultTimeLimitSeconds);
  Plan plan;
  if (method == "ours") {
    if (bundle_dir.empty()) throw ConfigError("plan: method 'ours' needs --bundle");
    RolloutOptions ro;
    ro.record_trajectory = true;
    ro.seed = c.seed.value_or(0);
    const auto ep = run_episode(load_bundle(bundle_dir), inst, ro);
    std::vector<std::vector<Cell>> paths(static_cast<std::size_t>(inst.agent_count()));
    for (const auto& positions : ep.trajectory)
      for (std::size_t i = 0; i < paths.size(); ++i) paths[i].push_back(positions[i]);
    plan = make_plan(std::move(paths));
    plan.runtime = ep.decision_seconds;
    if (!ep.success) std::cout << "episode ended before every agent reached its goal\n";
  } else {
    PlannerOptions po;
    po.time_limit_seconds = limit;
    try {
      if (method == "cbs") {
        plan = cbs(inst.map, inst.starts, inst.goals, po);
      } else {
        double w = weight.value_or(-1.0);
        if (w < 0.0) w = bundle_dir.empty() ? 0.0 : load_bundle(bundle_dir).w_f;
        plan = joint_astar(inst.map, inst.starts, inst.goals, inst.formation, w, po);
      }
    } catch (const TimeoutError& e) {
      std::cerr << e.what() << '\n';
      return kExitTimeouts;
    }
  }
  fs::create_directories(c.out);
  std::ofstream out(fs::path(c.out) / "plan.txt");
  write_plan(out, plan);
  const auto m = evaluate_plan(plan, inst.formation, inst.map.size());
  std::cout << "makespan " << m.makespan << "\nformation_loss " << m.normalized_formation_loss << "\nruntime "
            << plan.runtime << '\n';
  return kExitOk;
}

int cmd_bench(const Common& c, const std::string& bundle_dir) {
  if (c.config.empty()) throw ConfigError("bench: --config is required");
  BenchmarkConfig cfg = load_benchmark_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.time_limit) cfg.time_limit = *c.time_limit;
  if (!bundle_dir.empty()) cfg.bundle = bundle_dir;
  cfg.validate();
  std::optional<PolicyBundle> bundle;
  if (!cfg.bundle.empty()) bundle = load_bundle(cfg.bundle);
  const auto report = run_benchmark(cfg, bundle ? &*bundle : nullptr);
  emit_reports(c.out, report.rows, {}, {});
  write_summary_table(std::cout, report.rows);
  if (report.timeout_dominated()) {
    std::cerr << report.timeouts << " of " << report.attempts << " planner calls timed out\n";
    return kExitTimeouts;
  }
  return kExitOk;
}

int cmd_pareto(const Common& c, const std::string& bundle_dir, std::vector<double> multipliers, int instances,
               bool exact_only) {
  const TrainingSetup setup = training_setup(c);
  if (instances < 1) throw ConfigError("pareto: --instances must be positive");
  for (double m : multipliers)
    if (m < 0.0) throw ConfigError("pareto: multipliers must be non-negative");
  PolicyBundle bundle;
  double base = 0.0;
  if (!bundle_dir.empty()) {
    bundle = load_bundle(bundle_dir);
    base = bundle.w_f / setup.weight_multiplier;
  }
  if (!(base > 0.0)) throw ConfigError("pareto: needs --bundle with an estimated w_f");
  const auto pool = generate_map_pool(instances, setup.size, setup.density, setup.seed + 7);
  const auto insts = pool_instances(pool, setup.formation_spec(), setup.seed);
  const auto envs = setup.episodes_factory();
  ParetoOptions opts;
  opts.run_learned = !exact_only;
  opts.warmup_steps = 0;
  opts.seed = setup.seed;
  opts.time_limit_seconds = c.time_limit.value_or(kDefaultTimeLimitSeconds);
  const TrainConfig meta_cfg = setup.train_config(setup.meta_episodes, 3);
  const auto points = pareto_sweep(
      [&](double w) { return retrain_meta(bundle, w, envs, meta_cfg); }, multipliers, base, insts, opts);
  fs::create_directories(c.out);
  std::ofstream out(fs::path(c.out) / "pareto_sweep.csv");
  write_pareto_csv(out, points);
  out.close();
  emit_reports(c.out, {}, points, {});
  write_pareto_csv(std::cout, points);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent path finding in formation: training, planning and benchmarks"};
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("gen-maps", "Generate a seeded pool of random maps");
  int count = 100;
  int size = 32;
  double density = 0.15;
  gen->add_option("--count", count)->capture_default_str();
  gen->add_option("--size", size)->capture_default_str();
  gen->add_option("--density", density)->capture_default_str();
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "Train one phase into the bundle directory given by --out");
  std::string phase;
  train->add_option("--phase", phase, "path, formation, meta, end2end or all")
      ->required()
      ->check(CLI::IsMember({"path", "formation", "meta", "end2end", "all"}));
  add_common(train, common);

  auto* weigh_cmd = app.add_subcommand("weigh", "Estimate w_f from the bundle's formation policy");
  std::string bundle_dir;
  weigh_cmd->add_option("--bundle", bundle_dir, "Bundle directory (defaults to --out)");
  add_common(weigh_cmd, common);

  auto* plan = app.add_subcommand("plan", "Solve one scenario");
  std::string method = "cbs";
  std::string scenario;
  std::optional<double> weight;
  plan->add_option("--method", method)->check(CLI::IsMember({"cbs", "joint_astar", "ours"}))->capture_default_str();
  plan->add_option("--scenario", scenario, "Scenario JSON file");
  plan->add_option("--bundle", bundle_dir, "Bundle directory");
  plan->add_option("--weight", weight, "Formation weight for joint A*");
  add_common(plan, common);

  auto* bench = app.add_subcommand("bench", "Run a benchmark grid from a config file");
  bench->add_option("--bundle", bundle_dir, "Bundle directory for method 'ours'");
  add_common(bench, common);

  auto* pareto = app.add_subcommand("pareto", "Sweep weight multiples for learned and exact fronts");
  std::vector<double> multipliers{0.0, 1.0, 2.0, 3.0};
  int instances = 5;
  bool exact_only = false;
  pareto->add_option("--bundle", bundle_dir, "Trained bundle directory");
  pareto->add_option("--multipliers", multipliers)->capture_default_str();
  pareto->add_option("--instances", instances)->capture_default_str();
  pareto->add_flag("--exact-only", exact_only, "Skip meta retraining");
  add_common(pareto, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_maps(common, count, size, density);
    if (*train) return cmd_train(common, phase);
    if (*weigh_cmd) return cmd_weigh(common, bundle_dir);
    if (*plan) return cmd_plan(common, method, scenario, bundle_dir, weight);
    if (*bench) return cmd_bench(common, bundle_dir);
    if (*pareto) return cmd_pareto(common, bundle_dir, multipliers, instances, exact_only);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
