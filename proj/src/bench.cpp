#include "maif/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "maif/planners.hpp"

namespace maif {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<GridMap> generate_map_pool(int count, int size, double density, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("generate_map_pool: count must be positive");
  std::vector<GridMap> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pool.push_back(generate_map(size, density, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  return pool;
}

EpisodeFactory pool_episode_factory(std::vector<GridMap> pool, FormationSpec formation) {
  if (pool.empty()) throw std::invalid_argument("pool_episode_factory: empty pool");
  auto maps = std::make_shared<const std::vector<GridMap>>(std::move(pool));
  return [maps, formation = std::move(formation)](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, maps->size() - 1);
    for (int attempt = 0;; ++attempt) {
      const GridMap& map = (*maps)[pick(rng)];
      try {
        return place_formation_instance(map, formation, rng());
      } catch (const GenerationError&) {
        if (attempt >= 64) throw;
      }
    }
  };
}

EpisodeFactory formation_episode_factory(int size, FormationSpec formation) {
  GridMap map(size, size);
  assign_default_regions(map);
  return [map = std::move(map), formation = std::move(formation)](std::mt19937_64& rng) {
    return make_formation_training_instance(map, formation, rng);
  };
}

std::vector<Instance> pool_instances(std::span<const GridMap> pool, const FormationSpec& formation,
                                     std::uint64_t seed) {
  std::vector<Instance> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) out.push_back(place_formation_instance(pool[i], formation, seed + i));
  return out;
}

PipelineResult train_hierarchical(const EpisodeFactory& envs, const FormationSpec& formation,
                                  const PipelineConfig& config) {
  PipelineResult out;
  auto path = train_path_policy(envs, config.path);
  auto form = train_formation_policy(formation_episode_factory(config.formation_map_size, formation), config.formation);
  std::mt19937_64 probe(config.meta.seed);
  const int T = envs(probe).episode_limit;
  out.weight = estimate_weight_from_policies(form.policy, envs, config.weight_episodes, T, config.meta.seed);
  const double w = config.weight_multiplier * out.weight.w_f;
  auto meta = train_meta_policy(path.policy, form.policy, w, envs, config.meta);
  out.bundle.path = path.policy;
  out.bundle.formation = form.policy;
  out.bundle.meta = meta.policy;
  out.bundle.w_f = w;
  out.logs["path"] = std::move(path.log);
  out.logs["formation"] = std::move(form.log);
  out.logs["meta"] = std::move(meta.log);
  return out;
}

PolicyBundle retrain_meta(const PolicyBundle& bundle, double w_f, const EpisodeFactory& envs,
                          const TrainConfig& config) {
  PolicyBundle out = bundle;
  out.meta = train_meta_policy(bundle.path, bundle.formation, w_f, envs, config).policy;
  out.w_f = w_f;
  return out;
}

namespace {

const char* clip_name(ClipRule c) { return c == ClipRule::CostMap ? "cost_map" : "valid_only"; }

ClipRule clip_from(const std::string& s) {
  if (s == "cost_map") return ClipRule::CostMap;
  if (s == "valid_only") return ClipRule::ValidOnly;
  throw std::runtime_error("bundle: unknown clip rule '" + s + "'");
}

}  // namespace

void save_bundle(const fs::path& dir, const PolicyBundle& bundle) {
  fs::create_directories(dir);
  json j;
  j["w_f"] = bundle.w_f;
  const std::pair<const char*, const Policy*> parts[] = {
      {"path", &bundle.path}, {"formation", &bundle.formation}, {"meta", &bundle.meta}};
  for (const auto& [name, p] : parts) {
    if (!p->q) continue;
    save_value_function((dir / (std::string(name) + ".json")).string(), *p->q);
    j["policies"][name] = {{"view", to_string(p->view)}, {"clip", clip_name(p->clip)}, {"trained", p->trained}};
  }
  std::ofstream out(dir / "bundle.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "bundle.json").string());
  out << j.dump(2) << '\n';
}

PolicyBundle load_bundle(const fs::path& dir) {
  std::ifstream in(dir / "bundle.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "bundle.json").string());
  const json j = json::parse(in);
  PolicyBundle b;
  b.w_f = j.at("w_f").get<double>();
  const std::pair<const char*, Policy*> parts[] = {{"path", &b.path}, {"formation", &b.formation}, {"meta", &b.meta}};
  for (const auto& [name, p] : parts) {
    if (!j.contains("policies") || !j["policies"].contains(name)) continue;
    const auto& e = j["policies"][name];
    p->q = load_value_function((dir / (std::string(name) + ".json")).string());
    p->view = view_from_string(e.at("view").get<std::string>());
    p->clip = clip_from(e.at("clip").get<std::string>());
    p->trained = e.at("trained").get<bool>();
  }
  return b;
}

void BenchmarkConfig::validate() const {
  static const std::set<std::string> known{"ours", "cbs", "joint_astar"};
  if (sizes.empty() || densities.empty() || agents.empty() || methods.empty())
    throw ConfigError("config: sizes, densities, agents and methods must be non-empty");
  for (int s : sizes)
    if (s < 10) throw ConfigError("config: map size must be at least 10");
  for (double d : densities)
    if (!(d >= 0.0 && d < 0.5)) throw ConfigError("config: density must lie in [0, 0.5)");
  for (int k : agents)
    if (k < 2) throw ConfigError("config: agent count must be at least 2");
  for (const auto& m : methods)
    if (!known.count(m)) throw ConfigError("config: unknown method '" + m + "'");
  if (maps < 1 || episodes < 1) throw ConfigError("config: maps and episodes must be positive");
  if (!(time_limit > 0.0)) throw ConfigError("config: time_limit must be positive");
  if (warmup_steps < 0) throw ConfigError("config: warmup_steps must be non-negative");
  try {
    for (int k : agents) formation_for(formation, k);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

BenchmarkConfig parse_benchmark_config(std::istream& in) {
  static const std::set<std::string> keys{"sizes",        "densities", "agents", "formation", "methods", "maps",
                                          "episodes",     "time_limit", "warmup_steps", "seed", "weight", "bundle"};
  BenchmarkConfig c;
  try {
    const json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [k, v] : j.items())
      if (!keys.count(k)) throw ConfigError("config: unknown field '" + k + "'");
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("sizes", c.sizes);
    get("densities", c.densities);
    get("agents", c.agents);
    get("formation", c.formation);
    get("methods", c.methods);
    get("maps", c.maps);
    get("episodes", c.episodes);
    get("time_limit", c.time_limit);
    get("warmup_steps", c.warmup_steps);
    get("seed", c.seed);
    get("weight", c.weight);
    get("bundle", c.bundle);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

BenchmarkConfig load_benchmark_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_benchmark_config(in);
}

FormationSpec formation_for(const std::string& name, int agents) { return formation_by_name(name, agents); }

void TrainingSetup::validate() const {
  if (size < 10) throw ConfigError("config: map size must be at least 10");
  if (!(density >= 0.0 && density < 0.5)) throw ConfigError("config: density must lie in [0, 0.5)");
  if (agents < 2) throw ConfigError("config: agent count must be at least 2");
  if (maps < 1 || episodes < 1 || meta_episodes < 1) throw ConfigError("config: maps and episode counts must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
  if (weight_episodes < kMinWeightEpisodes)
    throw ConfigError("config: weight_episodes must be at least " + std::to_string(kMinWeightEpisodes));
  if (!(weight_multiplier >= 0.0)) throw ConfigError("config: weight_multiplier must be non-negative");
  if (backend != "tabular" && backend != "mlp") throw ConfigError("config: backend must be 'tabular' or 'mlp'");
  try {
    formation_spec();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

EpisodeFactory TrainingSetup::episodes_factory() const {
  return pool_episode_factory(generate_map_pool(maps, size, density, seed), formation_spec());
}

TrainConfig TrainingSetup::train_config(int episode_count, std::uint64_t seed_offset) const {
  TrainConfig c;
  c.total_episodes = episode_count;
  c.learning_rate = learning_rate;
  c.seed = seed * 10 + seed_offset;
  c.backend = backend == "mlp" ? Backend::Mlp : Backend::Tabular;
  return c;
}

PipelineConfig TrainingSetup::pipeline_config() const {
  PipelineConfig p;
  p.path = train_config(episodes, 1);
  p.formation = train_config(episodes, 2);
  p.meta = train_config(meta_episodes, 3);
  p.weight_episodes = weight_episodes;
  p.weight_multiplier = weight_multiplier;
  p.formation_map_size = size;
  return p;
}

TrainingSetup parse_training_setup(std::istream& in) {
  static const std::set<std::string> keys{"size",          "density",         "agents",           "formation",
                                          "maps",          "episodes",        "meta_episodes",    "learning_rate",
                                          "weight_episodes", "weight_multiplier", "backend",        "seed"};
  TrainingSetup c;
  try {
    const json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [k, v] : j.items())
      if (!keys.count(k)) throw ConfigError("config: unknown field '" + k + "'");
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("size", c.size);
    get("density", c.density);
    get("agents", c.agents);
    get("formation", c.formation);
    get("maps", c.maps);
    get("episodes", c.episodes);
    get("meta_episodes", c.meta_episodes);
    get("learning_rate", c.learning_rate);
    get("weight_episodes", c.weight_episodes);
    get("weight_multiplier", c.weight_multiplier);
    get("backend", c.backend);
    get("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainingSetup load_training_setup(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_training_setup(in);
}

namespace {

struct MapOutcome {
  bool success = false;
  bool timeout = false;
  double makespan = 0.0;
  double loss = 0.0;
  double runtime = 0.0;
};

// Success first, then the lower scalarized cost: makespan plus w_f times the
// summed per-step formation loss.
double scalarized(const MapOutcome& o, double w_f, int map_size) {
  return o.makespan + w_f * o.loss * map_size * (o.makespan + 1.0);
}

MapOutcome run_ours(const PolicyBundle& bundle, const Instance& inst, const BenchmarkConfig& config,
                    std::uint64_t seed) {
  MapOutcome best;
  const int n = inst.map.size();
  for (int e = 0; e < config.episodes; ++e) {
    RolloutOptions ro;
    ro.warmup_steps = config.warmup_steps;
    ro.seed = seed + static_cast<std::uint64_t>(e);
    const auto ep = run_episode(bundle, inst, ro);
    MapOutcome o{ep.success, false, static_cast<double>(ep.steps), ep.mean_formation_loss / n, ep.decision_seconds};
    const bool take = e == 0 || (o.success != best.success ? o.success
                                                           : scalarized(o, bundle.w_f, n) < scalarized(best, bundle.w_f, n));
    if (take) best = o;
  }
  return best;
}

MapOutcome run_planner(const std::string& method, const Instance& inst, double weight, double time_limit) {
  MapOutcome o;
  PlannerOptions po;
  po.time_limit_seconds = time_limit;
  try {
    const Plan plan = method == "cbs" ? cbs(inst.map, inst.starts, inst.goals, po)
                                      : joint_astar(inst.map, inst.starts, inst.goals, inst.formation, weight, po);
    const auto m = evaluate_plan(plan, inst.formation, inst.map.size());
    o.success = true;
    o.makespan = m.makespan;
    o.loss = m.normalized_formation_loss;
    o.runtime = plan.runtime;
  } catch (const TimeoutError&) {
    o.timeout = true;
    o.runtime = time_limit;
  } catch (const std::exception&) {
    o.runtime = 0.0;
  }
  return o;
}

ResultRow aggregate(int size, int agents, double density, const std::string& method,
                    std::span<const MapOutcome> outcomes, double time_limit) {
  ResultRow r{size, agents, density, method, std::nullopt, std::nullopt, 0.0, std::nullopt};
  const bool timed_out = std::any_of(outcomes.begin(), outcomes.end(), [](const MapOutcome& o) { return o.timeout; });
  if (timed_out) {
    r.runtime = time_limit;
    return r;
  }
  int wins = 0;
  double makespan = 0.0;
  double loss = 0.0;
  double runtime = 0.0;
  for (const auto& o : outcomes) {
    runtime += o.runtime;
    if (!o.success) continue;
    ++wins;
    makespan += o.makespan;
    loss += o.loss;
  }
  r.success = static_cast<double>(wins) / static_cast<double>(outcomes.size());
  r.runtime = runtime / static_cast<double>(outcomes.size());
  if (wins > 0) {
    r.makespan = makespan / wins;
    r.formation_loss = loss / wins;
  }
  return r;
}

}  // namespace

BenchmarkReport run_benchmark(const BenchmarkConfig& config, const PolicyBundle* bundle) {
  config.validate();
  const bool want_ours = std::count(config.methods.begin(), config.methods.end(), "ours") > 0;
  if (want_ours && !bundle) throw ConfigError("config: method 'ours' needs a trained bundle");
  const double weight = config.weight >= 0.0 ? config.weight : (bundle ? bundle->w_f : 0.0);
  BenchmarkReport report;
  for (int size : config.sizes) {
    for (double density : config.densities) {
      for (int k : config.agents) {
        const FormationSpec formation = formation_for(config.formation, k);
        const std::uint64_t cell_seed = config.seed * 7919ULL + static_cast<std::uint64_t>(size) * 31ULL +
                                        static_cast<std::uint64_t>(std::llround(density * 1000.0)) * 17ULL +
                                        static_cast<std::uint64_t>(k);
        const auto pool = generate_map_pool(config.maps, size, density, cell_seed);
        const auto instances = pool_instances(pool, formation, cell_seed);
        for (const auto& method : config.methods) {
          std::vector<MapOutcome> outcomes;
          for (std::size_t i = 0; i < instances.size(); ++i) {
            if (method == "ours") {
              try {
                outcomes.push_back(run_ours(*bundle, instances[i], config, cell_seed + i * 101ULL));
              } catch (const std::exception&) {
                outcomes.push_back(MapOutcome{});
              }
            } else {
              outcomes.push_back(run_planner(method, instances[i], weight, config.time_limit));
              ++report.attempts;
              if (outcomes.back().timeout) ++report.timeouts;
            }
          }
          report.rows.push_back(aggregate(size, k, density, method, outcomes, config.time_limit));
        }
      }
    }
  }
  return report;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::setprecision(17) << *v;
  return s.str();
}

std::optional<double> parse_cell(const std::string& s) {
  if (s == "-") return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << "size,agents,density,method,makespan,formation_loss,success,runtime\n";
  for (const auto& r : rows)
    out << r.size << ',' << r.agents << ',' << cell(r.density) << ',' << r.method << ',' << cell(r.makespan) << ','
        << cell(r.formation_loss) << ',' << cell(r.success) << ',' << cell(r.runtime) << '\n';
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "size,agents,density,method,makespan,formation_loss,success,runtime")
    throw std::runtime_error("results.csv: unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream s(line);
    for (std::string part; std::getline(s, part, ',');) f.push_back(part);
    if (f.size() != 8) throw std::runtime_error("results.csv: expected 8 fields in '" + line + "'");
    ResultRow r;
    r.size = std::stoi(f[0]);
    r.agents = std::stoi(f[1]);
    r.density = std::stod(f[2]);
    r.method = f[3];
    r.makespan = parse_cell(f[4]);
    r.formation_loss = parse_cell(f[5]);
    r.success = std::stod(f[6]);
    r.runtime = parse_cell(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_table(std::ostream& out, std::span<const ResultRow> rows) {
  auto fmt = [](const std::optional<double>& v, int precision) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << *v;
    return s.str();
  };
  out << std::left << std::setw(6) << "size" << std::setw(6) << "k" << std::setw(8) << "d" << std::setw(13) << "method"
      << std::right << std::setw(10) << "makespan" << std::setw(10) << "loss" << std::setw(9) << "success"
      << std::setw(12) << "runtime(s)" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(6) << r.size << std::setw(6) << r.agents << std::setw(8) << fmt(r.density, 2)
        << std::setw(13) << r.method << std::right << std::setw(10) << fmt(r.makespan, 1) << std::setw(10)
        << fmt(r.formation_loss, 3) << std::setw(9) << fmt(r.success, 2) << std::setw(12) << fmt(r.runtime, 3)
        << '\n';
  }
}

void write_pareto_points(std::ostream& out, std::span<const ParetoPoint> points) {
  out << "weight,makespan,loss\n";
  out << std::setprecision(10);
  for (const auto& p : points)
    if (p.error.empty()) out << p.weight << ',' << p.makespan << ',' << p.formation_loss << '\n';
}

namespace {

std::ofstream open_for_write(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

}  // namespace

void emit_reports(const fs::path& dir, std::span<const ResultRow> rows, std::span<const ParetoPoint> pareto,
                  const std::map<std::string, std::vector<TrainingLogRow>>& training_logs) {
  if (rows.empty() && pareto.empty() && training_logs.empty())
    throw std::invalid_argument("emit_reports: nothing to write");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  if (!rows.empty()) {
    auto csv = open_for_write(dir / "results.csv");
    write_results_csv(csv, rows);
    auto txt = open_for_write(dir / "summary.txt");
    write_summary_table(txt, rows);
  }
  if (!pareto.empty()) {
    std::vector<ParetoPoint> learned;
    std::vector<ParetoPoint> exact;
    for (const auto& p : pareto) (p.source == "joint_astar" ? exact : learned).push_back(p);
    auto csv = open_for_write(dir / "pareto.csv");
    write_pareto_points(csv, learned.empty() ? exact : learned);
    if (!learned.empty() && !exact.empty()) {
      auto ex = open_for_write(dir / "pareto_exact.csv");
      write_pareto_points(ex, exact);
    }
  }
  for (const auto& [name, log] : training_logs) {
    auto csv = open_for_write(dir / ("training_" + name + ".csv"));
    write_training_log(csv, log);
  }
}

}  // namespace maif
