#include "maif/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace maif {

int default_episode_limit(const GridMap& map) { return 3 * map.size(); }

Instance make_instance(GridMap map, FormationSpec formation, std::vector<Cell> starts, std::vector<Cell> goals,
                       int episode_limit) {
  if (starts.size() != goals.size()) throw std::invalid_argument("instance: starts and goals differ in length");
  if (!formation.offsets.empty() && formation.offsets.size() != starts.size())
    throw std::invalid_argument("instance: formation size does not match agent count");
  Instance inst;
  inst.cost_maps.reserve(goals.size());
  for (const Cell& g : goals) inst.cost_maps.push_back(compute_cost_map(map, g));
  for (const Cell& s : starts)
    if (!map.is_free(s)) throw std::invalid_argument("instance: start on obstacle or off map");
  inst.episode_limit = episode_limit < 0 ? default_episode_limit(map) : episode_limit;
  inst.map = std::move(map);
  inst.formation = std::move(formation);
  inst.starts = std::move(starts);
  inst.goals = std::move(goals);
  return inst;
}

namespace {

std::vector<Cell> normalized_offsets(const FormationSpec& f) {
  int min_x = f.offsets.front().x;
  int min_y = f.offsets.front().y;
  for (const Cell& c : f.offsets) {
    min_x = std::min(min_x, c.x);
    min_y = std::min(min_y, c.y);
  }
  std::vector<Cell> out;
  for (const Cell& c : f.offsets) out.push_back({c.x - min_x, c.y - min_y});
  return out;
}

std::vector<Cell> translate(const std::vector<Cell>& offsets, Cell anchor) {
  std::vector<Cell> out;
  out.reserve(offsets.size());
  for (const Cell& c : offsets) out.push_back({anchor.x + c.x, anchor.y + c.y});
  return out;
}

bool all_free(const GridMap& map, const std::vector<Cell>& cells) {
  return std::all_of(cells.begin(), cells.end(), [&](Cell c) { return map.is_free(c); });
}

Cell extent(const std::vector<Cell>& offsets) {
  Cell e{0, 0};
  for (const Cell& c : offsets) e = {std::max(e.x, c.x), std::max(e.y, c.y)};
  return e;
}

}  // namespace

Instance place_formation_instance(GridMap map, FormationSpec formation, std::uint64_t seed) {
  if (formation.offsets.empty()) throw std::invalid_argument("instance: empty formation");
  const auto offsets = normalized_offsets(formation);
  const Cell ext = extent(offsets);

  // Goal anchor closest to centering the formation's bounding box on the goal region.
  const Rect& gr = map.goal_region;
  const double ideal_x = (gr.x0 + gr.x1 - ext.x) / 2.0;
  const double ideal_y = (gr.y0 + gr.y1 - ext.y) / 2.0;
  std::vector<Cell> anchors;
  for (int y = 0; y + ext.y < map.height(); ++y)
    for (int x = 0; x + ext.x < map.width(); ++x) anchors.push_back({x, y});
  std::stable_sort(anchors.begin(), anchors.end(), [&](Cell a, Cell b) {
    const double da = std::hypot(a.x - ideal_x, a.y - ideal_y);
    const double db = std::hypot(b.x - ideal_x, b.y - ideal_y);
    return da < db;
  });
  std::optional<std::vector<Cell>> goals;
  for (Cell a : anchors) {
    auto cells = translate(offsets, a);
    if (all_free(map, cells)) {
      goals = std::move(cells);
      break;
    }
  }
  if (!goals) throw GenerationError("instance: formation does not fit anywhere on the map");

  std::vector<CostMap> cost_maps;
  for (const Cell& g : *goals) cost_maps.push_back(compute_cost_map(map, g));

  const Rect& sr = map.start_region;
  std::vector<std::vector<Cell>> candidates;
  for (int y = sr.y0; y + ext.y <= sr.y1; ++y) {
    for (int x = sr.x0; x + ext.x <= sr.x1; ++x) {
      auto cells = translate(offsets, {x, y});
      if (!all_free(map, cells)) continue;
      bool reachable = true;
      for (std::size_t i = 0; i < cells.size(); ++i) reachable = reachable && cost_maps[i].reachable(cells[i]);
      if (reachable) candidates.push_back(std::move(cells));
    }
  }
  if (candidates.empty()) throw GenerationError("instance: no start placement of the formation reaches the goals");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  auto starts = candidates[pick(rng)];

  Instance inst;
  inst.episode_limit = default_episode_limit(map);
  inst.map = std::move(map);
  inst.formation = std::move(formation);
  inst.starts = std::move(starts);
  inst.goals = std::move(*goals);
  inst.cost_maps = std::move(cost_maps);
  return inst;
}

bool WorldState::all_at_goal() const {
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (positions[i] != goals[i]) return false;
  return true;
}

WorldState initial_state(const Instance& inst) {
  WorldState w;
  w.positions = inst.starts;
  w.goals = inst.goals;
  w.t = 0;
  w.done_flags.resize(inst.starts.size());
  for (std::size_t i = 0; i < inst.starts.size(); ++i) w.done_flags[i] = inst.starts[i] == inst.goals[i];
  return w;
}

int Observation::agent_at(int dx, int dy) const {
  const float v = position[slot(dx, dy)];
  if (v <= 0.0f) return -1;
  return static_cast<int>(std::lround(v * static_cast<float>(agent_count + 1))) - 1;
}

Observation observe(const Instance& inst, const WorldState& world, int agent, const PriorActions& prior) {
  const int k = world.agent_count();
  if (agent < 0 || agent >= k) throw std::out_of_range("observe: agent id out of range");
  Observation o;
  o.agent = agent;
  o.agent_count = k;
  o.fov = inst.fov;
  const int r = o.radius();
  const std::size_t n = static_cast<std::size_t>(o.fov) * o.fov;
  o.obstacle.assign(n, 0.0f);
  o.position.assign(n, 0.0f);
  o.cost.assign(n, 0.0f);
  o.formation.assign(n, 0.0f);
  o.prior = prior;

  const Cell me = world.positions[agent];
  const CostMap& cm = inst.cost_maps[agent];
  const double scale = 2.0 * inst.map.size();
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const Cell c{me.x + dx, me.y + dy};
      const std::size_t s = o.slot(dx, dy);
      if (!inst.map.in_bounds(c)) {
        o.obstacle[s] = 1.0f;
        o.cost[s] = 1.0f;
        continue;
      }
      o.obstacle[s] = inst.map.is_obstacle(c) ? 1.0f : 0.0f;
      const int d = cm.at(c);
      o.cost[s] = static_cast<float>((d == CostMap::kUnreachable ? scale : std::min<double>(d, scale)) / scale);
    }
  }
  for (int j = 0; j < k; ++j) {
    const int dx = world.positions[j].x - me.x;
    const int dy = world.positions[j].y - me.y;
    if (std::abs(dx) <= r && std::abs(dy) <= r)
      o.position[o.slot(dx, dy)] = static_cast<float>(j + 1) / static_cast<float>(k + 1);
  }
  if (static_cast<int>(inst.formation.offsets.size()) == k) {
    const Cell own = inst.formation.offsets[agent];
    for (const Cell& off : inst.formation.offsets) {
      const int dx = off.x - own.x;
      const int dy = off.y - own.y;
      if (std::abs(dx) <= r && std::abs(dy) <= r) o.formation[o.slot(dx, dy)] = 1.0f;
    }
  }
  return o;
}

ActionSet valid_actions(const GridMap& map, Cell at) {
  ActionSet set = ActionSet::only(Action::Stay);
  for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right})
    if (map.is_free(apply(at, a))) set.insert(a);
  return set;
}

ActionSet valid_actions(const GridMap& map, const WorldState& world, int agent) {
  return valid_actions(map, world.positions.at(agent));
}

std::vector<Conflict> find_conflicts(std::span<const Cell> from, std::span<const Cell> to) {
  std::vector<Conflict> out;
  const std::size_t k = to.size();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      if (to[a] == to[b]) {
        out.push_back({ConflictType::Vertex, static_cast<int>(a), static_cast<int>(b), to[a], to[a]});
      } else if (to[a] == from[b] && to[b] == from[a] && from[a] != from[b]) {
        out.push_back({ConflictType::Swap, static_cast<int>(a), static_cast<int>(b), from[a], from[b]});
      }
    }
  }
  return out;
}

StepResult step(const Instance& inst, const WorldState& world, std::span<const Action> joint, double w_f) {
  const int k = world.agent_count();
  if (static_cast<int>(joint.size()) != k) throw std::invalid_argument("step: joint action length != agent count");

  std::vector<Cell> intent(k);
  std::vector<bool> voluntary_stay(k, false);
  for (int i = 0; i < k; ++i) {
    const Cell target = apply(world.positions[i], joint[i]);
    const bool ok = joint[i] != Action::Stay && inst.map.is_free(target);
    intent[i] = ok ? target : world.positions[i];
    voluntary_stay[i] = !ok;
  }

  StepResult res;
  res.info.collided.assign(k, false);
  res.info.toward_goal.assign(k, false);
  std::vector<Cell> target = intent;
  for (;;) {
    const auto conflicts = find_conflicts(world.positions, target);
    if (conflicts.empty()) break;
    for (const Conflict& c : conflicts) {
      for (int who : {c.agent_a, c.agent_b}) {
        res.info.collided[who] = true;
        target[who] = world.positions[who];
      }
    }
  }

  res.next = world;
  res.next.positions = target;
  res.next.t = world.t + 1;
  for (int i = 0; i < k; ++i) res.next.done_flags[i] = target[i] == world.goals[i];
  res.info.all_at_goal = res.next.all_at_goal();
  res.info.formation_loss =
      static_cast<int>(inst.formation.offsets.size()) == k ? formation_loss(target, inst.formation) : 0.0;
  const double lf = res.info.formation_loss;
  const bool keep = lf < kKeepFormationEpsilon && !world.keep_bonus_paid;
  res.info.keep_bonus = keep;
  res.next.keep_bonus_paid = world.keep_bonus_paid || keep;

  res.rewards.assign(k, RewardVector{});
  for (int i = 0; i < k; ++i) {
    RewardVector& r = res.rewards[i];
    if (res.info.collided[i]) {
      ++res.info.collisions;
      r.path += reward::kCollision;
      r.formation += reward::kCollision;
      r.meta += reward::kCollision;
    } else if (voluntary_stay[i]) {
      r.path += reward::kNoMovement;
      r.formation += reward::kNoMovement;
    } else if (inst.cost_maps[i].at(target[i]) < inst.cost_maps[i].at(world.positions[i])) {
      res.info.toward_goal[i] = true;
      r.path += reward::kTowardGoal;
      r.meta += reward::kTowardGoal;
    }
    if (res.info.all_at_goal) r.path += reward::kFinish;
    r.formation -= lf;
    if (keep) r.formation += reward::kKeepFormation;
    r.meta -= w_f * lf;
  }
  res.done = res.info.all_at_goal || res.next.t >= inst.episode_limit;
  return res;
}

bool fov_connected(std::span<const Cell> positions, int fov) {
  const int r = fov / 2;
  const std::size_t k = positions.size();
  if (k <= 1) return true;
  std::vector<bool> seen(k, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t a = stack.back();
    stack.pop_back();
    for (std::size_t b = 0; b < k; ++b) {
      if (seen[b]) continue;
      if (std::abs(positions[a].x - positions[b].x) <= r && std::abs(positions[a].y - positions[b].y) <= r) {
        seen[b] = true;
        stack.push_back(b);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
}

std::vector<Cell> spawn_fov_connected(const GridMap& map, int agents, int fov, std::mt19937_64& rng) {
  std::vector<Cell> free_cells;
  for (int i = 0; i < map.cell_count(); ++i)
    if (map.is_free(map.cell_at(i))) free_cells.push_back(map.cell_at(i));
  if (static_cast<int>(free_cells.size()) < agents) throw GenerationError("spawn: not enough free cells");
  std::uniform_int_distribution<std::size_t> pick(0, free_cells.size() - 1);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::vector<Cell> cells;
    while (static_cast<int>(cells.size()) < agents) {
      const Cell c = free_cells[pick(rng)];
      if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
    }
    if (fov_connected(cells, fov)) return cells;
  }
  throw GenerationError("spawn: no FOV-connected placement found");
}

Instance make_formation_training_instance(const GridMap& map, const FormationSpec& formation, std::mt19937_64& rng) {
  const int k = formation.agent_count();
  const auto offsets = normalized_offsets(formation);
  const Cell ext = extent(offsets);
  std::vector<Cell> starts;
  // A quarter of the episodes start already in formation so that holding it gets trained.
  if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
    for (int attempt = 0; attempt < 100 && starts.empty(); ++attempt) {
      const Cell anchor{static_cast<int>(rng() % static_cast<std::uint64_t>(map.width() - ext.x)),
                        static_cast<int>(rng() % static_cast<std::uint64_t>(map.height() - ext.y))};
      auto cells = translate(offsets, anchor);
      if (all_free(map, cells) && fov_connected(cells, kDefaultFov)) starts = std::move(cells);
    }
  }
  if (starts.empty()) starts = spawn_fov_connected(map, k, kDefaultFov, rng);
  const Cell ideal{(map.width() - 1 - ext.x) / 2, (map.height() - 1 - ext.y) / 2};
  std::optional<std::vector<Cell>> goals;
  for (int radius = 0; radius < map.size() && !goals; ++radius) {
    for (int dy = -radius; dy <= radius && !goals; ++dy) {
      for (int dx = -radius; dx <= radius && !goals; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != radius) continue;
        auto cells = translate(offsets, {ideal.x + dx, ideal.y + dy});
        if (all_free(map, cells)) goals = std::move(cells);
      }
    }
  }
  if (!goals) throw GenerationError("formation env: formation does not fit on the map");
  return make_instance(map, formation, std::move(starts), std::move(*goals));
}

WorldState random_warmup(const Instance& inst, WorldState world, int steps, std::mt19937_64& rng) {
  std::vector<Action> joint(world.agent_count());
  for (int s = 0; s < steps && world.t < inst.episode_limit && !world.all_at_goal(); ++s) {
    for (int i = 0; i < world.agent_count(); ++i) {
      const auto options = valid_actions(inst.map, world, i).to_vector();
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      joint[i] = options[pick(rng)];
    }
    world = step(inst, world, joint, 0.0).next;
  }
  return world;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MapError("cannot open scenario file " + path);
  const auto j = nlohmann::json::parse(in);
  Scenario s;
  s.map_path = j.at("map").get<std::string>();
  s.agents = j.value("agents", 3);
  s.seed = j.value("seed", std::uint64_t{0});
  const auto& f = j.at("formation");
  if (f.is_string()) {
    s.formation = formation_by_name(f.get<std::string>(), s.agents);
  } else {
    s.formation.name = "custom";
    for (const auto& p : f) s.formation.offsets.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    if (s.formation.agent_count() != s.agents)
      throw std::invalid_argument("scenario: formation offsets do not match agent count");
  }
  return s;
}

void save_scenario(const std::string& path, const Scenario& s) {
  nlohmann::json j;
  j["map"] = s.map_path;
  j["agents"] = s.agents;
  j["seed"] = s.seed;
  auto offsets = nlohmann::json::array();
  for (const Cell& c : s.formation.offsets) offsets.push_back({c.x, c.y});
  j["formation"] = offsets;
  std::ofstream out(path);
  if (!out) throw MapError("cannot write scenario file " + path);
  out << j.dump(2) << '\n';
}

Instance instantiate(const Scenario& scenario) {
  return place_formation_instance(load_map(scenario.map_path), scenario.formation, scenario.seed);
}

}  // namespace maif
