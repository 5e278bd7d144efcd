#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "maif/formation.hpp"
#include "maif/grid.hpp"

namespace maif {

inline constexpr double kKeepFormationEpsilon = 1e-6;

namespace reward {
inline constexpr double kCollision = -50.0;
inline constexpr double kTowardGoal = 1.0;
inline constexpr double kNoMovement = -0.25;
inline constexpr double kFinish = 100.0;
inline constexpr double kKeepFormation = 100.0;
}  // namespace reward

// Everything static about one episode: map, formation, start/goal cells and
// the per-agent cost maps derived from the goals.
struct Instance {
  GridMap map;
  FormationSpec formation;
  std::vector<Cell> starts;
  std::vector<Cell> goals;
  std::vector<CostMap> cost_maps;
  int episode_limit = 0;
  int fov = kDefaultFov;

  int agent_count() const { return static_cast<int>(starts.size()); }
};

int default_episode_limit(const GridMap& map);

// Computes cost maps; episode_limit < 0 selects 3 x map size.
Instance make_instance(GridMap map, FormationSpec formation, std::vector<Cell> starts, std::vector<Cell> goals,
                       int episode_limit = -1);

// Goals: formation anchored at the goal region center. Starts: formation at a
// seeded random anchor inside the start region. Throws GenerationError if the
// formation cannot be placed with every goal reachable.
Instance place_formation_instance(GridMap map, FormationSpec formation, std::uint64_t seed);

struct WorldState {
  std::vector<Cell> positions;
  std::vector<Cell> goals;
  int t = 0;
  std::vector<bool> done_flags;
  bool keep_bonus_paid = false;

  int agent_count() const { return static_cast<int>(positions.size()); }
  bool all_at_goal() const;
};

WorldState initial_state(const Instance& inst);

struct PriorAction {
  int agent = 0;
  Action action = Action::Stay;
  friend bool operator==(const PriorAction&, const PriorAction&) = default;
};

// Actions already committed this timestep, in decision order.
using PriorActions = std::vector<PriorAction>;

struct Observation {
  int agent = 0;
  int agent_count = 0;
  int fov = kDefaultFov;
  std::vector<float> obstacle;
  std::vector<float> position;
  std::vector<float> cost;
  std::vector<float> formation;
  PriorActions prior;

  int radius() const { return fov / 2; }
  // (dx, dy) relative to the observing agent, both in [-radius, radius].
  std::size_t slot(int dx, int dy) const {
    return static_cast<std::size_t>((dy + radius()) * fov + (dx + radius()));
  }
  // Agent index encoded in the position channel at an offset, or -1.
  int agent_at(int dx, int dy) const;
};

Observation observe(const Instance& inst, const WorldState& world, int agent, const PriorActions& prior = {});

// Moves into obstacles or off the map are excluded; Stay is always present.
ActionSet valid_actions(const GridMap& map, const WorldState& world, int agent);
ActionSet valid_actions(const GridMap& map, Cell at);

enum class ConflictType { Vertex, Swap };

struct Conflict {
  ConflictType type = ConflictType::Vertex;
  int agent_a = 0;
  int agent_b = 0;
  Cell cell_a;  // vertex: shared cell; swap: a's origin (= b's target)
  Cell cell_b;  // swap: b's origin
};

// Vertex and swap conflicts of the transition from -> to.
std::vector<Conflict> find_conflicts(std::span<const Cell> from, std::span<const Cell> to);

struct RewardVector {
  double path = 0.0;
  double formation = 0.0;
  double meta = 0.0;
};

struct StepInfo {
  std::vector<bool> collided;
  std::vector<bool> toward_goal;
  int collisions = 0;  // number of conflicting agents
  double formation_loss = 0.0;
  bool all_at_goal = false;
  bool keep_bonus = false;
};

struct StepResult {
  WorldState next;
  std::vector<RewardVector> rewards;
  bool done = false;
  StepInfo info;
};

/// Simultaneous transition. Conflicting agents (vertex or swap, resolved
/// repeatedly so that bounced agents can trigger further conflicts) keep
/// their cell and take the collision penalty in all three columns.
StepResult step(const Instance& inst, const WorldState& world, std::span<const Action> joint, double w_f);

// Visibility graph over agents (edge when within each other's FOV square) is connected.
bool fov_connected(std::span<const Cell> positions, int fov);

// Uniform free-cell spawn, resampled until FOV-connected.
std::vector<Cell> spawn_fov_connected(const GridMap& map, int agents, int fov, std::mt19937_64& rng);

// Formation-training episode: FOV-connected random spawn (in formation for a
// quarter of the draws); goals hold the formation near the map center.
Instance make_formation_training_instance(const GridMap& map, const FormationSpec& formation, std::mt19937_64& rng);

// Applies `steps` joint actions drawn uniformly from each agent's valid set.
WorldState random_warmup(const Instance& inst, WorldState world, int steps, std::mt19937_64& rng);

// Scenario file (JSON): {"map": path, "agents": k, "formation": name or [[x,y],...], "seed": n}.
struct Scenario {
  std::string map_path;
  int agents = 3;
  FormationSpec formation;
  std::uint64_t seed = 0;
};

Scenario load_scenario(const std::string& path);
void save_scenario(const std::string& path, const Scenario& scenario);
Instance instantiate(const Scenario& scenario);

}  // namespace maif
