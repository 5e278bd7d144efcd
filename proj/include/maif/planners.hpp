#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "maif/env.hpp"
#include "maif/formation.hpp"
#include "maif/grid.hpp"

namespace maif {

class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeoutError : public PlannerError {
 public:
  using PlannerError::PlannerError;
};

class InfeasibleError : public PlannerError {
 public:
  using PlannerError::PlannerError;
};

class PlanValidationError : public PlannerError {
 public:
  using PlannerError::PlannerError;
};

inline constexpr double kDefaultTimeLimitSeconds = 300.0;

struct PlannerOptions {
  double time_limit_seconds = kDefaultTimeLimitSeconds;
  // Space-time search horizon; < 0 selects 3 x map size.
  int horizon = -1;
  // When set, the returned plan's total_formation_loss is filled in.
  const FormationSpec* formation = nullptr;
};

// paths[i][t] is agent i's cell at timestep t; all paths have makespan + 1 cells.
struct Plan {
  std::vector<std::vector<Cell>> paths;
  int makespan = 0;
  // Sum over every timestep 0..makespan of the formation loss.
  double total_formation_loss = 0.0;
  double runtime = 0.0;

  int agent_count() const { return static_cast<int>(paths.size()); }
  std::vector<Cell> positions_at(int t) const;
};

// Pads paths with their final cell to a common length and sets makespan.
Plan make_plan(std::vector<std::vector<Cell>> paths);

double plan_formation_loss(const Plan& plan, const FormationSpec& formation);

struct TimedConflict {
  Conflict conflict;
  int t = 0;  // timestep at which the agents collide
};

// First vertex/swap conflict, using the simulator's conflict checker.
std::optional<TimedConflict> first_conflict(const Plan& plan);

// Throws PlanValidationError on unequal lengths, non-adjacent moves,
// obstacle cells or conflicts.
void validate_plan(const Plan& plan, const GridMap* map = nullptr);

/// Conflict-Based Search minimizing makespan, ties broken by sum of costs.
///
/// The high level expands constraint-tree nodes in (makespan, sum of costs)
/// order; the low level is a space-time A* over (cell, t) bounded by the
/// horizon. Vertex and swap conflicts are both resolved by branching.
Plan cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
         const PlannerOptions& opts = {});

/// A* over joint configurations of up to four agents, minimizing
/// sum_t [1 + weight * L_f(positions_t, formation)] over successor
/// configurations. Heuristic: max over agents of the BFS distance to goal.
Plan joint_astar(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
                 const FormationSpec& formation, double weight, const PlannerOptions& opts = {});

inline constexpr int kMaxJointAgents = 4;

struct PlanMetrics {
  int makespan = 0;
  double normalized_formation_loss = 0.0;  // mean per-step loss / map size
  bool success = false;
  double runtime = 0.0;
};

PlanMetrics evaluate_plan(const Plan& plan, const FormationSpec& formation, int map_size);

// One line per timestep, space-separated "x,y" per agent.
void write_plan(std::ostream& out, const Plan& plan);
Plan read_plan(std::istream& in);

}  // namespace maif
