#include <chrono>
#include <queue>
#include <unordered_set>

#include "maif/planners.hpp"

namespace maif {
namespace {

using Clock = std::chrono::steady_clock;

struct Constraint {
  int agent = 0;
  bool is_edge = false;
  int from = 0;  // cell index (edge constraints only)
  int to = 0;    // cell index; the forbidden vertex for vertex constraints
  int t = 0;
};

std::uint64_t vertex_key(int cell, int t) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 32) | static_cast<std::uint32_t>(cell);
}

std::uint64_t edge_key(int from, int to, int t) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 42) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(from)) << 21) ^ static_cast<std::uint32_t>(to);
}

struct AgentConstraints {
  std::unordered_set<std::uint64_t> vertex;
  std::unordered_set<std::uint64_t> edge;
  int last_goal_t = -1;
};

AgentConstraints gather(const std::vector<Constraint>& all, int agent, int goal_cell) {
  AgentConstraints out;
  for (const Constraint& c : all) {
    if (c.agent != agent) continue;
    if (c.is_edge) {
      out.edge.insert(edge_key(c.from, c.to, c.t));
    } else {
      out.vertex.insert(vertex_key(c.to, c.t));
      if (c.to == goal_cell) out.last_goal_t = std::max(out.last_goal_t, c.t);
    }
  }
  return out;
}

struct LowNode {
  int f;
  int h;
  std::uint64_t seq;
  int cell;
  int t;
  int parent;  // index into the node arena
};

struct LowOrder {
  bool operator()(const LowNode& a, const LowNode& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.seq > b.seq;
  }
};

// Space-time A*; empty result when no path exists within the horizon.
std::vector<Cell> space_time_astar(const GridMap& map, Cell start, const CostMap& dist, const AgentConstraints& cons,
                                   int horizon) {
  const int goal = map.index(dist.goal());
  if (!dist.reachable(start)) return {};
  std::vector<LowNode> arena;
  std::priority_queue<LowNode, std::vector<LowNode>, LowOrder> open;
  std::unordered_set<std::uint64_t> closed;
  std::uint64_t seq = 0;
  const int h0 = dist.at(start);
  open.push({h0, h0, seq++, map.index(start), 0, -1});
  while (!open.empty()) {
    LowNode n = open.top();
    open.pop();
    if (!closed.insert(vertex_key(n.cell, n.t)).second) continue;
    const int self = static_cast<int>(arena.size());
    arena.push_back(n);
    if (n.cell == goal && n.t > cons.last_goal_t) {
      std::vector<Cell> path(static_cast<std::size_t>(n.t) + 1);
      for (int i = self; i >= 0; i = arena[i].parent) path[arena[i].t] = map.cell_at(arena[i].cell);
      return path;
    }
    if (n.t >= horizon) continue;
    const Cell here = map.cell_at(n.cell);
    for (Action a : kAllActions) {
      const Cell next = apply(here, a);
      if (!map.is_free(next)) continue;
      const int nc = map.index(next);
      const int nt = n.t + 1;
      if (cons.vertex.count(vertex_key(nc, nt)) || cons.edge.count(edge_key(n.cell, nc, nt))) continue;
      if (closed.count(vertex_key(nc, nt))) continue;
      const int h = dist.at(next);
      open.push({nt + h, h, seq++, nc, nt, self});
    }
  }
  return {};
}

struct HighNode {
  std::vector<Constraint> constraints;
  std::vector<std::vector<Cell>> paths;
  int makespan = 0;
  int soc = 0;
};

void score(HighNode& n) {
  n.makespan = 0;
  n.soc = 0;
  for (const auto& p : n.paths) {
    const int len = static_cast<int>(p.size()) - 1;
    n.makespan = std::max(n.makespan, len);
    n.soc += len;
  }
}

Cell at_time(const std::vector<Cell>& path, int t) {
  return path[std::min<std::size_t>(static_cast<std::size_t>(t), path.size() - 1)];
}

std::optional<TimedConflict> earliest_conflict(const std::vector<std::vector<Cell>>& paths, int makespan) {
  const std::size_t k = paths.size();
  std::vector<Cell> from(k);
  std::vector<Cell> to(k);
  for (int t = 1; t <= makespan; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      from[i] = at_time(paths[i], t - 1);
      to[i] = at_time(paths[i], t);
    }
    auto found = find_conflicts(from, to);
    if (!found.empty()) return TimedConflict{found.front(), t};
  }
  return std::nullopt;
}

}  // namespace

Plan cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals, const PlannerOptions& opts) {
  const auto began = Clock::now();
  const int k = static_cast<int>(starts.size());
  if (static_cast<int>(goals.size()) != k) throw std::invalid_argument("cbs: starts and goals differ in length");
  const int horizon = opts.horizon < 0 ? 3 * map.size() : opts.horizon;

  std::vector<CostMap> dist;
  for (int i = 0; i < k; ++i) {
    if (!map.is_free(starts[i])) throw std::invalid_argument("cbs: start is not a free cell");
    dist.push_back(compute_cost_map(map, goals[i]));
    if (!dist.back().reachable(starts[i])) throw InfeasibleError("cbs: goal unreachable for agent " + std::to_string(i));
  }
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - began).count(); };

  auto plan_agent = [&](const std::vector<Constraint>& cons, int i) {
    return space_time_astar(map, starts[i], dist[i], gather(cons, i, map.index(goals[i])), horizon);
  };

  HighNode root;
  for (int i = 0; i < k; ++i) {
    root.paths.push_back(plan_agent(root.constraints, i));
    if (root.paths.back().empty()) throw InfeasibleError("cbs: no path within the horizon");
  }
  score(root);

  struct Entry {
    int makespan;
    int soc;
    std::uint64_t seq;
    std::size_t node;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.makespan != b.makespan) return a.makespan > b.makespan;
    if (a.soc != b.soc) return a.soc > b.soc;
    return a.seq > b.seq;
  };
  std::vector<HighNode> nodes;
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  std::uint64_t seq = 0;
  nodes.push_back(std::move(root));
  open.push({nodes[0].makespan, nodes[0].soc, seq++, 0});

  while (!open.empty()) {
    if (elapsed() > opts.time_limit_seconds) throw TimeoutError("cbs: time limit exceeded");
    const std::size_t id = open.top().node;
    open.pop();
    const auto conflict = earliest_conflict(nodes[id].paths, nodes[id].makespan);
    if (!conflict) {
      Plan plan = make_plan(nodes[id].paths);
      if (opts.formation) plan.total_formation_loss = plan_formation_loss(plan, *opts.formation);
      plan.runtime = elapsed();
      return plan;
    }
    const Conflict& c = conflict->conflict;
    std::array<Constraint, 2> branches;
    if (c.type == ConflictType::Vertex) {
      branches[0] = {c.agent_a, false, 0, map.index(c.cell_a), conflict->t};
      branches[1] = {c.agent_b, false, 0, map.index(c.cell_a), conflict->t};
    } else {
      // a moves cell_a -> cell_b, b moves cell_b -> cell_a.
      branches[0] = {c.agent_a, true, map.index(c.cell_a), map.index(c.cell_b), conflict->t};
      branches[1] = {c.agent_b, true, map.index(c.cell_b), map.index(c.cell_a), conflict->t};
    }
    for (const Constraint& extra : branches) {
      HighNode child;
      child.constraints = nodes[id].constraints;
      child.constraints.push_back(extra);
      child.paths = nodes[id].paths;
      child.paths[extra.agent] = plan_agent(child.constraints, extra.agent);
      if (child.paths[extra.agent].empty()) continue;
      score(child);
      nodes.push_back(std::move(child));
      open.push({nodes.back().makespan, nodes.back().soc, seq++, nodes.size() - 1});
    }
  }
  throw InfeasibleError("cbs: constraint tree exhausted");
}

}  // namespace maif
