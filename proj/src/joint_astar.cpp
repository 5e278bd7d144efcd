#include <algorithm>
#include <chrono>
#include <queue>
#include <unordered_map>

#include "maif/planners.hpp"

namespace maif {
namespace {

using Clock = std::chrono::steady_clock;
using JointKey = std::array<std::int32_t, kMaxJointAgents>;

struct JointKeyHash {
  std::size_t operator()(const JointKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int32_t v : k) {
      h ^= static_cast<std::uint32_t>(v);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct Record {
  double g = 0.0;
  JointKey parent{};
  bool has_parent = false;
  bool closed = false;
};

struct OpenEntry {
  double f;
  int h;
  std::uint64_t seq;
  double g;
  JointKey key;
};

struct OpenOrder {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.seq > b.seq;
  }
};

}  // namespace

Plan joint_astar(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
                 const FormationSpec& formation, double weight, const PlannerOptions& opts) {
  const auto began = Clock::now();
  const int k = static_cast<int>(starts.size());
  if (k < 1 || k > kMaxJointAgents) throw std::invalid_argument("joint_astar: agent count must be in [1, 4]");
  if (static_cast<int>(goals.size()) != k) throw std::invalid_argument("joint_astar: starts and goals differ in length");
  if (weight < 0.0) throw std::invalid_argument("joint_astar: weight must be non-negative");
  const bool uses_formation = weight > 0.0;
  if (uses_formation && formation.agent_count() != k)
    throw std::invalid_argument("joint_astar: formation size does not match agent count");

  std::vector<CostMap> dist;
  for (int i = 0; i < k; ++i) {
    if (!map.is_free(starts[i])) throw std::invalid_argument("joint_astar: start is not a free cell");
    dist.push_back(compute_cost_map(map, goals[i]));
    if (!dist.back().reachable(starts[i]))
      throw InfeasibleError("joint_astar: goal unreachable for agent " + std::to_string(i));
  }

  auto encode = [&](std::span<const Cell> cells) {
    JointKey key;
    key.fill(-1);
    for (int i = 0; i < k; ++i) key[i] = map.index(cells[i]);
    return key;
  };
  auto heuristic = [&](const JointKey& key) {
    int h = 0;
    for (int i = 0; i < k; ++i) h = std::max(h, dist[i].at(map.cell_at(key[i])));
    return h;
  };
  const JointKey goal_key = encode(goals);
  const Positions desired = formation.points();
  Positions scratch(static_cast<std::size_t>(k));
  auto step_cost = [&](const JointKey& key) {
    if (!uses_formation) return 1.0;
    for (int i = 0; i < k; ++i) {
      const Cell c = map.cell_at(key[i]);
      scratch[i] = {static_cast<double>(c.x), static_cast<double>(c.y)};
    }
    return 1.0 + weight * formation_loss(scratch, desired);
  };

  std::unordered_map<JointKey, Record, JointKeyHash> records;
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, OpenOrder> open;
  std::uint64_t seq = 0;
  const JointKey start_key = encode(starts);
  records[start_key] = Record{};
  const int h0 = heuristic(start_key);
  open.push({static_cast<double>(h0), h0, seq++, 0.0, start_key});

  std::array<Cell, kMaxJointAgents> from{};
  std::array<Cell, kMaxJointAgents> to{};
  std::array<std::array<Cell, kActionCount>, kMaxJointAgents> moves{};
  std::array<int, kMaxJointAgents> move_count{};
  std::uint64_t expansions = 0;

  while (!open.empty()) {
    if ((++expansions & 255U) == 0 &&
        std::chrono::duration<double>(Clock::now() - began).count() > opts.time_limit_seconds)
      throw TimeoutError("joint_astar: time limit exceeded");
    const OpenEntry top = open.top();
    open.pop();
    Record& rec = records[top.key];
    if (rec.closed || top.g > rec.g) continue;
    rec.closed = true;

    if (top.key == goal_key) {
      std::vector<JointKey> chain{top.key};
      for (JointKey cur = top.key; records[cur].has_parent;) {
        cur = records[cur].parent;
        chain.push_back(cur);
      }
      std::reverse(chain.begin(), chain.end());
      std::vector<std::vector<Cell>> paths(static_cast<std::size_t>(k));
      for (const JointKey& key : chain)
        for (int i = 0; i < k; ++i) paths[i].push_back(map.cell_at(key[i]));
      Plan plan = make_plan(std::move(paths));
      if (formation.agent_count() == k) plan.total_formation_loss = plan_formation_loss(plan, formation);
      plan.runtime = std::chrono::duration<double>(Clock::now() - began).count();
      return plan;
    }

    for (int i = 0; i < k; ++i) {
      from[i] = map.cell_at(top.key[i]);
      move_count[i] = 0;
      for (Action a : kAllActions) {
        const Cell n = apply(from[i], a);
        if (map.is_free(n)) moves[i][move_count[i]++] = n;
      }
    }
    // Odometer over the product of per-agent moves, in lexicographic action order.
    std::array<int, kMaxJointAgents> digit{};
    for (bool more = true; more;) {
      bool ok = true;
      for (int i = 0; i < k && ok; ++i) {
        to[i] = moves[i][digit[i]];
        for (int j = 0; j < i && ok; ++j) {
          if (to[i] == to[j]) ok = false;
          else if (to[i] == from[j] && to[j] == from[i]) ok = false;
        }
      }
      if (ok) {
        JointKey key;
        key.fill(-1);
        for (int i = 0; i < k; ++i) key[i] = map.index(to[i]);
        auto [it, inserted] = records.try_emplace(key);
        const double g = top.g + step_cost(key);
        if (!it->second.closed && (inserted || g < it->second.g)) {
          it->second.g = g;
          it->second.parent = top.key;
          it->second.has_parent = true;
          const int h = heuristic(key);
          open.push({g + h, h, seq++, g, key});
        }
      }
      int pos = k - 1;
      while (pos >= 0 && ++digit[pos] == move_count[pos]) digit[pos--] = 0;
      more = pos >= 0;
    }
  }
  throw InfeasibleError("joint_astar: search space exhausted");
}

}  // namespace maif
