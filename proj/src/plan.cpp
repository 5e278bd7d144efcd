#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "maif/planners.hpp"

namespace maif {

std::vector<Cell> Plan::positions_at(int t) const {
  std::vector<Cell> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p[std::min<std::size_t>(static_cast<std::size_t>(t), p.size() - 1)]);
  return out;
}

Plan make_plan(std::vector<std::vector<Cell>> paths) {
  Plan plan;
  std::size_t longest = 0;
  for (const auto& p : paths) {
    if (p.empty()) throw std::invalid_argument("make_plan: empty path");
    longest = std::max(longest, p.size());
  }
  for (auto& p : paths) p.resize(longest, p.back());
  plan.makespan = longest == 0 ? 0 : static_cast<int>(longest) - 1;
  plan.paths = std::move(paths);
  return plan;
}

double plan_formation_loss(const Plan& plan, const FormationSpec& formation) {
  double total = 0.0;
  for (int t = 0; t <= plan.makespan; ++t) total += formation_loss(plan.positions_at(t), formation);
  return total;
}

std::optional<TimedConflict> first_conflict(const Plan& plan) {
  for (int t = 1; t <= plan.makespan; ++t) {
    const auto from = plan.positions_at(t - 1);
    const auto to = plan.positions_at(t);
    const auto conflicts = find_conflicts(from, to);
    if (!conflicts.empty()) return TimedConflict{conflicts.front(), t};
  }
  if (plan.makespan == 0 && !plan.paths.empty()) {
    const auto at0 = plan.positions_at(0);
    const auto conflicts = find_conflicts(at0, at0);
    if (!conflicts.empty()) return TimedConflict{conflicts.front(), 0};
  }
  return std::nullopt;
}

void validate_plan(const Plan& plan, const GridMap* map) {
  for (std::size_t i = 0; i < plan.paths.size(); ++i) {
    const auto& p = plan.paths[i];
    if (static_cast<int>(p.size()) != plan.makespan + 1)
      throw PlanValidationError("plan: path " + std::to_string(i) + " has the wrong length");
    for (std::size_t t = 0; t < p.size(); ++t) {
      if (map && !map->is_free(p[t]))
        throw PlanValidationError("plan: agent " + std::to_string(i) + " on a blocked cell at t=" + std::to_string(t));
      if (t > 0 && manhattan(p[t - 1], p[t]) > 1)
        throw PlanValidationError("plan: agent " + std::to_string(i) + " jumps at t=" + std::to_string(t));
    }
  }
  if (auto c = first_conflict(plan)) {
    std::ostringstream msg;
    msg << "plan: " << (c->conflict.type == ConflictType::Vertex ? "vertex" : "swap") << " conflict between agents "
        << c->conflict.agent_a << " and " << c->conflict.agent_b << " at t=" << c->t << " cell (" << c->conflict.cell_a.x
        << ',' << c->conflict.cell_a.y << ')';
    throw PlanValidationError(msg.str());
  }
}

PlanMetrics evaluate_plan(const Plan& plan, const FormationSpec& formation, int map_size) {
  validate_plan(plan);
  PlanMetrics m;
  m.makespan = plan.makespan;
  m.runtime = plan.runtime;
  m.success = !plan.paths.empty();
  if (m.success && map_size > 0) {
    const double mean = plan_formation_loss(plan, formation) / static_cast<double>(plan.makespan + 1);
    m.normalized_formation_loss = mean / static_cast<double>(map_size);
  }
  return m;
}

void write_plan(std::ostream& out, const Plan& plan) {
  for (int t = 0; t <= plan.makespan && !plan.paths.empty(); ++t) {
    const auto cells = plan.positions_at(t);
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? " " : "") << cells[i].x << ',' << cells[i].y;
    out << '\n';
  }
}

Plan read_plan(std::istream& in) {
  std::vector<std::vector<Cell>> paths;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    std::size_t agent = 0;
    while (row >> token) {
      Cell c;
      char comma = 0;
      std::istringstream cell(token);
      if (!(cell >> c.x >> comma >> c.y) || comma != ',') throw PlanValidationError("plan: bad cell '" + token + "'");
      if (paths.size() <= agent) paths.resize(agent + 1);
      paths[agent++].push_back(c);
    }
  }
  return paths.empty() ? Plan{} : make_plan(std::move(paths));
}

}  // namespace maif
