#include "maif/coordination.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace maif {

const char* to_string(Mode m) { return m == Mode::Formation ? "formation" : "path"; }

Mode majority_mode(std::span<const Mode> votes) {
  const auto formation = std::count(votes.begin(), votes.end(), Mode::Formation);
  return 2 * formation > static_cast<std::ptrdiff_t>(votes.size()) ? Mode::Formation : Mode::PathFinding;
}

namespace {

long long squared_distance(Cell a, Cell b) {
  const long long dx = a.x - b.x;
  const long long dy = a.y - b.y;
  return dx * dx + dy * dy;
}

long long spread(const WorldState& world, int agent) {
  long long s = 0;
  for (const Cell& other : world.positions) s += squared_distance(world.positions[agent], other);
  return s;
}

}  // namespace

int choose_leader(const WorldState& world, std::span<const CostMap> cost_maps, Mode mode) {
  const int k = world.agent_count();
  int best = 0;
  for (int i = 1; i < k; ++i) {
    const bool better = mode == Mode::Formation
                            ? spread(world, i) < spread(world, best)
                            : cost_maps[i].at(world.positions[i]) < cost_maps[best].at(world.positions[best]);
    if (better) best = i;
  }
  return best;
}

std::vector<int> DecisionOrder::sequence() const {
  std::vector<int> out{leader};
  out.insert(out.end(), followers.begin(), followers.end());
  return out;
}

DecisionOrder decision_order(const WorldState& world, std::span<const CostMap> cost_maps, Mode mode) {
  DecisionOrder order;
  order.leader = choose_leader(world, cost_maps, mode);
  for (int i = 0; i < world.agent_count(); ++i)
    if (i != order.leader) order.followers.push_back(i);
  const Cell lead = world.positions[order.leader];
  auto key = [&](int i) -> long long {
    return mode == Mode::Formation ? squared_distance(world.positions[i], lead)
                                   : static_cast<long long>(cost_maps[i].at(world.positions[i]));
  };
  std::stable_sort(order.followers.begin(), order.followers.end(), [&](int a, int b) { return key(a) < key(b); });
  return order;
}

void SimulatedTransport::broadcast(int /*sender*/, Action /*action*/, std::span<const int> recipients) {
  messages_ += recipients.size();
}

void write_transcript(std::ostream& out, std::span<const TranscriptEntry> entries) {
  for (const auto& e : entries)
    out << '(' << e.t << ", " << e.agent << ", " << (e.leader ? "leader" : "follower") << ", " << to_string(e.mode)
        << ", " << to_string(e.action) << ")\n";
}

std::vector<Action> sequential_decide(const DecisionOrder& order, int agent_count, const AgentDecision& decide,
                                      const DecisionHooks& hooks) {
  const auto seq = order.sequence();
  if (static_cast<int>(seq.size()) != agent_count) throw std::invalid_argument("sequential_decide: order must cover all agents");
  std::vector<Action> joint(static_cast<std::size_t>(agent_count), Action::Stay);
  PriorActions prior;
  static const PriorActions kNone;
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    const int agent = seq[pos];
    const Action a = decide(agent, hooks.ablate_prior ? kNone : prior);
    joint[agent] = a;
    prior.push_back({agent, a});
    if (hooks.transport)
      hooks.transport->broadcast(agent, a, std::span<const int>(seq).subspan(pos + 1));
    if (hooks.transcript) hooks.transcript->push_back({hooks.t, agent, pos == 0, hooks.mode, a});
  }
  return joint;
}

std::vector<float> encode_prior_actions(const PriorActions& prior, int agent_count) {
  if (static_cast<int>(prior.size()) >= agent_count && agent_count > 0)
    throw std::invalid_argument("encode_prior_actions: prior must be shorter than the agent count");
  std::vector<float> out(static_cast<std::size_t>(kPriorSlotWidth * agent_count), 0.0f);
  std::vector<bool> seen(static_cast<std::size_t>(agent_count), false);
  for (const auto& p : prior) {
    if (p.agent < 0 || p.agent >= agent_count) throw std::invalid_argument("encode_prior_actions: agent out of range");
    if (seen[p.agent]) throw std::invalid_argument("encode_prior_actions: duplicate agent");
    seen[p.agent] = true;
    out[static_cast<std::size_t>(p.agent * kPriorSlotWidth + static_cast<int>(p.action))] = 1.0f;
  }
  for (int i = 0; i < agent_count; ++i)
    if (!seen[i]) out[static_cast<std::size_t>(i * kPriorSlotWidth + kActionCount)] = 1.0f;
  return out;
}

PriorActions decode_prior_actions(std::span<const float> encoded, int agent_count) {
  if (static_cast<int>(encoded.size()) != kPriorSlotWidth * agent_count)
    throw std::invalid_argument("decode_prior_actions: wrong encoding length");
  PriorActions out;
  for (int i = 0; i < agent_count; ++i) {
    const auto slot = encoded.subspan(static_cast<std::size_t>(i * kPriorSlotWidth), kPriorSlotWidth);
    const auto hot = std::max_element(slot.begin(), slot.end()) - slot.begin();
    if (hot < kActionCount) out.push_back({i, static_cast<Action>(hot)});
  }
  return out;
}

}  // namespace maif
