#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "maif/env.hpp"
#include "maif/grid.hpp"

namespace maif {

// Which low-level behaviour the team is executing this step.
enum class Mode { Formation, PathFinding };

const char* to_string(Mode m);

// Majority vote over per-agent meta choices; ties go to PathFinding.
Mode majority_mode(std::span<const Mode> votes);

/// Leader for this step. Formation mode picks the agent minimizing the sum of
/// squared distances to the others ("middle"); PathFinding mode picks the agent
/// with the smallest cost-map value ("front"). Ties go to the lowest id.
int choose_leader(const WorldState& world, std::span<const CostMap> cost_maps, Mode mode);

struct DecisionOrder {
  int leader = 0;
  std::vector<int> followers;

  std::vector<int> sequence() const;
};

// Leader first, then followers by ascending cost (PathFinding) or ascending
// squared distance to the leader (Formation), ties by id.
DecisionOrder decision_order(const WorldState& world, std::span<const CostMap> cost_maps, Mode mode);

// Counts action broadcasts: every decision is sent to each agent that has not decided yet.
class SimulatedTransport {
 public:
  void broadcast(int sender, Action action, std::span<const int> recipients);
  std::size_t messages() const { return messages_; }
  void reset() { messages_ = 0; }

 private:
  std::size_t messages_ = 0;
};

struct TranscriptEntry {
  int t = 0;
  int agent = 0;
  bool leader = false;
  Mode mode = Mode::PathFinding;
  Action action = Action::Stay;
};

void write_transcript(std::ostream& out, std::span<const TranscriptEntry> entries);

struct DecisionHooks {
  SimulatedTransport* transport = nullptr;
  std::vector<TranscriptEntry>* transcript = nullptr;
  int t = 0;
  Mode mode = Mode::PathFinding;
  // Ablation: every agent decides with an empty prior-action list.
  bool ablate_prior = false;
};

using AgentDecision = std::function<Action(int agent, const PriorActions& prior)>;

// Runs the decision order; agent j sees the actions of everyone before it.
// Returns the joint action indexed by agent id.
std::vector<Action> sequential_decide(const DecisionOrder& order, int agent_count, const AgentDecision& decide,
                                      const DecisionHooks& hooks = {});

inline constexpr int kPriorSlotWidth = kActionCount + 1;

// Per-agent one-hot over {5 actions, undecided}, in agent-id order.
std::vector<float> encode_prior_actions(const PriorActions& prior, int agent_count);
// Inverse of encode_prior_actions; entries come back in agent-id order.
PriorActions decode_prior_actions(std::span<const float> encoded, int agent_count);

}  // namespace maif
