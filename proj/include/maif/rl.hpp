#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maif/coordination.hpp"
#include "maif/env.hpp"
#include "maif/features.hpp"
#include "maif/value_function.hpp"

namespace maif {

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  // Overwrites the oldest entry once full.
  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest retained entry.
  const T& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  // Uniform draw of storage slots, with replacement.
  std::vector<std::size_t> sample_slots(std::size_t n, std::mt19937_64& rng) const {
    if (n > items_.size()) throw std::invalid_argument("ReplayBuffer: sample larger than population");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& s : out) s = pick(rng);
    return out;
  }
  const T& slot(std::size_t s) const { return items_[s]; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> items_;
};

struct TrainConfig {
  double discount = 0.95;
  int batch_size = 32;
  int target_update_interval = 10;  // episodes
  double learning_rate = 0.01;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // of total_episodes
  std::size_t replay_capacity = 100000;
  int total_episodes = 2000;
  int warmup_steps = 0;  // uniformly random joint steps before the policy takes over
  std::uint64_t seed = 1;
  Backend backend = Backend::Tabular;
  int hidden = 64;
  bool fixed_epsilon = false;  // hold epsilon at epsilon_start for the whole run

  void validate() const;
};

// One agent's part of a transition.
struct AgentStep {
  Features obs;
  int action = 0;
  Features next;
  std::uint8_t next_allowed = 0;  // action bitmask at `next`
};

// Single-agent transition when agents.size() == 1, otherwise a VDN joint
// transition whose reward is the team sum.
struct Transition {
  std::vector<AgentStep> agents;
  double reward = 0.0;
  bool done = false;
};

// Index of the largest value among allowed actions, lowest index on ties.
int greedy_action(std::span<const double> q, std::uint8_t allowed);

/// y = r + discount * Q_target(o', argmax_a Q_online(o', a)), the argmax
/// restricted to `allowed`; y = r for terminal transitions.
double double_q_target(double reward, double discount, bool done, std::span<const double> online_next,
                       std::span<const double> target_next, std::uint8_t allowed);

// Joint value as the sum of per-agent values.
double vdn_joint_q(std::span<const double> per_agent);

class DqnLearner {
 public:
  DqnLearner(std::shared_ptr<ValueFunction> online, const TrainConfig& config);

  ValueFunction& online() { return *online_; }
  std::shared_ptr<ValueFunction> online_ptr() const { return online_; }
  const ValueFunction& target() const { return *target_; }

  double epsilon() const;
  int select(const Features& f, std::uint8_t allowed, std::mt19937_64& rng) const;

  // Stores the transition and runs one minibatch update once enough data exists.
  void observe(Transition t, std::mt19937_64& rng);
  // Counts the episode; syncs the target every target_update_interval episodes.
  void end_episode();

  int episodes() const { return episodes_; }
  int target_syncs() const { return target_syncs_; }
  std::size_t replay_size() const { return replay_.size(); }

 private:
  void update(const Transition& t);

  std::shared_ptr<ValueFunction> online_;
  std::unique_ptr<ValueFunction> target_;
  TrainConfig config_;
  ReplayBuffer<Transition> replay_;
  int episodes_ = 0;
  int target_syncs_ = 0;
};

// Cost-map clipping: drop moves whose destination cost exceeds the current
// cell's; Stay always stays. Costs are read from the observation.
ActionSet clip_actions_path(const Observation& obs, ActionSet valid);

enum class MetaAction : std::uint8_t { UsePath = 0, UseFormation = 1 };
inline constexpr int kMetaActionCount = 2;

enum class ClipRule { CostMap, ValidOnly };

struct Policy {
  std::shared_ptr<ValueFunction> q;
  ObservationView view = ObservationView::Path;
  ClipRule clip = ClipRule::CostMap;
  bool trained = false;

  Features features(const Observation& obs) const;
};

struct PolicyBundle {
  Policy path;
  Policy formation;
  Policy meta;
  double w_f = 0.0;
};

enum class Controller { Path, Formation, Hierarchical };

struct ActingOptions {
  Controller controller = Controller::Hierarchical;
  double epsilon_low = 0.0;
  double epsilon_meta = 0.0;
  std::mt19937_64* rng = nullptr;  // required when an epsilon is positive
  bool ablate_prior = false;
  SimulatedTransport* transport = nullptr;
  std::vector<TranscriptEntry>* transcript = nullptr;
};

struct AgentRecord {
  Features features;
  int action = 0;
  std::uint8_t allowed = 0;
};

struct StepDecision {
  std::vector<Action> joint;
  std::vector<MetaAction> meta;
  Mode mode = Mode::PathFinding;
  DecisionOrder order;
  std::vector<AgentRecord> meta_records;  // filled for the hierarchical controller
  std::vector<AgentRecord> low_records;   // indexed by agent id
};

/// One decentralized decision step: per-agent meta choice from the local
/// observation, majority mode (which selects every agent's low-level policy),
/// leader election, then sequential primitive decisions where each agent sees
/// the actions committed before it.
StepDecision decide_step(const PolicyBundle& bundle, const Instance& inst, const WorldState& world,
                         const ActingOptions& opts = {});

// Primitive decisions for a fixed order with the bundle's low-level policies.
std::vector<Action> sequential_decide(const PolicyBundle& bundle, const Instance& inst, const WorldState& world,
                                      const DecisionOrder& order, std::span<const MetaAction> meta,
                                      const ActingOptions& opts = {});

using EpisodeFactory = std::function<Instance(std::mt19937_64&)>;

struct TrainingLogRow {
  int episode = 0;
  double reward = 0.0;
  int steps = 0;
  double formation_loss = 0.0;  // mean per step
  bool success = false;
};

struct TrainingResult {
  Policy policy;
  std::vector<TrainingLogRow> log;
  std::uint64_t env_steps = 0;
};

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> log);
std::vector<TrainingLogRow> read_training_log(std::istream& in);

std::shared_ptr<ValueFunction> make_value_function(const TrainConfig& config, int action_count, int agent_count,
                                                   int fov = kDefaultFov);

// Independent DQN on the path-finding reward column, cost-map clipped actions.
TrainingResult train_path_policy(const EpisodeFactory& envs, const TrainConfig& config,
                                 ObservationView view = ObservationView::Path);

// VDN on the formation reward column, valid-move clipping only.
TrainingResult train_formation_policy(const EpisodeFactory& envs, const TrainConfig& config);

// VDN over meta actions with frozen low-level policies and the meta reward.
TrainingResult train_meta_policy(const Policy& path, const Policy& formation, double w_f, const EpisodeFactory& envs,
                                 const TrainConfig& config);

// Single flat VDN policy on r_path - w_f * L_f with cost-map clipping.
TrainingResult train_end_to_end_baseline(const EpisodeFactory& envs, const TrainConfig& config, double w_f);

struct EpisodeOutcome {
  bool success = false;
  int steps = 0;               // timesteps until all agents reached goals, or the limit
  double mean_formation_loss = 0.0;  // over post-warmup states
  int collisions = 0;
  double decision_seconds = 0.0;
  double max_step_seconds = 0.0;
  std::vector<std::vector<Cell>> trajectory;  // positions per timestep when requested
};

struct RolloutOptions {
  Controller controller = Controller::Hierarchical;
  int warmup_steps = 0;
  bool ablate_prior = false;
  bool record_trajectory = false;
  std::uint64_t seed = 0;
  // Hierarchical only: a joint configuration that repeats before the team's
  // summed cost-to-go reaches a new minimum is stepped with the path policy.
  bool break_formation_cycles = true;
};

// Greedy rollout of a bundle from the instance's start configuration.
EpisodeOutcome run_episode(const PolicyBundle& bundle, const Instance& inst, const RolloutOptions& opts);

}  // namespace maif
