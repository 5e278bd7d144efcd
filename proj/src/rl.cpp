#include "maif/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace maif {

void TrainConfig::validate() const {
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("TrainConfig: discount must lie in (0, 1]");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (target_update_interval < 1) throw std::invalid_argument("TrainConfig: target_update_interval must be >= 1");
  if (total_episodes < 1) throw std::invalid_argument("TrainConfig: total_episodes must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
}

int greedy_action(std::span<const double> q, std::uint8_t allowed) {
  int best = -1;
  for (int a = 0; a < static_cast<int>(q.size()); ++a) {
    if (!(allowed & (1u << a))) continue;
    if (best < 0 || q[a] > q[best]) best = a;
  }
  if (best < 0) throw std::invalid_argument("greedy_action: empty allowed set");
  return best;
}

double double_q_target(double reward, double discount, bool done, std::span<const double> online_next,
                       std::span<const double> target_next, std::uint8_t allowed) {
  if (done) return reward;
  return reward + discount * target_next[greedy_action(online_next, allowed)];
}

double vdn_joint_q(std::span<const double> per_agent) {
  if (per_agent.empty()) throw std::invalid_argument("vdn_joint_q: no agent values");
  double s = 0.0;
  for (double v : per_agent) s += v;
  return s;
}

DqnLearner::DqnLearner(std::shared_ptr<ValueFunction> online, const TrainConfig& config)
    : online_(std::move(online)), target_(online_->clone()), config_(config), replay_(config.replay_capacity) {
  config_.validate();
}

double DqnLearner::epsilon() const {
  if (config_.fixed_epsilon) return config_.epsilon_start;
  const double horizon = config_.epsilon_decay_fraction * config_.total_episodes;
  const double frac = horizon <= 0.0 ? 1.0 : std::min(1.0, episodes_ / horizon);
  return config_.epsilon_start + frac * (config_.epsilon_end - config_.epsilon_start);
}

namespace {

int explore_or_exploit(const ValueFunction& q, const Features& f, std::uint8_t allowed, double epsilon,
                       std::mt19937_64* rng) {
  if (epsilon > 0.0 && rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(*rng) < epsilon) {
      std::vector<int> options;
      for (int a = 0; a < q.action_count(); ++a)
        if (allowed & (1u << a)) options.push_back(a);
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      return options[pick(*rng)];
    }
  }
  std::array<double, 8> buf{};
  const std::span<double> values(buf.data(), static_cast<std::size_t>(q.action_count()));
  q.q_values(f, values);
  return greedy_action(values, allowed);
}

}  // namespace

int DqnLearner::select(const Features& f, std::uint8_t allowed, std::mt19937_64& rng) const {
  return explore_or_exploit(*online_, f, allowed, epsilon(), &rng);
}

void DqnLearner::update(const Transition& t) {
  const auto n = static_cast<std::size_t>(online_->action_count());
  std::vector<double> q(n), online_next(n), target_next(n);
  double joint_q = 0.0;
  double bootstrap = 0.0;
  for (const AgentStep& s : t.agents) {
    online_->q_values(s.obs, q);
    joint_q += q[static_cast<std::size_t>(s.action)];
    if (!t.done) {
      online_->q_values(s.next, online_next);
      target_->q_values(s.next, target_next);
      bootstrap += target_next[static_cast<std::size_t>(greedy_action(online_next, s.next_allowed))];
    }
  }
  const double y = t.done ? t.reward : t.reward + config_.discount * bootstrap;
  const double td = y - joint_q;
  if (!std::isfinite(td)) throw TrainingDivergedError("DQN: non-finite TD error");
  for (const AgentStep& s : t.agents) online_->apply_td(s.obs, s.action, td, config_.learning_rate);
  ++online_->training_steps;
}

void DqnLearner::observe(Transition t, std::mt19937_64& rng) {
  replay_.push(std::move(t));
  if (replay_.size() < static_cast<std::size_t>(config_.batch_size)) return;
  for (std::size_t s : replay_.sample_slots(static_cast<std::size_t>(config_.batch_size), rng)) update(replay_.slot(s));
}

void DqnLearner::end_episode() {
  ++episodes_;
  if (episodes_ % config_.target_update_interval == 0) {
    target_->copy_from(*online_);
    ++target_syncs_;
  }
}

ActionSet clip_actions_path(const Observation& obs, ActionSet valid) {
  ActionSet out = ActionSet::only(Action::Stay);
  const float here = obs.cost[obs.slot(0, 0)];
  for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
    if (!valid.contains(a)) continue;
    const Cell n = apply(Cell{0, 0}, a);
    if (obs.cost[obs.slot(n.x, n.y)] <= here) out.insert(a);
  }
  return out;
}

Features Policy::features(const Observation& obs) const { return make_features(obs, view, q->needs_dense()); }

namespace {

constexpr std::uint8_t kMetaAllowed = 0b11;

// The team mode picks the low-level policy for every agent; mixing the two
// policies inside one step leads to collisions neither was trained for.
std::vector<Action> decide_primitives(const PolicyBundle& bundle, const Instance& inst, const WorldState& world,
                                      const DecisionOrder& order, const ActingOptions& opts, Mode mode,
                                      std::vector<AgentRecord>* records) {
  const int k = world.agent_count();
  if (records) records->assign(static_cast<std::size_t>(k), AgentRecord{});
  DecisionHooks hooks;
  hooks.transport = opts.transport;
  hooks.transcript = opts.transcript;
  hooks.t = world.t;
  hooks.mode = mode;
  hooks.ablate_prior = opts.ablate_prior;
  return sequential_decide(
      order, k,
      [&](int agent, const PriorActions& prior) {
        const Policy& p = mode == Mode::PathFinding ? bundle.path : bundle.formation;
        if (!p.q) throw std::invalid_argument("decide: low-level policy missing");
        const Observation o = observe(inst, world, agent, prior);
        const ActionSet valid = valid_actions(inst.map, world, agent);
        const ActionSet allowed = p.clip == ClipRule::CostMap ? clip_actions_path(o, valid) : valid;
        Features f = p.features(o);
        const int a = explore_or_exploit(*p.q, f, allowed.bits(), opts.epsilon_low, opts.rng);
        if (records) (*records)[agent] = AgentRecord{std::move(f), a, allowed.bits()};
        return static_cast<Action>(a);
      },
      hooks);
}

}  // namespace

std::vector<Action> sequential_decide(const PolicyBundle& bundle, const Instance& inst, const WorldState& world,
                                      const DecisionOrder& order, std::span<const MetaAction> meta,
                                      const ActingOptions& opts) {
  const int formation_votes =
      static_cast<int>(std::count(meta.begin(), meta.end(), MetaAction::UseFormation));
  const Mode mode = 2 * formation_votes > static_cast<int>(meta.size()) ? Mode::Formation : Mode::PathFinding;
  return decide_primitives(bundle, inst, world, order, opts, mode, nullptr);
}

StepDecision decide_step(const PolicyBundle& bundle, const Instance& inst, const WorldState& world,
                         const ActingOptions& opts) {
  const int k = world.agent_count();
  StepDecision d;
  switch (opts.controller) {
    case Controller::Path:
      d.meta.assign(static_cast<std::size_t>(k), MetaAction::UsePath);
      d.mode = Mode::PathFinding;
      break;
    case Controller::Formation:
      d.meta.assign(static_cast<std::size_t>(k), MetaAction::UseFormation);
      d.mode = Mode::Formation;
      break;
    case Controller::Hierarchical: {
      if (!bundle.meta.q) throw std::invalid_argument("decide: meta policy missing");
      std::vector<Mode> votes;
      for (int i = 0; i < k; ++i) {
        const Observation o = observe(inst, world, i);
        Features f = bundle.meta.features(o);
        const int a = explore_or_exploit(*bundle.meta.q, f, kMetaAllowed, opts.epsilon_meta, opts.rng);
        d.meta.push_back(static_cast<MetaAction>(a));
        votes.push_back(a == static_cast<int>(MetaAction::UseFormation) ? Mode::Formation : Mode::PathFinding);
        d.meta_records.push_back(AgentRecord{std::move(f), a, kMetaAllowed});
      }
      d.mode = majority_mode(votes);
      break;
    }
  }
  d.order = decision_order(world, inst.cost_maps, d.mode);
  d.joint = decide_primitives(bundle, inst, world, d.order, opts, d.mode, &d.low_records);
  return d;
}

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> log) {
  out << "episode,reward,steps,formation_loss,success\n";
  out.precision(17);
  for (const auto& r : log)
    out << r.episode << ',' << r.reward << ',' << r.steps << ',' << r.formation_loss << ',' << (r.success ? 1 : 0)
        << '\n';
}

std::vector<TrainingLogRow> read_training_log(std::istream& in) {
  std::vector<TrainingLogRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream s(line);
    TrainingLogRow r;
    char c = 0;
    int success = 0;
    s >> r.episode >> c >> r.reward >> c >> r.steps >> c >> r.formation_loss >> c >> success;
    r.success = success != 0;
    rows.push_back(r);
  }
  return rows;
}

std::shared_ptr<ValueFunction> make_value_function(const TrainConfig& config, int action_count, int agent_count,
                                                   int fov) {
  if (config.backend == Backend::Tabular) return std::make_shared<TabularQ>(action_count);
  return std::make_shared<MlpQ>(static_cast<int>(dense_feature_size(fov, agent_count)), config.hidden, action_count,
                                config.seed ^ 0xA5A5A5A5ULL);
}

namespace {

enum class Phase { Path, Formation, Meta, Flat };

double phase_reward(Phase phase, const RewardVector& r, double w_f, double formation_loss) {
  switch (phase) {
    case Phase::Path: return r.path;
    case Phase::Formation: return r.formation;
    case Phase::Meta: return r.meta;
    case Phase::Flat: return r.path - w_f * formation_loss;
  }
  return 0.0;
}

// Records a policy would produce at `world` with an empty prior list; used to
// bootstrap from the state where an episode was truncated.
std::vector<AgentRecord> bootstrap_records(Phase phase, const PolicyBundle& bundle, const Instance& inst,
                                           const WorldState& world) {
  std::vector<AgentRecord> out;
  for (int i = 0; i < world.agent_count(); ++i) {
    const Observation o = observe(inst, world, i);
    AgentRecord r;
    if (phase == Phase::Meta) {
      r.features = bundle.meta.features(o);
      r.allowed = kMetaAllowed;
    } else {
      const Policy& p = phase == Phase::Formation ? bundle.formation : bundle.path;
      const ActionSet valid = valid_actions(inst.map, world, i);
      r.features = p.features(o);
      r.allowed = (p.clip == ClipRule::CostMap ? clip_actions_path(o, valid) : valid).bits();
    }
    out.push_back(std::move(r));
  }
  return out;
}

TrainingResult run_training(Phase phase, PolicyBundle bundle, const EpisodeFactory& envs, const TrainConfig& config,
                            double w_f) {
  config.validate();
  Policy& learned = phase == Phase::Meta        ? bundle.meta
                    : phase == Phase::Formation ? bundle.formation
                                                : bundle.path;
  DqnLearner learner(learned.q, config);
  const bool joint = phase != Phase::Path;
  const Controller controller = phase == Phase::Meta        ? Controller::Hierarchical
                                : phase == Phase::Formation ? Controller::Formation
                                                            : Controller::Path;
  std::mt19937_64 rng(config.seed);
  TrainingResult result;

  struct Pending {
    std::vector<AgentRecord> records;
    std::vector<double> rewards;
    bool done = false;
  };

  auto flush = [&](Pending& p, const std::vector<AgentRecord>& next) {
    const std::size_t k = p.records.size();
    auto make_step = [&](std::size_t i) {
      return AgentStep{std::move(p.records[i].features), p.records[i].action, next[i].features, next[i].allowed};
    };
    if (joint) {
      Transition t;
      t.done = p.done;
      for (std::size_t i = 0; i < k; ++i) {
        t.reward += p.rewards[i];
        t.agents.push_back(make_step(i));
      }
      learner.observe(std::move(t), rng);
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        Transition t;
        t.done = p.done;
        t.reward = p.rewards[i];
        t.agents.push_back(make_step(i));
        learner.observe(std::move(t), rng);
      }
    }
  };

  for (int ep = 0; ep < config.total_episodes; ++ep) {
    const Instance inst = envs(rng);
    WorldState world = random_warmup(inst, initial_state(inst), config.warmup_steps, rng);
    std::optional<Pending> pending;
    TrainingLogRow row;
    row.episode = ep;
    double loss_sum = 0.0;
    bool done = world.all_at_goal() || world.t >= inst.episode_limit;
    while (!done) {
      ActingOptions opts;
      opts.controller = controller;
      opts.rng = &rng;
      (phase == Phase::Meta ? opts.epsilon_meta : opts.epsilon_low) = learner.epsilon();
      StepDecision d = decide_step(bundle, inst, world, opts);
      auto& records = phase == Phase::Meta ? d.meta_records : d.low_records;
      if (pending) flush(*pending, records);

      const StepResult res = step(inst, world, d.joint, w_f);
      Pending next;
      next.records = std::move(records);
      // The keep bonus is paid once and is not observable, so formation
      // training ends there instead of teaching break-and-reform loops.
      next.done = phase == Phase::Formation ? res.info.keep_bonus : res.info.all_at_goal;
      for (const auto& r : res.rewards) {
        next.rewards.push_back(phase_reward(phase, r, w_f, res.info.formation_loss));
        row.reward += next.rewards.back();
      }
      pending = std::move(next);
      loss_sum += res.info.formation_loss;
      ++row.steps;
      ++result.env_steps;
      world = res.next;
      done = res.done || pending->done;
    }
    if (pending) {
      if (pending->done) {
        const auto& same = pending->records;
        std::vector<AgentRecord> terminal(same.size());
        for (std::size_t i = 0; i < same.size(); ++i) terminal[i] = AgentRecord{same[i].features, 0, 0xFF};
        flush(*pending, terminal);
      } else {
        flush(*pending, bootstrap_records(phase, bundle, inst, world));
      }
    }
    learner.end_episode();
    row.success = world.all_at_goal();
    row.formation_loss = row.steps ? loss_sum / row.steps : 0.0;
    result.log.push_back(row);
  }
  learned.trained = true;
  result.policy = learned;
  return result;
}

int agents_of(const EpisodeFactory& envs, std::uint64_t seed) {
  std::mt19937_64 probe(seed);
  return envs(probe).agent_count();
}

}  // namespace

TrainingResult train_path_policy(const EpisodeFactory& envs, const TrainConfig& config, ObservationView view) {
  PolicyBundle bundle;
  bundle.path = Policy{make_value_function(config, kActionCount, agents_of(envs, config.seed)), view,
                       ClipRule::CostMap, false};
  return run_training(Phase::Path, std::move(bundle), envs, config, 0.0);
}

TrainingResult train_formation_policy(const EpisodeFactory& envs, const TrainConfig& config) {
  PolicyBundle bundle;
  bundle.formation = Policy{make_value_function(config, kActionCount, agents_of(envs, config.seed)),
                            ObservationView::Formation, ClipRule::ValidOnly, false};
  return run_training(Phase::Formation, std::move(bundle), envs, config, 0.0);
}

TrainingResult train_meta_policy(const Policy& path, const Policy& formation, double w_f, const EpisodeFactory& envs,
                                 const TrainConfig& config) {
  if (!path.trained || !formation.trained || !path.q || !formation.q)
    throw std::invalid_argument("train_meta_policy: low-level policies must be trained first");
  PolicyBundle bundle;
  bundle.path = path;
  bundle.formation = formation;
  bundle.w_f = w_f;
  bundle.meta = Policy{make_value_function(config, kMetaActionCount, agents_of(envs, config.seed)),
                       ObservationView::Meta, ClipRule::ValidOnly, false};
  return run_training(Phase::Meta, std::move(bundle), envs, config, w_f);
}

TrainingResult train_end_to_end_baseline(const EpisodeFactory& envs, const TrainConfig& config, double w_f) {
  PolicyBundle bundle;
  bundle.path = Policy{make_value_function(config, kActionCount, agents_of(envs, config.seed)), ObservationView::Flat,
                       ClipRule::CostMap, false};
  return run_training(Phase::Flat, std::move(bundle), envs, config, w_f);
}

EpisodeOutcome run_episode(const PolicyBundle& bundle, const Instance& inst, const RolloutOptions& opts) {
  using Clock = std::chrono::steady_clock;
  std::mt19937_64 rng(opts.seed);
  EpisodeOutcome out;
  WorldState world = random_warmup(inst, initial_state(inst), opts.warmup_steps, rng);
  if (opts.record_trajectory) out.trajectory.push_back(world.positions);
  const bool has_formation = inst.formation.agent_count() == world.agent_count();
  double loss_sum = has_formation ? formation_loss(world.positions, inst.formation) : 0.0;
  int states = 1;
  bool done = world.all_at_goal() || world.t >= inst.episode_limit;
  // Configurations seen since the team's summed cost-to-go last hit a new
  // minimum. A greedy formation policy that cannot close the formation next to
  // an obstacle otherwise undoes path progress forever.
  std::set<std::vector<std::pair<int, int>>> since_progress;
  long best_total = std::numeric_limits<long>::max();
  auto key_of = [](const WorldState& w) {
    std::vector<std::pair<int, int>> key;
    for (const Cell& c : w.positions) key.emplace_back(c.x, c.y);
    return key;
  };
  while (!done) {
    ActingOptions act;
    act.controller = opts.controller;
    act.ablate_prior = opts.ablate_prior;
    if (opts.break_formation_cycles && opts.controller == Controller::Hierarchical) {
      long total = 0;
      for (int i = 0; i < world.agent_count(); ++i) total += inst.cost_maps[i].at(world.positions[i]);
      if (total < best_total) {
        best_total = total;
        since_progress.clear();
      }
      if (!since_progress.insert(key_of(world)).second) act.controller = Controller::Path;
    }
    const auto t0 = Clock::now();
    const StepDecision d = decide_step(bundle, inst, world, act);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    out.decision_seconds += dt;
    out.max_step_seconds = std::max(out.max_step_seconds, dt);
    const StepResult res = step(inst, world, d.joint, bundle.w_f);
    out.collisions += res.info.collisions;
    loss_sum += res.info.formation_loss;
    ++states;
    world = res.next;
    done = res.done;
    if (opts.record_trajectory) out.trajectory.push_back(world.positions);
  }
  out.success = world.all_at_goal();
  out.steps = world.t;
  out.mean_formation_loss = loss_sum / states;
  return out;
}

}  // namespace maif
