#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "maif/bench.hpp"
#include "maif/coordination.hpp"
#include "maif/planners.hpp"
#include "maif/scalarization.hpp"

using namespace maif;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void info(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Positions random_points(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  Positions p(k);
  for (auto& v : p) v = {u(rng), u(rng)};
  return p;
}

// Squared residual of x2 against x1 rotated by theta, both centered.
double residual_at(const Positions& x1, const Positions& x2, double theta) {
  Vec2 c1, c2;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    c1.x += x1[i].x, c1.y += x1[i].y;
    c2.x += x2[i].x, c2.y += x2[i].y;
  }
  const double n = static_cast<double>(x1.size());
  c1.x /= n, c1.y /= n, c2.x /= n, c2.y /= n;
  const double c = std::cos(theta), s = std::sin(theta);
  double sum = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double ax = x1[i].x - c1.x, ay = x1[i].y - c1.y;
    const double dx = (x2[i].x - c2.x) - (ax * c - ay * s);
    const double dy = (x2[i].y - c2.y) - (ax * s + ay * c);
    sum += dx * dx + dy * dy;
  }
  return sum;
}

void procrustes_invariance() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> k_dist(2, 8);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi), shift(-100.0, 100.0);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const Positions x1 = random_points(k_dist(rng), rng);
    const double th = angle(rng), tx = shift(rng), ty = shift(rng);
    const double c = std::cos(th), s = std::sin(th);
    Positions x2;
    for (const auto& p : x1) x2.push_back({p.x * c - p.y * s + tx, p.x * s + p.y * c + ty});
    worst = std::max(worst, formation_loss(x1, x2));
  }
  const double elapsed = seconds_since(t0);
  report(1, worst < 1e-9 && elapsed < 1.0, fmt("1000 rigid pairs: max loss %.3g, %.4f s", worst, elapsed));
}

void alignment_optimality() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> k_dist(2, 8);
  const double step = 1e-4;
  const int grid = static_cast<int>(std::ceil(2.0 * std::numbers::pi / step));
  double worst_gap = -1e300;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = k_dist(rng);
    const Positions x1 = random_points(k, rng), x2 = random_points(k, rng);
    double brute = 1e300;
    for (int g = 0; g < grid; ++g) brute = std::min(brute, residual_at(x1, x2, g * step));
    worst_gap = std::max(worst_gap, formation_loss(x1, x2) - brute);
  }
  report(2, worst_gap <= 1e-6, fmt("200 pairs: max (closed form - grid minimum) %.3g", worst_gap));
}

void planner_cross_validation() {
  const auto formation = line_formation(3);
  int solvable = 0, agree = 0, skipped = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 20; ++i) {
    const Instance inst = place_formation_instance(generate_map(10, 0.1, 300 + i), formation, i);
    try {
      const Plan a = cbs(inst.map, inst.starts, inst.goals);
      const Plan b = joint_astar(inst.map, inst.starts, inst.goals, formation, 0.0);
      ++solvable;
      agree += a.makespan == b.makespan ? 1 : 0;
    } catch (const InfeasibleError&) {
      ++skipped;
    }
  }
  const double elapsed = seconds_since(t0);
  report(3, solvable > 0 && agree == solvable && elapsed < 60.0,
         fmt("%d/%d solvable instances agree (%d infeasible), %.2f s", agree, solvable, skipped, elapsed));
}

void exact_pareto(double w_f) {
  const auto formation = line_formation(3);
  bool all_ok = true;
  for (int i = 0; i < 5; ++i) {
    const Instance inst = place_formation_instance(generate_map(10, 0.05, 400 + i), formation, i);
    std::vector<ParetoPoint> pts;
    std::string line = fmt("instance %d:", i);
    for (int m = 0; m <= 3; ++m) {
      PlannerOptions po;
      po.formation = &formation;
      const Plan p = joint_astar(inst.map, inst.starts, inst.goals, formation, m * w_f, po);
      ParetoPoint pt;
      pt.weight = m * w_f;
      pt.makespan = p.makespan;
      pt.formation_loss = p.total_formation_loss;
      pts.push_back(pt);
      line += fmt(" (%d, %.4f)", p.makespan, p.total_formation_loss);
    }
    bool monotone = true;
    for (std::size_t j = 1; j < pts.size(); ++j)
      monotone = monotone && pts[j].makespan >= pts[j - 1].makespan &&
                 pts[j].formation_loss <= pts[j - 1].formation_loss + 1e-9;
    const bool front = is_non_dominated(pts);
    all_ok = all_ok && monotone && front;
    info(line + (monotone ? "" : " not monotone") + (front ? "" : " dominated"));
  }
  report(4, all_ok, fmt("joint A* at {0,1,2,3} x w_f (w_f = %.3f) on 5 instances", w_f));
}

// Loss falls or rises by a fixed amount per step, or by a Bernoulli step.
class StepSource : public LossTrajectorySource {
 public:
  StepSource(double start, double size, double p) : start_(start), size_(size), p_(p) {}
  std::vector<double> run(std::uint64_t seed, int horizon) override {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution move(p_);
    std::vector<double> out{start_};
    for (int t = 0; t < horizon; ++t) out.push_back(out.back() + (move(rng) ? size_ : 0.0));
    return out;
  }

 private:
  double start_, size_, p_;
};

void weight_formula() {
  const int T = 40;
  StepSource down(500.0, -1.0, 1.0), up(0.0, 0.25, 1.0);
  const auto best = rollout_delta_sum(down, 30, T, 1), worst = rollout_delta_sum(up, 30, T, 2);
  const auto exact = estimate_base_weight(best, worst, T);
  // e_min = -T and e_max = T / 4 by construction.
  const double expected = T / (0.25 * T - (-1.0 * T));
  const bool exact_ok = best.mean == -T && worst.mean == 0.25 * T && exact.w_f == expected &&
                        compute_base_weight(-T, 0.25 * T, T).w_f == expected;
  info(fmt("scripted: w_f %.17g, expected %.17g", exact.w_f, expected));

  // Lowers the loss by one w.p. 3/4 and raises it by one w.p. 1/4: true w_f = 60 / (15 + 45) = 1.
  const int T2 = 60;
  StepSource b(1000.0, -1.0, 0.75), w(0.0, 1.0, 0.25);
  const auto mc = estimate_base_weight(rollout_delta_sum(b, 200, T2, 77), rollout_delta_sum(w, 200, T2, 78), T2);
  const bool mc_ok = std::abs(mc.w_f - 1.0) <= mc.confidence_halfwidth;
  info(fmt("Monte Carlo: w_f %.4f +- %.4f, true 1", mc.w_f, mc.confidence_halfwidth));
  report(5, exact_ok && mc_ok, fmt("exact %s, Monte Carlo %s", exact_ok ? "equal" : "differs", mc_ok ? "covered" : "missed"));
}

struct EvalResult {
  int successes = 0;
  double loss = 0.0;  // mean normalized per-step loss over all maps
};

// Best of `episodes` warm-started rollouts per map: success first, then the scalarized cost.
EvalResult evaluate(const PolicyBundle& bundle, Controller controller, const std::vector<Instance>& instances,
                    double w_f, int episodes, int warmup) {
  EvalResult r;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    bool best_success = false;
    double best_cost = 0.0, best_loss = 0.0;
    for (int e = 0; e < episodes; ++e) {
      RolloutOptions ro;
      ro.controller = controller;
      ro.warmup_steps = warmup;
      ro.seed = i * 100 + e;
      const auto ep = run_episode(bundle, instances[i], ro);
      const double cost = ep.steps + w_f * ep.mean_formation_loss * (ep.steps + 1);
      const bool take = e == 0 || (ep.success != best_success ? ep.success : cost < best_cost);
      if (take) best_success = ep.success, best_cost = cost, best_loss = ep.mean_formation_loss;
    }
    r.successes += best_success ? 1 : 0;
    r.loss += best_loss / instances[i].map.size() / static_cast<double>(instances.size());
  }
  return r;
}

std::uint64_t logged_steps(const std::vector<TrainingLogRow>& log) {
  std::uint64_t n = 0;
  for (const auto& row : log) n += static_cast<std::uint64_t>(row.steps);
  return n;
}

struct Desk {
  TrainingSetup setup;
  PipelineResult trained;
  std::vector<Instance> eval;
};

void desk_training(const Desk& desk) {
  const auto t0 = Clock::now();
  const auto& s = desk.setup;
  const double w_f = desk.trained.weight.w_f;
  const int n = static_cast<int>(desk.eval.size());
  const auto path = evaluate(desk.trained.bundle, Controller::Path, desk.eval, w_f, 5, 5);
  const auto hier = evaluate(desk.trained.bundle, Controller::Hierarchical, desk.eval, w_f, 5, 5);

  // The flat baseline gets as many episodes as the three hierarchical phases together.
  const int e2e_episodes = 2 * s.episodes + s.meta_episodes;
  const auto e2e_run = train_end_to_end_baseline(s.episodes_factory(), s.train_config(e2e_episodes, 4), w_f);
  PolicyBundle flat;
  flat.path = e2e_run.policy;
  flat.w_f = w_f;
  const auto e2e = evaluate(flat, Controller::Path, desk.eval, w_f, 5, 5);

  std::uint64_t hier_steps = 0;
  for (const auto& [phase, log] : desk.trained.logs) hier_steps += logged_steps(log);
  info(fmt("w_f %.3f, training env steps: hierarchical %llu, end-to-end %llu", w_f,
           static_cast<unsigned long long>(hier_steps), static_cast<unsigned long long>(e2e_run.env_steps)));
  info(fmt("path only     success %.2f  loss %.4f", path.successes / double(n), path.loss));
  info(fmt("hierarchical  success %.2f  loss %.4f", hier.successes / double(n), hier.loss));
  info(fmt("end-to-end    success %.2f  loss %.4f", e2e.successes / double(n), e2e.loss));

  const bool path_ok = path.successes >= 0.9 * n;
  const bool hier_ok = hier.successes >= 0.8 * n;
  const bool loss_ok = hier.loss < path.loss;
  const bool e2e_ok = e2e.successes < hier.successes;
  info(fmt("path >= 0.9: %s, hierarchical >= 0.8: %s, lower loss than path: %s, end-to-end below hierarchical: %s",
           path_ok ? "yes" : "no", hier_ok ? "yes" : "no", loss_ok ? "yes" : "no", e2e_ok ? "yes" : "no"));
  report(6, path_ok && hier_ok && loss_ok && e2e_ok,
         fmt("10x10 d=0.05 3 agents line, %d eval maps, evaluation %.1f s", n, seconds_since(t0)));
}

void decision_latency(const Desk& desk) {
  int steps = 0;
  double total = 0.0, worst = 0.0;
  for (std::uint64_t e = 0; steps < 1000; ++e) {
    const auto& inst = desk.eval[e % desk.eval.size()];
    RolloutOptions ro;
    ro.seed = e;
    const auto ep = run_episode(desk.trained.bundle, inst, ro);
    steps += ep.steps;
    total += ep.decision_seconds;
    worst = std::max(worst, ep.max_step_seconds / inst.agent_count());
  }
  const double mean = total / steps / 3.0;
  report(7, worst < 0.1, fmt("%d steps: mean %.2e s, max %.2e s per agent per step", steps, mean, worst));
}

void clipping_soundness(const Desk& desk) {
  std::mt19937_64 rng(808);
  const auto envs = desk.setup.episodes_factory();
  ActingOptions acting;
  acting.controller = Controller::Path;
  acting.epsilon_low = 0.3;
  acting.rng = &rng;
  long evaluated = 0, increases = 0, empties = 0;
  while (evaluated < 10000) {
    const Instance inst = envs(rng);
    WorldState world = initial_state(inst);
    for (int t = 0; t < inst.episode_limit && evaluated < 10000; ++t) {
      const auto d = decide_step(desk.trained.bundle, inst, world, acting);
      for (int i = 0; i < inst.agent_count(); ++i) {
        const Cell at = world.positions[i];
        const ActionSet clipped = clip_actions_path(observe(inst, world, i), valid_actions(inst.map, world, i));
        empties += clipped.empty() ? 1 : 0;
        if (inst.cost_maps[i].at(apply(at, d.joint[i])) > inst.cost_maps[i].at(at)) ++increases;
        for (Action a : clipped.to_vector())
          if (inst.cost_maps[i].at(apply(at, a)) > inst.cost_maps[i].at(at)) ++increases;
      }
      ++evaluated;
      const auto res = step(inst, world, d.joint, desk.trained.bundle.w_f);
      world = res.next;
      if (res.done) break;
    }
  }
  report(8, increases == 0 && empties == 0,
         fmt("%ld steps: %ld cost increases, %ld empty clipped sets", evaluated, increases, empties));
}

// Greedy descent that yields when an agent that already decided claimed the same cell.
struct Greedy {
  const GridMap* map;
  const std::vector<CostMap>* costs;
  const WorldState* world;

  Cell wanted(int agent) const {
    const Cell at = world->positions[agent];
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right})
      if (map->is_free(apply(at, a)) && (*costs)[agent].at(apply(at, a)) < (*costs)[agent].at(at)) return apply(at, a);
    return at;
  }

  Action operator()(int agent, const PriorActions& prior) const {
    const Cell at = world->positions[agent];
    const Cell target = wanted(agent);
    for (const auto& p : prior)
      if (apply(world->positions[p.agent], p.action) == target) return Action::Stay;
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right})
      if (apply(at, a) == target) return a;
    return Action::Stay;
  }
};

void communication_ablation(const Desk& desk) {
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> pos(3, 8);
  const int pairs = 500;
  std::vector<double> diff;
  int with = 0, without = 0;
  for (int trial = 0; trial < pairs; ++trial) {
    // Two agents one step from a shared cell, each with one descending move into it.
    const Cell meet{pos(rng), pos(rng)};
    const bool mirror = rng() % 2 == 0;
    const std::vector<Cell> starts{{meet.x, meet.y - 1}, {mirror ? meet.x + 1 : meet.x - 1, meet.y}};
    const std::vector<Cell> goals{{meet.x, 11}, {mirror ? 0 : 11, meet.y}};
    const Instance inst = make_instance(GridMap(12, 12), line_formation(2), starts, goals);
    const WorldState world = initial_state(inst);
    const Greedy g{&inst.map, &inst.cost_maps, &world};
    const auto order = decision_order(world, inst.cost_maps, Mode::PathFinding);
    int c[2];
    for (int ablate = 0; ablate < 2; ++ablate) {
      DecisionHooks hooks;
      hooks.ablate_prior = ablate == 1;
      const auto joint = sequential_decide(order, 2, g, hooks);
      c[ablate] = step(inst, world, joint, 0.0).info.collisions > 0 ? 1 : 0;
    }
    with += c[0], without += c[1];
    diff.push_back(c[0] - c[1]);
  }
  double mean = 0.0, var = 0.0;
  for (double d : diff) mean += d / pairs;
  for (double d : diff) var += (d - mean) * (d - mean) / (pairs - 1);
  const double upper = mean + 1.645 * std::sqrt(var / pairs);
  info(fmt("fixture collision rate: with prior actions %.3f, ablated %.3f; paired difference upper bound %.3f",
           with / double(pairs), without / double(pairs), upper));

  // Same comparison for the trained bundle on the evaluation maps, for reference.
  int learned_with = 0, learned_without = 0;
  for (std::size_t i = 0; i < desk.eval.size(); ++i)
    for (int ablate = 0; ablate < 2; ++ablate) {
      RolloutOptions ro;
      ro.ablate_prior = ablate == 1;
      ro.seed = i;
      ro.warmup_steps = 5;
      (ablate ? learned_without : learned_with) += run_episode(desk.trained.bundle, desk.eval[i], ro).collisions;
    }
  info(fmt("trained bundle on %zu maps: %d collisions with prior actions, %d ablated", desk.eval.size(), learned_with,
           learned_without));
  report(9, upper < 0.0, fmt("%d paired episodes, one-sided 95%% bound on the difference %.4f", pairs, upper));
}

std::string data_line(const std::vector<ResultRow>& rows, std::size_t i) {
  std::ostringstream csv;
  write_results_csv(csv, rows);
  std::istringstream in(csv.str());
  std::string line;
  for (std::size_t k = 0; k <= i + 1; ++k) std::getline(in, line);
  return line;
}

void scalability(const Desk& desk) {
  const auto formation = line_formation(3);
  bool ours_ok = false, latency_ok = true;
  for (std::uint64_t seed : {512, 513, 514}) {
    const auto pool = generate_map_pool(1, 512, 0.05, seed);
    const Instance inst = pool_instances(pool, formation, seed).front();
    RolloutOptions ro;
    ro.seed = 5;
    const auto t0 = Clock::now();
    const auto ep = run_episode(desk.trained.bundle, inst, ro);
    const double per_agent = ep.max_step_seconds / inst.agent_count();
    if (seed == 512) ours_ok = ep.success;
    latency_ok = latency_ok && per_agent < 0.1;
    info(fmt("ours on map %llu%s: success %s, %d steps, %d collisions, max %.2e s per agent per step, %.2f s wall",
             static_cast<unsigned long long>(seed), seed == 512 ? "" : " (reference)", ep.success ? "yes" : "no",
             ep.steps, ep.collisions, per_agent, seconds_since(t0)));
  }

  BenchmarkConfig bc;
  bc.sizes = {512};
  bc.densities = {0.05};
  bc.agents = {3};
  bc.methods = {"cbs", "joint_astar"};
  bc.maps = 1;
  bc.weight = desk.trained.weight.w_f;
  const auto full = run_benchmark(bc, nullptr);
  for (std::size_t i = 0; i < full.rows.size(); ++i) info("baseline, 300 s limit: " + data_line(full.rows, i));

  // Timed-out cells: no makespan or loss, runtime reported as the limit.
  bc.time_limit = 1e-3;
  const auto cut = run_benchmark(bc, nullptr);
  bool timeout_ok = cut.timeout_dominated() && BenchmarkConfig{}.time_limit == 300.0 &&
                    PlannerOptions{}.time_limit_seconds == kDefaultTimeLimitSeconds && kDefaultTimeLimitSeconds == 300.0;
  for (std::size_t i = 0; i < cut.rows.size(); ++i) {
    const auto& row = cut.rows[i];
    timeout_ok = timeout_ok && !row.makespan && !row.formation_loss && row.success == 0.0 && row.runtime &&
                 *row.runtime == bc.time_limit;
    info("baseline, 1 ms limit: " + data_line(cut.rows, i));
  }
  report(10, ours_ok && latency_ok && timeout_ok,
         fmt("512x512 episode %s, latency %s, timeout semantics %s", ours_ok ? "completed" : "failed",
             latency_ok ? "ok" : "too slow", timeout_ok ? "ok" : "wrong"));
}

}  // namespace

int main() {
  procrustes_invariance();
  alignment_optimality();
  planner_cross_validation();

  Desk desk;
  const auto t0 = Clock::now();
  desk.trained = train_hierarchical(desk.setup.episodes_factory(), desk.setup.formation_spec(),
                                    desk.setup.pipeline_config());
  desk.eval = pool_instances(generate_map_pool(10, desk.setup.size, desk.setup.density, 99),
                             desk.setup.formation_spec(), 5);
  info(fmt("desk training: %.1f s", seconds_since(t0)));

  exact_pareto(desk.trained.weight.w_f);
  weight_formula();
  desk_training(desk);
  decision_latency(desk);
  clipping_soundness(desk);
  communication_ablation(desk);
  scalability(desk);
  return 0;
}
