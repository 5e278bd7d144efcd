#include "maif/scalarization.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "maif/planners.hpp"

namespace maif {

DeltaSumStats rollout_delta_sum(LossTrajectorySource& source, int episodes, int horizon, std::uint64_t seed) {
  if (episodes < kMinWeightEpisodes)
    throw std::invalid_argument("rollout_delta_sum: at least " + std::to_string(kMinWeightEpisodes) + " episodes");
  if (horizon < 1) throw std::invalid_argument("rollout_delta_sum: horizon must be positive");
  std::vector<double> sums;
  sums.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    const auto losses = source.run(seed + static_cast<std::uint64_t>(e), horizon);
    if (losses.empty()) throw std::invalid_argument("rollout_delta_sum: zero-length episode");
    double s = 0.0;
    const std::size_t steps = std::min<std::size_t>(losses.size() - 1, static_cast<std::size_t>(horizon));
    for (std::size_t t = 0; t < steps; ++t) s += losses[t + 1] - losses[t];
    sums.push_back(s);
  }
  DeltaSumStats st;
  st.count = episodes;
  for (double s : sums) st.mean += s;
  st.mean /= episodes;
  for (double s : sums) st.variance += (s - st.mean) * (s - st.mean);
  st.variance /= (episodes - 1);
  return st;
}

WeightEstimate compute_base_weight(double e_min, double e_max, int T) {
  if (!(e_max > e_min)) throw DegenerateRangeError("compute_base_weight: e_max must exceed e_min");
  if (T < 1) throw std::invalid_argument("compute_base_weight: T must be positive");
  WeightEstimate w;
  w.T = T;
  w.e_min = e_min;
  w.e_max = e_max;
  w.r_star = e_max - e_min;
  w.w_f = static_cast<double>(T) / w.r_star;
  return w;
}

WeightEstimate estimate_base_weight(const DeltaSumStats& best, const DeltaSumStats& worst, int T) {
  WeightEstimate w = compute_base_weight(best.mean, worst.mean, T);
  w.episodes_min = best.count;
  w.episodes_max = worst.count;
  const double var_range = best.variance / best.count + worst.variance / worst.count;
  w.confidence_halfwidth = 1.96 * static_cast<double>(T) * std::sqrt(var_range) / (w.r_star * w.r_star);
  return w;
}

void write_weight_report(std::ostream& out, const WeightEstimate& w) {
  out.precision(10);
  out << "T " << w.T << '\n'
      << "e_min " << w.e_min << '\n'
      << "e_max " << w.e_max << '\n'
      << "r_star " << w.r_star << '\n'
      << "w_f " << w.w_f << '\n'
      << "episodes_min " << w.episodes_min << '\n'
      << "episodes_max " << w.episodes_max << '\n'
      << "confidence_halfwidth " << w.confidence_halfwidth << '\n';
}

std::vector<double> PolicyLossSource::run(std::uint64_t seed, int horizon) {
  std::mt19937_64 rng(seed);
  const Instance inst = envs_(rng);
  WorldState world = initial_state(inst);
  std::vector<double> losses{formation_loss(world.positions, inst.formation)};
  ActingOptions opts;
  opts.controller = controller_;
  for (int t = 0; t < horizon && !world.all_at_goal(); ++t) {
    const auto d = decide_step(bundle_, inst, world, opts);
    const auto res = step(inst, world, d.joint, 0.0);
    losses.push_back(res.info.formation_loss);
    world = res.next;
  }
  return losses;
}

std::vector<double> RandomLossSource::run(std::uint64_t seed, int horizon) {
  std::mt19937_64 rng(seed);
  const Instance inst = envs_(rng);
  WorldState world = initial_state(inst);
  std::vector<double> losses{formation_loss(world.positions, inst.formation)};
  std::vector<Action> joint(static_cast<std::size_t>(world.agent_count()));
  for (int t = 0; t < horizon && !world.all_at_goal(); ++t) {
    for (int i = 0; i < world.agent_count(); ++i) {
      const auto options = valid_actions(inst.map, world, i).to_vector();
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      joint[i] = options[pick(rng)];
    }
    const auto res = step(inst, world, joint, 0.0);
    losses.push_back(res.info.formation_loss);
    world = res.next;
  }
  return losses;
}

WeightEstimate estimate_weight_from_policies(const Policy& formation, const EpisodeFactory& envs, int episodes, int T,
                                             std::uint64_t seed) {
  PolicyBundle bundle;
  bundle.formation = formation;
  PolicyLossSource trained(bundle, Controller::Formation, envs);
  RandomLossSource random(envs);
  const auto best = rollout_delta_sum(trained, episodes, T, seed);
  const auto worst = rollout_delta_sum(random, episodes, T, seed);
  return estimate_base_weight(best, worst, T);
}

bool strictly_dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.makespan < b.makespan && a.formation_loss < b.formation_loss;
}

bool is_non_dominated(std::span<const ParetoPoint> points) {
  for (const auto& a : points)
    for (const auto& b : points)
      if (strictly_dominates(a, b)) return false;
  return true;
}

std::vector<ParetoPoint> pareto_sweep(const BundleFactory& bundles, std::span<const double> multipliers,
                                      double base_weight, std::span<const Instance> instances,
                                      const ParetoOptions& opts) {
  std::vector<ParetoPoint> out;
  for (double m : multipliers) {
    const double weight = m * base_weight;
    if (opts.run_learned) {
      ParetoPoint p;
      p.source = "learned";
      p.multiplier = m;
      p.weight = weight;
      try {
        const PolicyBundle bundle = bundles(weight);
        double makespan = 0.0;
        double loss = 0.0;
        for (std::size_t i = 0; i < instances.size(); ++i) {
          RolloutOptions ro;
          ro.warmup_steps = opts.warmup_steps;
          ro.seed = opts.seed + i;
          const auto e = run_episode(bundle, instances[i], ro);
          ++p.attempts;
          if (!e.success) continue;
          ++p.successes;
          makespan += e.steps;
          loss += e.mean_formation_loss / instances[i].map.size();
        }
        if (p.successes == 0) {
          p.error = "no successful episodes";
        } else {
          p.makespan = makespan / p.successes;
          p.formation_loss = loss / p.successes;
        }
      } catch (const std::exception& ex) {
        p.error = ex.what();
      }
      out.push_back(p);
    }
    if (opts.run_exact) {
      ParetoPoint p;
      p.source = "joint_astar";
      p.multiplier = m;
      p.weight = weight;
      try {
        PlannerOptions po;
        po.time_limit_seconds = opts.time_limit_seconds;
        double makespan = 0.0;
        double loss = 0.0;
        for (const Instance& inst : instances) {
          ++p.attempts;
          const Plan plan = joint_astar(inst.map, inst.starts, inst.goals, inst.formation, weight, po);
          const auto metrics = evaluate_plan(plan, inst.formation, inst.map.size());
          ++p.successes;
          makespan += metrics.makespan;
          loss += metrics.normalized_formation_loss;
        }
        p.makespan = makespan / p.successes;
        p.formation_loss = loss / p.successes;
      } catch (const std::exception& ex) {
        p.error = ex.what();
      }
      out.push_back(p);
    }
  }
  return out;
}

void write_pareto_csv(std::ostream& out, std::span<const ParetoPoint> points) {
  out << "source,multiplier,weight,makespan,loss,successes,attempts\n";
  out.precision(10);
  for (const auto& p : points) {
    out << p.source << ',' << p.multiplier << ',' << p.weight << ',';
    if (p.error.empty()) out << p.makespan << ',' << p.formation_loss;
    else out << "-,-";
    out << ',' << p.successes << ',' << p.attempts << '\n';
  }
}

}  // namespace maif
