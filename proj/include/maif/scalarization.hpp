#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "maif/env.hpp"
#include "maif/rl.hpp"

namespace maif {

// Produces the formation-loss sequence L_0, L_1, ..., L_n (n <= horizon) of one episode.
class LossTrajectorySource {
 public:
  virtual ~LossTrajectorySource() = default;
  virtual std::vector<double> run(std::uint64_t seed, int horizon) = 0;
};

struct DeltaSumStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  int count = 0;
};

inline constexpr int kMinWeightEpisodes = 30;

// Per-episode sum of L_{t+1} - L_t over exactly `horizon` steps, episodes
// that end early contributing zero deltas afterwards. Discount is 1.
DeltaSumStats rollout_delta_sum(LossTrajectorySource& source, int episodes, int horizon, std::uint64_t seed);

struct WeightEstimate {
  int T = 0;
  double e_min = 0.0;
  double e_max = 0.0;
  double r_star = 0.0;
  double w_f = 0.0;
  int episodes_min = 0;
  int episodes_max = 0;
  double confidence_halfwidth = 0.0;  // 95%, delta method; 0 for exact inputs
};

class DegenerateRangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// w_f = T / (e_max - e_min).
WeightEstimate compute_base_weight(double e_min, double e_max, int T);

// Same formula from sampled rollouts, with a 95% halfwidth on w_f.
WeightEstimate estimate_base_weight(const DeltaSumStats& best, const DeltaSumStats& worst, int T);

void write_weight_report(std::ostream& out, const WeightEstimate& w);

// Greedy rollouts of a bundle under a fixed controller on freshly drawn episodes.
class PolicyLossSource : public LossTrajectorySource {
 public:
  PolicyLossSource(PolicyBundle bundle, Controller controller, EpisodeFactory envs)
      : bundle_(std::move(bundle)), controller_(controller), envs_(std::move(envs)) {}
  std::vector<double> run(std::uint64_t seed, int horizon) override;

 private:
  PolicyBundle bundle_;
  Controller controller_;
  EpisodeFactory envs_;
};

// Every agent picks uniformly among its valid actions.
class RandomLossSource : public LossTrajectorySource {
 public:
  explicit RandomLossSource(EpisodeFactory envs) : envs_(std::move(envs)) {}
  std::vector<double> run(std::uint64_t seed, int horizon) override;

 private:
  EpisodeFactory envs_;
};

// e_min from the trained formation policy, e_max from the random policy.
WeightEstimate estimate_weight_from_policies(const Policy& formation, const EpisodeFactory& envs, int episodes, int T,
                                             std::uint64_t seed);

struct ParetoPoint {
  std::string source;  // "learned" or "joint_astar"
  double multiplier = 0.0;
  double weight = 0.0;
  double makespan = 0.0;
  double formation_loss = 0.0;  // mean normalized per-step loss
  int successes = 0;
  int attempts = 0;
  std::string error;  // non-empty when the point failed
};

// Strict on both axes.
bool strictly_dominates(const ParetoPoint& a, const ParetoPoint& b);
bool is_non_dominated(std::span<const ParetoPoint> points);

using BundleFactory = std::function<PolicyBundle(double weight)>;

struct ParetoOptions {
  bool run_learned = true;
  bool run_exact = true;
  int warmup_steps = 0;
  double time_limit_seconds = 300.0;
  std::uint64_t seed = 0;
};

std::vector<ParetoPoint> pareto_sweep(const BundleFactory& bundles, std::span<const double> multipliers,
                                      double base_weight, std::span<const Instance> instances,
                                      const ParetoOptions& opts = {});

void write_pareto_csv(std::ostream& out, std::span<const ParetoPoint> points);

}  // namespace maif
