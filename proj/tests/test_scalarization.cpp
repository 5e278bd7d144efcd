#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "maif/planners.hpp"
#include "maif/scalarization.hpp"

using namespace maif;

namespace {

// Loss sequence produced by a step rule; the seed feeds the rule's own generator.
class ScriptedSource : public LossTrajectorySource {
 public:
  using Rule = std::function<double(std::mt19937_64&)>;
  ScriptedSource(double start, Rule delta, int length = -1, double scale = 1.0)
      : start_(start), delta_(std::move(delta)), length_(length), scale_(scale) {}

  std::vector<double> run(std::uint64_t seed, int horizon) override {
    std::mt19937_64 rng(seed);
    const int n = length_ < 0 ? horizon : std::min(length_, horizon);
    std::vector<double> out{start_ * scale_};
    double l = start_;
    for (int t = 0; t < n; ++t) {
      l += delta_(rng);
      out.push_back(l * scale_);
    }
    return out;
  }

 private:
  double start_;
  Rule delta_;
  int length_;
  double scale_;
};

ScriptedSource::Rule bernoulli_step(double p, double size) {
  return [p, size](std::mt19937_64& rng) { return std::bernoulli_distribution(p)(rng) ? size : 0.0; };
}

// Best policy lowers the loss by one with probability 3/4 per step; the worst raises it with probability 1/4.
// Expected sums are -0.75 T and 0.25 T, so the true weight is exactly 1.
struct TwoPolicies {
  ScriptedSource best{1000.0, bernoulli_step(0.75, -1.0)};
  ScriptedSource worst{0.0, bernoulli_step(0.25, 1.0)};
};

}  // namespace

TEST_CASE("base weight examples") {
  const auto a = compute_base_weight(-40, 20, 60);
  CHECK(a.w_f == 1.0);
  CHECK(a.r_star == 60.0);
  CHECK(compute_base_weight(-96, 0, 96).w_f == 1.0);
  CHECK(compute_base_weight(-3, 1, 10).w_f == 2.5);
}

TEST_CASE("degenerate ranges are rejected") {
  CHECK_THROWS_AS(compute_base_weight(1.0, 1.0, 10), DegenerateRangeError);
  CHECK_THROWS_AS(compute_base_weight(2.0, 1.0, 10), DegenerateRangeError);
  CHECK_THROWS_AS(compute_base_weight(0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("rollout sums on scripted sources") {
  ScriptedSource still(3.0, [](std::mt19937_64&) { return 0.0; });
  const auto s = rollout_delta_sum(still, 30, 40, 1);
  CHECK(s.mean == 0.0);
  CHECK(s.variance == 0.0);
  CHECK(s.count == 30);

  ScriptedSource falling(100.0, [](std::mt19937_64&) { return -1.0; });
  for (int T : {1, 7, 60}) CHECK(rollout_delta_sum(falling, 30, T, 2).mean == doctest::Approx(-T));

  // Episodes ending after 5 steps contribute nothing afterwards.
  ScriptedSource short_run(100.0, [](std::mt19937_64&) { return -1.0; }, 5);
  CHECK(rollout_delta_sum(short_run, 30, 60, 3).mean == doctest::Approx(-5.0));
}

TEST_CASE("rollout contract violations") {
  ScriptedSource still(0.0, [](std::mt19937_64&) { return 0.0; });
  CHECK_THROWS_AS(rollout_delta_sum(still, 29, 10, 0), std::invalid_argument);
  CHECK_THROWS_AS(rollout_delta_sum(still, 30, 0, 0), std::invalid_argument);

  struct Empty : LossTrajectorySource {
    std::vector<double> run(std::uint64_t, int) override { return {}; }
  } empty;
  CHECK_THROWS_AS(rollout_delta_sum(empty, 30, 10, 0), std::invalid_argument);
}

TEST_CASE("sample variance of a Bernoulli step sum") {
  ScriptedSource src(0.0, bernoulli_step(0.5, 1.0));
  const auto s = rollout_delta_sum(src, 4000, 20, 9);
  // Binomial(20, 0.5): mean 10, variance 5.
  CHECK(s.mean == doctest::Approx(10.0).epsilon(0.02));
  CHECK(s.variance == doctest::Approx(5.0).epsilon(0.08));
}

TEST_CASE("scaling every loss by c scales the range and divides the weight") {
  for (double c : {0.5, 3.0, 40.0}) {
    ScriptedSource best(10.0, bernoulli_step(0.75, -1.0)), worst(0.0, bernoulli_step(0.25, 1.0));
    ScriptedSource best_c(10.0, bernoulli_step(0.75, -1.0), -1, c), worst_c(0.0, bernoulli_step(0.25, 1.0), -1, c);
    const auto w = estimate_base_weight(rollout_delta_sum(best, 50, 30, 4), rollout_delta_sum(worst, 50, 30, 5), 30);
    const auto wc = estimate_base_weight(rollout_delta_sum(best_c, 50, 30, 4), rollout_delta_sum(worst_c, 50, 30, 5), 30);
    CHECK(wc.r_star == doctest::Approx(c * w.r_star));
    CHECK(wc.w_f == doctest::Approx(w.w_f / c));
  }
}

TEST_CASE("constant-rate weight does not depend on the horizon") {
  ScriptedSource down(500.0, [](std::mt19937_64&) { return -2.0; });
  ScriptedSource up(0.0, [](std::mt19937_64&) { return 0.5; });
  for (int T : {5, 30, 150}) {
    const auto w = estimate_base_weight(rollout_delta_sum(down, 30, T, 0), rollout_delta_sum(up, 30, T, 0), T);
    CHECK(w.w_f == doctest::Approx(1.0 / 2.5));
    CHECK(w.confidence_halfwidth == 0.0);
  }
}

TEST_CASE("Monte Carlo weight lands within its halfwidth") {
  TwoPolicies src;
  const int T = 60;
  const auto w = estimate_base_weight(rollout_delta_sum(src.best, 200, T, 100), rollout_delta_sum(src.worst, 200, T, 900), T);
  CHECK(w.episodes_min == 200);
  CHECK(w.episodes_max == 200);
  CHECK(w.confidence_halfwidth > 0.0);
  CHECK(std::abs(w.w_f - 1.0) <= w.confidence_halfwidth);

  // Coverage over repeated estimates should be near 95%.
  int covered = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto e = estimate_base_weight(rollout_delta_sum(src.best, 60, T, 10000 + 1000 * r),
                                        rollout_delta_sum(src.worst, 60, T, 500000 + 1000 * r), T);
    covered += std::abs(e.w_f - 1.0) <= e.confidence_halfwidth ? 1 : 0;
  }
  CHECK(covered >= 0.88 * reps);
}

TEST_CASE("halfwidth shrinks as one over root n") {
  TwoPolicies src;
  const int T = 60;
  const auto small = estimate_base_weight(rollout_delta_sum(src.best, 100, T, 1), rollout_delta_sum(src.worst, 100, T, 2), T);
  const auto large = estimate_base_weight(rollout_delta_sum(src.best, 1600, T, 1), rollout_delta_sum(src.worst, 1600, T, 2), T);
  CHECK(small.confidence_halfwidth / large.confidence_halfwidth == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("weight report fields") {
  std::ostringstream out;
  auto w = compute_base_weight(-40, 20, 60);
  write_weight_report(out, w);
  const std::string s = out.str();
  for (const char* key : {"T 60\n", "e_min -40\n", "e_max 20\n", "r_star 60\n", "w_f 1\n", "confidence_halfwidth 0\n"})
    CHECK(s.find(key) != std::string::npos);
}

TEST_CASE("dominance") {
  auto point = [](double makespan, double loss) {
    ParetoPoint p;
    p.makespan = makespan;
    p.formation_loss = loss;
    return p;
  };
  const auto a = point(10, 0.5), b = point(12, 0.6), c = point(12, 0.4), d = point(10, 0.5);
  CHECK(strictly_dominates(a, b));
  CHECK_FALSE(strictly_dominates(a, c));
  CHECK_FALSE(strictly_dominates(a, d));
  const std::vector<ParetoPoint> front{a, c, d};
  const std::vector<ParetoPoint> beaten{a, b};
  CHECK(is_non_dominated(front));
  CHECK_FALSE(is_non_dominated(beaten));
}

TEST_CASE("exact sweep frontier") {
  const auto f = line_formation(3);
  std::vector<Instance> instances;
  for (int i = 0; i < 3; ++i) instances.push_back(place_formation_instance(generate_map(10, 0.1, 40 + i), f, i));
  const std::vector<double> mult{0, 1, 2, 3};
  ParetoOptions po;
  po.run_learned = false;
  const auto pts = pareto_sweep({}, mult, 1.9, instances, po);
  REQUIRE(pts.size() == 4);
  for (const auto& p : pts) {
    CHECK(p.error.empty());
    CHECK(p.source == "joint_astar");
    CHECK(p.successes == 3);
  }
  CHECK(pts[2].weight == doctest::Approx(3.8));
  CHECK(is_non_dominated(pts));
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].makespan >= pts[0].makespan);
    CHECK(pts[i].formation_loss <= pts[i - 1].formation_loss + 1e-12);
  }
}

TEST_CASE("failed points are recorded and the sweep continues") {
  const auto f = line_formation(3);
  const std::vector<Instance> instances{place_formation_instance(generate_map(10, 0.1, 7), f, 0)};
  const std::vector<double> mult{0, 1};
  const BundleFactory broken = [](double) -> PolicyBundle { throw std::runtime_error("no policy"); };
  const auto pts = pareto_sweep(broken, mult, 1.0, instances);
  REQUIRE(pts.size() == 4);
  CHECK(pts[0].source == "learned");
  CHECK(pts[0].error == "no policy");
  CHECK(pts[1].error.empty());
  CHECK(pts[3].error.empty());

  std::ostringstream out;
  write_pareto_csv(out, pts);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "source,multiplier,weight,makespan,loss,successes,attempts");
  std::getline(in, line);
  CHECK(line == "learned,0,0,-,-,0,0");
}
