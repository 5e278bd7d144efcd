#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maif/env.hpp"

namespace maif {

// Which part of an Observation a tabular key is built from. Every view is a
// deterministic function of the observation (channels plus prior actions).
enum class ObservationView {
  Full,       // every channel value and the prior-action list
  Path,       // per-direction obstacle / cost trend / occupancy and claims, goal flag
  Formation,  // teammates' displacements from formation slots after their committed moves, blocked directions
  Meta,       // teammates' distances from their formation slots, goal flag, free descent count
  Flat,       // union of Path and Formation, for the single-policy baseline
};

const char* to_string(ObservationView v);
ObservationView view_from_string(const std::string& name);

struct Features {
  std::uint64_t key = 0;
  std::vector<float> dense;
};

std::uint64_t observation_key(const Observation& obs, ObservationView view);

// Flattened obstacle, position, cost and formation channels followed by the
// prior-action one-hot encoding.
std::vector<float> dense_features(const Observation& obs);
std::size_t dense_feature_size(int fov, int agent_count);

Features make_features(const Observation& obs, ObservationView view, bool with_dense);

}  // namespace maif
