#include "maif/features.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <stdexcept>

#include "maif/coordination.hpp"

namespace maif {

const char* to_string(ObservationView v) {
  switch (v) {
    case ObservationView::Full: return "full";
    case ObservationView::Path: return "path";
    case ObservationView::Formation: return "formation";
    case ObservationView::Meta: return "meta";
    case ObservationView::Flat: return "flat";
  }
  return "?";
}

ObservationView view_from_string(const std::string& name) {
  for (auto v : {ObservationView::Full, ObservationView::Path, ObservationView::Formation, ObservationView::Meta,
                 ObservationView::Flat})
    if (name == to_string(v)) return v;
  throw std::invalid_argument("unknown observation view '" + name + "'");
}

namespace {

class KeyHasher {
 public:
  void add(std::int64_t v) {
    auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h_ ^= (u >> (8 * i)) & 0xFFU;
      h_ *= 1099511628211ULL;
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

constexpr std::array<Action, 4> kMoves = {Action::Up, Action::Down, Action::Left, Action::Right};
constexpr int kNotVisible = 1000;

struct Mate {
  int id = -1;
  bool visible = false;
  Cell now;   // offset relative to the observer
  bool decided = false;
  Cell next;  // offset after its committed action (== now if undecided)
};

std::vector<Mate> teammates(const Observation& o) {
  std::vector<Mate> mates(static_cast<std::size_t>(o.agent_count));
  for (int i = 0; i < o.agent_count; ++i) mates[i].id = i;
  const int r = o.radius();
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int id = o.agent_at(dx, dy);
      if (id < 0 || id >= o.agent_count) continue;
      mates[id].visible = true;
      mates[id].now = {dx, dy};
      mates[id].next = {dx, dy};
    }
  }
  for (const PriorAction& p : o.prior) {
    if (p.agent < 0 || p.agent >= o.agent_count) continue;
    Mate& m = mates[p.agent];
    m.decided = true;
    if (m.visible) m.next = apply(m.now, p.action);
  }
  return mates;
}

bool blocked(const Observation& o, Cell off) { return o.obstacle[o.slot(off.x, off.y)] > 0.5f; }

// 0 blocked; otherwise trend * 8 + occupancy.
int direction_code(const Observation& o, const std::vector<Mate>& mates, Cell n) {
  if (blocked(o, n)) return 0;
  const float c0 = o.cost[o.slot(0, 0)];
  const float c = o.cost[o.slot(n.x, n.y)];
  const int trend = c < c0 ? 1 : (c > c0 ? 2 : 3);
  int occ = 0;
  for (const Mate& m : mates) {
    if (m.id == o.agent || !m.visible) continue;
    if (m.decided && m.next == n && occ < 1) occ = 1;  // claimed
    if (m.now == n) {
      if (!m.decided) occ = std::max(occ, 2);
      else if (m.next == Cell{0, 0}) occ = 3;           // would swap with me
      else if (m.next != n && occ == 0) occ = 4;        // leaving
    }
  }
  return trend * 8 + occ;
}

void add_path_part(KeyHasher& h, const Observation& o, const std::vector<Mate>& mates) {
  h.add(o.cost[o.slot(0, 0)] == 0.0f ? 1 : 0);
  bool claimed_me = false;
  for (const Mate& m : mates)
    if (m.id != o.agent && m.visible && m.decided && m.next == Cell{0, 0}) claimed_me = true;
  h.add(claimed_me ? 1 : 0);
  // Uphill moves are always clipped, so their occupancy does not matter.
  for (Action a : kMoves) {
    const int code = direction_code(o, mates, apply(Cell{0, 0}, a));
    h.add(code / 8 == 2 ? 16 : code);
  }
}

// Per teammate: Manhattan distance from its current offset to the nearest
// formation-mask cell other than my own, capped at 3; -1 when not visible.
void add_deviations(KeyHasher& h, const Observation& o, const std::vector<Mate>& mates) {
  const int r = o.radius();
  for (const Mate& m : mates) {
    if (m.id == o.agent) continue;
    if (!m.visible) {
      h.add(-1);
      continue;
    }
    int best = 3;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if ((dx != 0 || dy != 0) && o.formation[o.slot(dx, dy)] > 0.5f)
          best = std::min(best, std::abs(m.now.x - dx) + std::abs(m.now.y - dy));
    h.add(best);
  }
}

// Vector from `at` to the nearest formation-mask cell other than my own,
// clipped to [-2, 2] per axis.
Cell nearest_slot(const Observation& o, Cell at) {
  const int r = o.radius();
  Cell best{0, 0};
  int best_d = 1 << 20;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if ((dx == 0 && dy == 0) || o.formation[o.slot(dx, dy)] < 0.5f) continue;
      const int d = std::abs(dx - at.x) + std::abs(dy - at.y);
      if (d < best_d) {
        best_d = d;
        best = {dx - at.x, dy - at.y};
      }
    }
  }
  return {std::clamp(best.x, -2, 2), std::clamp(best.y, -2, 2)};
}

// Blocked directions, teammates on or next to my cell after their committed moves, and
// each teammate's displacement from its nearest formation slot.
void add_formation_part(KeyHasher& h, const Observation& o, const std::vector<Mate>& mates) {
  int blocked_mask = 0;
  int mate_mask = 0;
  for (int i = 0; i < 4; ++i) {
    const Cell n = apply(Cell{0, 0}, kMoves[i]);
    if (blocked(o, n)) blocked_mask |= 1 << i;
    for (const Mate& m : mates)
      if (m.id != o.agent && m.visible && m.next == n) mate_mask |= 1 << i;
  }
  for (const Mate& m : mates)
    if (m.id != o.agent && m.visible && m.decided && m.next == Cell{0, 0}) mate_mask |= 1 << 4;
  h.add(blocked_mask);
  h.add(mate_mask);
  for (const Mate& m : mates) {
    if (m.id == o.agent) continue;
    if (!m.visible) {
      h.add(kNotVisible);
      continue;
    }
    const Cell v = nearest_slot(o, m.next);
    h.add(v.x);
    h.add(v.y);
    h.add(m.decided ? 1 : 0);
  }
}

}  // namespace

std::uint64_t observation_key(const Observation& o, ObservationView view) {
  KeyHasher h;
  h.add(static_cast<int>(view));
  if (view == ObservationView::Full) {
    h.add(o.agent);
    for (const auto* channel : {&o.obstacle, &o.position, &o.cost, &o.formation})
      for (float v : *channel) h.add(std::bit_cast<std::uint32_t>(v));
    for (const auto& p : o.prior) {
      h.add(p.agent);
      h.add(static_cast<int>(p.action));
    }
    return h.value();
  }

  const auto mates = teammates(o);
  switch (view) {
    case ObservationView::Path:
      add_path_part(h, o, mates);
      break;
    case ObservationView::Formation:
      h.add(o.agent);
      add_formation_part(h, o, mates);
      break;
    case ObservationView::Meta: {
      h.add(o.agent);
      add_deviations(h, o, mates);
      // Distance to the goal stays out of the key: with it the meta policy learns
      // to farm the toward-goal reward by alternating formation drift and path steps.
      h.add(o.cost[o.slot(0, 0)] == 0.0f ? 1 : 0);
      int free_descents = 0;
      for (Action a : kMoves) {
        const int code = direction_code(o, mates, apply(Cell{0, 0}, a));
        if (code / 8 == 1 && code % 8 == 0) ++free_descents;
      }
      h.add(free_descents);
      break;
    }
    case ObservationView::Flat:
      h.add(o.agent);
      add_path_part(h, o, mates);
      add_formation_part(h, o, mates);
      break;
    case ObservationView::Full:
      break;
  }
  return h.value();
}

std::size_t dense_feature_size(int fov, int agent_count) {
  return static_cast<std::size_t>(4 * fov * fov + kPriorSlotWidth * agent_count);
}

std::vector<float> dense_features(const Observation& o) {
  std::vector<float> out;
  out.reserve(dense_feature_size(o.fov, o.agent_count));
  for (const auto* channel : {&o.obstacle, &o.position, &o.cost, &o.formation})
    out.insert(out.end(), channel->begin(), channel->end());
  const auto prior = encode_prior_actions(o.prior, o.agent_count);
  out.insert(out.end(), prior.begin(), prior.end());
  return out;
}

Features make_features(const Observation& obs, ObservationView view, bool with_dense) {
  Features f;
  f.key = observation_key(obs, view);
  if (with_dense) f.dense = dense_features(obs);
  return f;
}

}  // namespace maif
