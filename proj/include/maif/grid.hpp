#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace maif {

// Column x grows to the right, row y grows downward.
struct Cell {
  int x = 0;
  int y = 0;

  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

constexpr int manhattan(Cell a, Cell b) {
  return (a.x > b.x ? a.x - b.x : b.x - a.x) + (a.y > b.y ? a.y - b.y : b.y - a.y);
}

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };

inline constexpr int kActionCount = 5;
inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay};

constexpr Cell apply(Cell c, Action a) {
  switch (a) {
    case Action::Up: return {c.x, c.y - 1};
    case Action::Down: return {c.x, c.y + 1};
    case Action::Left: return {c.x - 1, c.y};
    case Action::Right: return {c.x + 1, c.y};
    case Action::Stay: return c;
  }
  return c;
}

const char* to_string(Action a);

// Small bitmask over the five primitive actions.
class ActionSet {
 public:
  constexpr ActionSet() = default;
  static constexpr ActionSet all() { return ActionSet(0x1F); }
  static constexpr ActionSet only(Action a) { return ActionSet(bit(a)); }
  static constexpr ActionSet from_bits(std::uint8_t bits) { return ActionSet(bits & 0x1F); }

  constexpr bool contains(Action a) const { return (bits_ & bit(a)) != 0; }
  constexpr void insert(Action a) { bits_ |= bit(a); }
  constexpr void erase(Action a) { bits_ &= static_cast<std::uint8_t>(~bit(a)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const {
    int n = 0;
    for (auto a : kAllActions) n += contains(a) ? 1 : 0;
    return n;
  }
  constexpr std::uint8_t bits() const { return bits_; }
  std::vector<Action> to_vector() const;

  friend constexpr bool operator==(ActionSet, ActionSet) = default;

 private:
  constexpr explicit ActionSet(std::uint8_t bits) : bits_(bits) {}
  static constexpr std::uint8_t bit(Action a) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(a));
  }
  std::uint8_t bits_ = 0;
};

// Inclusive cell rectangle.
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  constexpr bool contains(Cell c) const { return c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1; }
  constexpr int width() const { return x1 - x0 + 1; }
  constexpr int height() const { return y1 - y0 + 1; }
  friend constexpr bool operator==(const Rect&, const Rect&) = default;
};

class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public MapError {
 public:
  using MapError::MapError;
};

class InvalidGoalError : public MapError {
 public:
  using MapError::MapError;
};

class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return width_ > height_ ? width_ : height_; }
  int cell_count() const { return width_ * height_; }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool is_obstacle(Cell c) const { return cells_[index(c)] != 0; }
  // False for obstacles and for cells outside the map.
  bool is_free(Cell c) const { return in_bounds(c) && cells_[index(c)] == 0; }
  void set_obstacle(Cell c, bool obstacle) { cells_[index(c)] = obstacle ? 1 : 0; }

  int index(Cell c) const { return c.y * width_ + c.x; }
  Cell cell_at(int idx) const { return {idx % width_, idx / width_}; }

  int obstacle_count() const;

  Rect start_region;
  Rect goal_region;

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Side of the square start/goal regions used by the benchmark presets.
int default_region_side(int map_size);
void assign_default_regions(GridMap& map);

// Longest straight horizontal or vertical run of obstacle cells.
int max_wall_length(const GridMap& map);

inline constexpr int kDefaultFov = 9;
inline constexpr int kDefaultMaxWall = kDefaultFov / 2;

struct MapGenOptions {
  int max_wall = kDefaultMaxWall;
  int retries = 32;
};

// Square map of side `size` with exactly round(density * size^2) obstacles,
// obstacle-free start/goal regions and start-to-goal connectivity.
GridMap generate_map(int size, double density, std::uint64_t seed, const MapGenOptions& opts = {});

// Breadth-first distances to a fixed goal.
class CostMap {
 public:
  static constexpr int kUnreachable = std::numeric_limits<int>::max();

  CostMap() = default;
  CostMap(int width, int height, Cell goal, std::vector<int> dist)
      : width_(width), height_(height), goal_(goal), dist_(std::move(dist)) {}

  Cell goal() const { return goal_; }
  int width() const { return width_; }
  int height() const { return height_; }
  // Out-of-map cells read as unreachable.
  int at(Cell c) const {
    if (c.x < 0 || c.y < 0 || c.x >= width_ || c.y >= height_) return kUnreachable;
    return dist_[c.y * width_ + c.x];
  }
  bool reachable(Cell c) const { return at(c) != kUnreachable; }

 private:
  int width_ = 0;
  int height_ = 0;
  Cell goal_;
  std::vector<int> dist_;
};

CostMap compute_cost_map(const GridMap& map, Cell goal);

// Text map format: "width height", then rows of '.'/'#', then optional
// "start x0 y0 x1 y1" and "goal x0 y0 x1 y1" lines.
GridMap read_map(std::istream& in);
void write_map(std::ostream& out, const GridMap& map);
GridMap load_map(const std::string& path);
void save_map(const std::string& path, const GridMap& map);

}  // namespace maif

template <>
struct std::hash<maif::Cell> {
  std::size_t operator()(const maif::Cell& c) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x)) << 32) |
                                      static_cast<std::uint32_t>(c.y));
  }
};
