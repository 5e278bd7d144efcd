#include "maif/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace maif {

const char* to_string(Action a) {
  switch (a) {
    case Action::Up: return "Up";
    case Action::Down: return "Down";
    case Action::Left: return "Left";
    case Action::Right: return "Right";
    case Action::Stay: return "Stay";
  }
  return "?";
}

std::vector<Action> ActionSet::to_vector() const {
  std::vector<Action> out;
  for (auto a : kAllActions)
    if (contains(a)) out.push_back(a);
  return out;
}

GridMap::GridMap(int width, int height)
    : width_(width), height_(height), cells_(static_cast<std::size_t>(width) * height, 0) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("GridMap: dimensions must be positive");
}

int GridMap::obstacle_count() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

int default_region_side(int map_size) { return map_size <= 32 ? 5 : 10; }

void assign_default_regions(GridMap& map) {
  const int side = std::min({default_region_side(map.size()), map.width(), map.height()});
  map.start_region = Rect{0, 0, side - 1, side - 1};
  map.goal_region = Rect{map.width() - side, map.height() - side, map.width() - 1, map.height() - 1};
}

int max_wall_length(const GridMap& map) {
  int best = 0;
  for (int y = 0; y < map.height(); ++y) {
    int run = 0;
    for (int x = 0; x < map.width(); ++x) {
      run = map.is_obstacle({x, y}) ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  for (int x = 0; x < map.width(); ++x) {
    int run = 0;
    for (int y = 0; y < map.height(); ++y) {
      run = map.is_obstacle({x, y}) ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  return best;
}

namespace {

int run_through(const GridMap& map, Cell c, int dx, int dy) {
  int n = 0;
  for (Cell p{c.x + dx, c.y + dy}; map.in_bounds(p) && map.is_obstacle(p); p = {p.x + dx, p.y + dy}) ++n;
  return n;
}

bool placement_keeps_walls(const GridMap& map, Cell c, int max_wall) {
  const int horizontal = 1 + run_through(map, c, -1, 0) + run_through(map, c, 1, 0);
  const int vertical = 1 + run_through(map, c, 0, -1) + run_through(map, c, 0, 1);
  return horizontal <= max_wall && vertical <= max_wall;
}

bool regions_connected(const GridMap& map) {
  const Cell from{map.start_region.x0, map.start_region.y0};
  const Cell to{map.goal_region.x0, map.goal_region.y0};
  if (!map.is_free(from) || !map.is_free(to)) return false;
  return compute_cost_map(map, to).reachable(from);
}

}  // namespace

GridMap generate_map(int size, double density, std::uint64_t seed, const MapGenOptions& opts) {
  if (size < 10) throw std::invalid_argument("generate_map: size must be >= 10");
  if (!(density >= 0.0 && density < 0.5)) throw std::invalid_argument("generate_map: density must lie in [0, 0.5)");

  const auto target = static_cast<int>(std::lround(density * size * size));

  GridMap blank(size, size);
  assign_default_regions(blank);
  std::vector<int> candidates;
  for (int i = 0; i < blank.cell_count(); ++i) {
    const Cell c = blank.cell_at(i);
    if (!blank.start_region.contains(c) && !blank.goal_region.contains(c)) candidates.push_back(i);
  }
  if (target > static_cast<int>(candidates.size()))
    throw GenerationError("generate_map: density too high for the free area outside start/goal regions");

  for (int attempt = 0; attempt < opts.retries; ++attempt) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(attempt));
    GridMap map = blank;
    auto order = candidates;
    std::shuffle(order.begin(), order.end(), rng);
    int placed = 0;
    for (int idx : order) {
      if (placed == target) break;
      const Cell c = map.cell_at(idx);
      if (!placement_keeps_walls(map, c, opts.max_wall)) continue;
      map.set_obstacle(c, true);
      ++placed;
    }
    if (placed == target && regions_connected(map)) return map;
  }
  throw GenerationError("generate_map: no valid map after " + std::to_string(opts.retries) + " attempts");
}

CostMap compute_cost_map(const GridMap& map, Cell goal) {
  if (!map.is_free(goal)) throw InvalidGoalError("compute_cost_map: goal is not a free cell");
  std::vector<int> dist(static_cast<std::size_t>(map.cell_count()), CostMap::kUnreachable);
  std::deque<Cell> frontier{goal};
  dist[map.index(goal)] = 0;
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    const int next = dist[map.index(c)] + 1;
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      const Cell n = apply(c, a);
      if (!map.is_free(n) || dist[map.index(n)] != CostMap::kUnreachable) continue;
      dist[map.index(n)] = next;
      frontier.push_back(n);
    }
  }
  return CostMap(map.width(), map.height(), goal, std::move(dist));
}

GridMap read_map(std::istream& in) {
  int width = 0;
  int height = 0;
  if (!(in >> width >> height) || width <= 0 || height <= 0) throw MapError("map: bad header");
  GridMap map(width, height);
  std::string row;
  for (int y = 0; y < height; ++y) {
    if (!(in >> row) || static_cast<int>(row.size()) != width)
      throw MapError("map: row " + std::to_string(y) + " has wrong width");
    for (int x = 0; x < width; ++x) {
      if (row[x] == '#') map.set_obstacle({x, y}, true);
      else if (row[x] != '.') throw MapError("map: unexpected character in row " + std::to_string(y));
    }
  }
  assign_default_regions(map);
  std::string tag;
  while (in >> tag) {
    Rect r;
    if (!(in >> r.x0 >> r.y0 >> r.x1 >> r.y1)) throw MapError("map: malformed region line");
    if (tag == "start") map.start_region = r;
    else if (tag == "goal") map.goal_region = r;
    else throw MapError("map: unknown trailing line '" + tag + "'");
  }
  return map;
}

void write_map(std::ostream& out, const GridMap& map) {
  out << map.width() << ' ' << map.height() << '\n';
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out << (map.is_obstacle({x, y}) ? '#' : '.');
    out << '\n';
  }
  const auto& s = map.start_region;
  const auto& g = map.goal_region;
  out << "start " << s.x0 << ' ' << s.y0 << ' ' << s.x1 << ' ' << s.y1 << '\n';
  out << "goal " << g.x0 << ' ' << g.y0 << ' ' << g.x1 << ' ' << g.y1 << '\n';
}

GridMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MapError("cannot open map file " + path);
  return read_map(in);
}

void save_map(const std::string& path, const GridMap& map) {
  std::ofstream out(path);
  if (!out) throw MapError("cannot write map file " + path);
  write_map(out, map);
}

}  // namespace maif
