#include "maif/formation.hpp"

#include <cmath>
#include <stdexcept>

namespace maif {

Positions to_positions(std::span<const Cell> cells) {
  Positions out;
  out.reserve(cells.size());
  for (const Cell& c : cells) out.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
  return out;
}

Mat2 rotation_matrix(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return Mat2{{{c, -s}, {s, c}}};
}

namespace {

Vec2 centroid(std::span<const Vec2> pts) {
  Vec2 sum;
  for (const Vec2& p : pts) {
    sum.x += p.x;
    sum.y += p.y;
  }
  const double k = static_cast<double>(pts.size());
  return {sum.x / k, sum.y / k};
}

Vec2 mul(const Vec2& p, const Mat2& m) {
  return {p.x * m[0][0] + p.y * m[1][0], p.x * m[0][1] + p.y * m[1][1]};
}

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("formation: point sets differ in length");
  if (a < 2) throw std::invalid_argument("formation: at least two points are required");
}

}  // namespace

AlignmentResult align(std::span<const Vec2> x1, std::span<const Vec2> x2) {
  check_pair(x1.size(), x2.size());
  const Vec2 c1 = centroid(x1);
  const Vec2 c2 = centroid(x2);

  double num = 0.0;  // sum (w*y - z*x)
  double den = 0.0;  // sum (w*x + z*y)
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double x = x1[i].x - c1.x;
    const double y = x1[i].y - c1.y;
    const double w = x2[i].x - c2.x;
    const double z = x2[i].y - c2.y;
    num += w * y - z * x;
    den += w * x + z * y;
  }

  AlignmentResult r;
  r.theta = (num == 0.0 && den == 0.0) ? 0.0 : std::atan2(num, den);
  r.rotation = rotation_matrix(r.theta);
  const Vec2 rc1 = mul(c1, r.rotation);
  r.translation = {c2.x - rc1.x, c2.y - rc1.y};

  double loss = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const Vec2 p = mul(x1[i], r.rotation);
    const double dx = x2[i].x - p.x - r.translation.x;
    const double dy = x2[i].y - p.y - r.translation.y;
    loss += dx * dx + dy * dy;
  }
  r.loss = loss;
  return r;
}

double formation_loss(std::span<const Vec2> x1, std::span<const Vec2> x2) { return align(x1, x2).loss; }

double delta_loss(std::span<const Vec2> prev, std::span<const Vec2> next, std::span<const Vec2> desired) {
  if (prev.size() != next.size()) throw std::invalid_argument("delta_loss: position lists differ in length");
  return formation_loss(next, desired) - formation_loss(prev, desired);
}

FormationSpec line_formation(int agents) {
  FormationSpec f{"line", {}};
  for (int i = 0; i < agents; ++i) f.offsets.push_back({i, 0});
  return f;
}

FormationSpec column_formation(int agents) {
  FormationSpec f{"column", {}};
  for (int i = 0; i < agents; ++i) f.offsets.push_back({0, i});
  return f;
}

FormationSpec wedge_formation(int agents) {
  FormationSpec f{"wedge", {{0, 0}}};
  for (int i = 1; static_cast<int>(f.offsets.size()) < agents; ++i) {
    f.offsets.push_back({-i, i});
    if (static_cast<int>(f.offsets.size()) < agents) f.offsets.push_back({i, i});
  }
  return f;
}

FormationSpec square_formation() { return FormationSpec{"square", {{0, 0}, {1, 0}, {0, 1}, {1, 1}}}; }

FormationSpec formation_by_name(const std::string& name, int agents) {
  if (agents < 2) throw std::invalid_argument("formation: at least two agents are required");
  if (name == "line") return line_formation(agents);
  if (name == "column") return column_formation(agents);
  if (name == "wedge") return wedge_formation(agents);
  if (name == "square") {
    if (agents != 4) throw std::invalid_argument("formation: square needs exactly 4 agents");
    return square_formation();
  }
  throw std::invalid_argument("formation: unknown shape '" + name + "'");
}

double formation_loss(std::span<const Cell> positions, const FormationSpec& desired) {
  const Positions current = to_positions(positions);
  const Positions target = desired.points();
  return formation_loss(current, target);
}

}  // namespace maif
