#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "maif/grid.hpp"

namespace maif {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Ordered agent coordinates; index i is agent i.
using Positions = std::vector<Vec2>;

Positions to_positions(std::span<const Cell> cells);

// Row-major 2x2 matrix applied to row vectors: p' = p * m.
using Mat2 = std::array<std::array<double, 2>, 2>;

Mat2 rotation_matrix(double theta);

struct AlignmentResult {
  double theta = 0.0;
  Mat2 rotation{{{1.0, 0.0}, {0.0, 1.0}}};
  Vec2 translation;
  double loss = 0.0;
};

/// Rigid least-squares registration of x1 onto x2.
///
/// Finds the rotation M(theta) and translation gamma minimizing
/// ||x2 - x1 * M(theta) - 1 * gamma^T||^2 (squared Frobenius norm). Both point
/// sets are centered before the rotation sums are taken, so the result is the
/// exact optimum regardless of where either set sits in the plane. When the
/// centered sums both vanish every angle is optimal and theta is 0.
///
/// Throws std::invalid_argument when the sets differ in length or hold fewer
/// than two points.
AlignmentResult align(std::span<const Vec2> x1, std::span<const Vec2> x2);

double formation_loss(std::span<const Vec2> x1, std::span<const Vec2> x2);

// Change in loss to `desired` between two consecutive configurations.
double delta_loss(std::span<const Vec2> prev, std::span<const Vec2> next, std::span<const Vec2> desired);

// Desired geometric arrangement as integer cell offsets, one per agent.
struct FormationSpec {
  std::string name;
  std::vector<Cell> offsets;

  int agent_count() const { return static_cast<int>(offsets.size()); }
  Positions points() const { return to_positions(offsets); }
};

FormationSpec line_formation(int agents);
FormationSpec column_formation(int agents);
FormationSpec wedge_formation(int agents);
FormationSpec square_formation();
// "line", "column", "wedge" or "square".
FormationSpec formation_by_name(const std::string& name, int agents);

double formation_loss(std::span<const Cell> positions, const FormationSpec& desired);

}  // namespace maif
