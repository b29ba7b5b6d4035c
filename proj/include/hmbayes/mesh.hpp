#pragma once

#include <array>
#include <optional>
#include <vector>

#include "hmbayes/point.hpp"

namespace hmb {

/// Structured triangulation of the rectangle [0, width] x [0, height].
///
/// Nodes are numbered row by row (node = j * nx + i, i along x1). Each grid
/// cell is split along its rising diagonal into two counter-clockwise right
/// triangles. The left edge (x1 = 0) carries the exterior boundary condition,
/// the right edge (x1 = width) the interior one; top and bottom are insulated.
struct Mesh {
  double width = 0.0;
  double height = 0.0;
  int nx = 0;
  int ny = 0;
  std::vector<Point2> nodes;
  std::vector<std::array<int, 3>> elements;
  std::vector<int> dirichlet_left;
  std::vector<int> dirichlet_right;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }

  double area(int element) const;
  Point2 centroid(int element) const;
  std::vector<Point2> centroids() const;
};

struct PointLocation {
  int element = -1;
  std::array<double, 3> weights{};  ///< barycentric weights of the element's nodes
};

// Throws ConfigError for non-positive dimensions or fewer than 2 nodes per direction.
Mesh build_mesh(double width, double height, int nx, int ny);

// Containing triangle of `p`, or nullopt when `p` lies outside the domain.
std::optional<PointLocation> locate(const Mesh& mesh, const Point2& p);

} // namespace hmb
