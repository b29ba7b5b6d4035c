#include "hmbayes/mesh.hpp"

#include <algorithm>
#include <cmath>

#include "hmbayes/error.hpp"

namespace hmb {

double Mesh::area(int element) const {
  const auto& [a, b, c] = elements[static_cast<std::size_t>(element)];
  const Point2& p = nodes[a];
  const Point2& q = nodes[b];
  const Point2& r = nodes[c];
  return 0.5 * ((q.x1 - p.x1) * (r.x2 - p.x2) - (r.x1 - p.x1) * (q.x2 - p.x2));
}

Point2 Mesh::centroid(int element) const {
  const auto& [a, b, c] = elements[static_cast<std::size_t>(element)];
  return {(nodes[a].x1 + nodes[b].x1 + nodes[c].x1) / 3.0,
          (nodes[a].x2 + nodes[b].x2 + nodes[c].x2) / 3.0};
}

std::vector<Point2> Mesh::centroids() const {
  std::vector<Point2> out;
  out.reserve(elements.size());
  for (int e = 0; e < num_elements(); ++e) {
    out.push_back(centroid(e));
  }
  return out;
}

Mesh build_mesh(double width, double height, int nx, int ny) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw ConfigError("mesh dimensions must be positive");
  }
  if (nx < 2 || ny < 2) {
    throw ConfigError("mesh needs at least 2 nodes in each direction");
  }
  Mesh mesh;
  mesh.width = width;
  mesh.height = height;
  mesh.nx = nx;
  mesh.ny = ny;
  mesh.nodes.reserve(static_cast<std::size_t>(nx * ny));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      // Pin the last row/column to the exact extent so areas sum to width * height.
      const double x = (i == nx - 1) ? width : width * i / (nx - 1);
      const double y = (j == ny - 1) ? height : height * j / (ny - 1);
      mesh.nodes.push_back({x, y});
    }
  }
  auto id = [nx](int i, int j) { return j * nx + i; };
  mesh.elements.reserve(static_cast<std::size_t>(2 * (nx - 1) * (ny - 1)));
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      mesh.elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.elements.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  for (int j = 0; j < ny; ++j) {
    mesh.dirichlet_left.push_back(id(0, j));
    mesh.dirichlet_right.push_back(id(nx - 1, j));
  }
  return mesh;
}

std::optional<PointLocation> locate(const Mesh& mesh, const Point2& p) {
  constexpr double kTol = 1e-12;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& [ia, ib, ic] = mesh.elements[static_cast<std::size_t>(e)];
    const Point2& a = mesh.nodes[ia];
    const Point2& b = mesh.nodes[ib];
    const Point2& c = mesh.nodes[ic];
    const double det = (b.x1 - a.x1) * (c.x2 - a.x2) - (c.x1 - a.x1) * (b.x2 - a.x2);
    const double wb = ((p.x1 - a.x1) * (c.x2 - a.x2) - (c.x1 - a.x1) * (p.x2 - a.x2)) / det;
    const double wc = ((b.x1 - a.x1) * (p.x2 - a.x2) - (p.x1 - a.x1) * (b.x2 - a.x2)) / det;
    const double wa = 1.0 - wb - wc;
    if (wa >= -kTol && wb >= -kTol && wc >= -kTol) {
      PointLocation loc;
      loc.element = e;
      loc.weights = {std::max(wa, 0.0), std::max(wb, 0.0), std::max(wc, 0.0)};
      const double sum = loc.weights[0] + loc.weights[1] + loc.weights[2];
      for (double& w : loc.weights) {
        w /= sum;
      }
      return loc;
    }
  }
  return std::nullopt;
}

} // namespace hmb
