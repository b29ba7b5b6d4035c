#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "hmbayes/error.hpp"
#include "hmbayes/mesh.hpp"

using namespace hmb;

namespace {

double signed_area(const Mesh& m, int e) {
  const auto& el = m.elements[static_cast<std::size_t>(e)];
  const Point2& a = m.nodes[static_cast<std::size_t>(el[0])];
  const Point2& b = m.nodes[static_cast<std::size_t>(el[1])];
  const Point2& c = m.nodes[static_cast<std::size_t>(el[2])];
  return 0.5 * ((b.x1 - a.x1) * (c.x2 - a.x2) - (c.x1 - a.x1) * (b.x2 - a.x2));
}

} // namespace

TEST_CASE("unit square with 2 x 2 nodes") {
  const Mesh m = build_mesh(1.0, 1.0, 2, 2);
  CHECK(m.num_nodes() == 4);
  CHECK(m.num_elements() == 2);
  CHECK(m.area(0) + m.area(1) == doctest::Approx(1.0));
}

TEST_CASE("default wall mesh has 80 nodes and 120 triangles") {
  const Mesh m = build_mesh(0.5, 0.06, 16, 5);
  CHECK(m.num_nodes() == 80);
  CHECK(m.num_elements() == 120);
  CHECK(m.dirichlet_left.size() == 5);
  CHECK(m.dirichlet_right.size() == 5);
  double total = 0.0;
  for (int e = 0; e < m.num_elements(); ++e) {
    CHECK(signed_area(m, e) > 0.0);
    total += m.area(e);
  }
  CHECK(total == doctest::Approx(0.5 * 0.06).epsilon(1e-12));
  for (int n : m.dirichlet_left) {
    CHECK(m.nodes[static_cast<std::size_t>(n)].x1 == 0.0);
  }
  for (int n : m.dirichlet_right) {
    CHECK(m.nodes[static_cast<std::size_t>(n)].x1 == 0.5);
  }
}

TEST_CASE("every interior edge is shared by exactly two triangles") {
  const Mesh m = build_mesh(0.5, 0.06, 6, 4);
  std::map<std::pair<int, int>, int> count;
  for (const auto& el : m.elements) {
    for (int k = 0; k < 3; ++k) {
      int a = el[static_cast<std::size_t>(k)];
      int b = el[static_cast<std::size_t>((k + 1) % 3)];
      count[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  int boundary = 0;
  for (const auto& [edge, n] : count) {
    CHECK(n <= 2);
    boundary += n == 1 ? 1 : 0;
  }
  CHECK(boundary == 2 * (6 - 1) + 2 * (4 - 1));
}

TEST_CASE("invalid mesh requests") {
  CHECK_THROWS_AS(build_mesh(0.0, 1.0, 3, 3), ConfigError);
  CHECK_THROWS_AS(build_mesh(1.0, 1.0, 1, 3), ConfigError);
}

TEST_CASE("point location and barycentric weights") {
  const Mesh m = build_mesh(0.5, 0.06, 16, 5);
  const auto at_node = locate(m, m.nodes[17]);
  REQUIRE(at_node.has_value());
  const auto& el = m.elements[static_cast<std::size_t>(at_node->element)];
  double w_node = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (el[static_cast<std::size_t>(k)] == 17) {
      w_node = at_node->weights[static_cast<std::size_t>(k)];
    }
  }
  CHECK(w_node == 1.0);

  const Point2 c = m.centroid(7);
  const auto at_centroid = locate(m, c);
  REQUIRE(at_centroid.has_value());
  CHECK(at_centroid->element == 7);
  for (double w : at_centroid->weights) {
    CHECK(w == doctest::Approx(1.0 / 3.0));
  }
  CHECK_FALSE(locate(m, {0.6, 0.03}).has_value());
  CHECK_FALSE(locate(m, {0.2, -0.001}).has_value());
}
