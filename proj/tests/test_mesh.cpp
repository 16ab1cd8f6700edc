#include "hypercircle/mesh.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace hypercircle;

TEST(IntervalMesh, TwoCells) {
  const auto m = build_interval_mesh(2);
  ASSERT_EQ(m.n_vertices(), 3);
  ASSERT_EQ(m.n_cells(), 2);
  EXPECT_DOUBLE_EQ(m.vertex(1)[0], 0.5);
  EXPECT_EQ(m.cell(0)[0], 0);
  EXPECT_EQ(m.cell(1)[1], 2);
  EXPECT_TRUE(m.is_boundary_vertex(0));
  EXPECT_FALSE(m.is_boundary_vertex(1));
  EXPECT_TRUE(m.is_boundary_vertex(2));
}

TEST(IntervalMesh, SingleCellHasNoInteriorVertex) {
  const auto m = build_interval_mesh(1);
  EXPECT_EQ(m.n_cells(), 1);
  EXPECT_TRUE(m.is_boundary_vertex(0));
  EXPECT_TRUE(m.is_boundary_vertex(1));
}

TEST(IntervalMesh, CellSizeOnLongerInterval) {
  const auto m = build_interval_mesh(4, 0.0, 2.0);
  for (Index c = 0; c < m.n_cells(); ++c) EXPECT_NEAR(m.cell_diameter(c), 0.5, 1e-15);
  EXPECT_NEAR(m.total_measure(), 2.0, 1e-15);
}

TEST(IntervalMesh, RejectsZeroCells) {
  EXPECT_THROW(build_interval_mesh(0), std::invalid_argument);
  EXPECT_THROW(build_interval_mesh(2, 1.0, 1.0), std::invalid_argument);
}

TEST(UnitSquareMesh, OneSquare) {
  const auto m = build_unit_square_mesh(1);
  EXPECT_EQ(m.n_cells(), 2);
  EXPECT_EQ(m.n_vertices(), 4);
  for (Index v = 0; v < 4; ++v) EXPECT_TRUE(m.is_boundary_vertex(v));
}

TEST(UnitSquareMesh, TwoPerSide) {
  const auto m = build_unit_square_mesh(2);
  EXPECT_EQ(m.n_cells(), 8);
  EXPECT_EQ(m.n_vertices(), 9);
  int interior = 0;
  for (Index v = 0; v < m.n_vertices(); ++v) interior += !m.is_boundary_vertex(v);
  EXPECT_EQ(interior, 1);
  for (Index c = 0; c < m.n_cells(); ++c) EXPECT_NEAR(m.cell_measure(c), 1.0 / 8.0, 1e-15);
  EXPECT_NEAR(m.total_measure(), 1.0, 1e-14);
  EXPECT_NEAR(m.h_max(), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(UnitSquareMesh, EulerCharacteristic) {
  for (Index n : {1, 3, 5}) {
    const auto m = build_unit_square_mesh(n);
    EXPECT_EQ(m.n_vertices() - m.n_faces() + m.n_cells(), 1) << "n = " << n;
    int boundary = 0;
    for (Index f = 0; f < m.n_faces(); ++f) boundary += m.is_boundary_face(f);
    EXPECT_EQ(boundary, 4 * n);
  }
}

TEST(UnitSquareMesh, RejectsZeroResolution) {
  EXPECT_THROW(build_unit_square_mesh(0), std::invalid_argument);
}

TEST(Refinement, IntervalKeepsEndpoints) {
  const auto fine = uniform_refine(build_interval_mesh(2));
  EXPECT_EQ(fine.n_cells(), 4);
  double lo = 1.0, hi = 0.0;
  for (const auto& p : fine.vertices()) {
    lo = std::min(lo, p[0]);
    hi = std::max(hi, p[0]);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
  for (Index c = 0; c < fine.n_cells(); ++c) EXPECT_NEAR(fine.cell_measure(c), 0.25, 1e-15);
}

TEST(Refinement, SquareMatchesStructuredMesh) {
  const auto fine = uniform_refine(build_unit_square_mesh(1));
  const auto ref = build_unit_square_mesh(2);
  ASSERT_EQ(fine.n_cells(), ref.n_cells());
  ASSERT_EQ(fine.n_vertices(), ref.n_vertices());
  // Compare cells as sets of vertex coordinates.
  auto key = [](const Mesh<2>& m) {
    std::set<std::set<std::pair<long, long>>> s;
    for (const auto& c : m.cells()) {
      std::set<std::pair<long, long>> cell;
      for (Index v : c)
        cell.insert({std::lround(4 * m.vertex(v)[0]), std::lround(4 * m.vertex(v)[1])});
      s.insert(cell);
    }
    return s;
  };
  EXPECT_EQ(key(fine), key(ref));
}

TEST(Refinement, ParentsBisectEdges) {
  const auto coarse = build_unit_square_mesh(2);
  const auto r = refine_with_parents(coarse);
  for (Index v = 0; v < r.fine.n_vertices(); ++v) {
    const auto [a, b] = r.vertex_parents[v];
    const Eigen::Vector2d mid = 0.5 * (coarse.vertex(a) + coarse.vertex(b));
    EXPECT_NEAR((r.fine.vertex(v) - mid).norm(), 0.0, 1e-15);
  }
}

TEST(Patches, IntervalMiddleVertex) {
  const auto patches = vertex_patches(build_interval_mesh(2));
  const auto& p = patches[1];
  EXPECT_EQ(p.cells, (std::vector<Index>{0, 1}));
  EXPECT_TRUE(p.is_interior);
  EXPECT_NEAR(p.diameter, 1.0, 1e-15);
  EXPECT_FALSE(patches[0].is_interior);
  EXPECT_EQ(patches[0].cells.size(), 1u);
}

TEST(Patches, SquareCenterVertex) {
  // All diagonals run the same way, so the center vertex touches 6 triangles.
  const auto m = build_unit_square_mesh(2);
  const auto patches = vertex_patches(m);
  const auto& p = patches[4];
  EXPECT_TRUE(p.is_interior);
  EXPECT_EQ(p.cells.size(), 6u);
  EXPECT_NEAR(p.diameter, std::sqrt(2.0), 1e-15);
  double area = 0.0;
  for (Index c : p.cells) area += m.cell_measure(c);
  EXPECT_NEAR(area, 0.75, 1e-15);
}

TEST(Patches, SquareCorners) {
  const auto patches = vertex_patches(build_unit_square_mesh(1));
  EXPECT_EQ(patches[0].cells.size(), 2u);  // on the diagonal
  EXPECT_EQ(patches[1].cells.size(), 1u);
  EXPECT_EQ(patches[2].cells.size(), 1u);
  EXPECT_EQ(patches[3].cells.size(), 2u);
  for (const auto& p : patches) EXPECT_FALSE(p.is_interior);
}

TEST(Quality, ShapeRegularityIsStableUnderRefinement) {
  auto m1 = build_interval_mesh(3);
  EXPECT_NEAR(mesh_quality(m1).shape_regularity, 2.0, 1e-14);
  auto m2 = build_unit_square_mesh(2);
  const double q0 = mesh_quality(m2).shape_regularity;
  EXPECT_GE(q0, 2.0);
  for (int r = 0; r < 3; ++r) {
    m2 = uniform_refine(m2);
    EXPECT_NEAR(mesh_quality(m2).shape_regularity, q0, 1e-12);
  }
}

TEST(Validation, DegenerateTriangle) {
  std::vector<Mesh<2>::Point> v{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_THROW(Mesh<2>(v, {{0, 1, 2}}), std::invalid_argument);
}

TEST(Validation, OrphanVertex) {
  std::vector<Mesh<1>::Point> v(3);
  v[0][0] = 0.0;
  v[1][0] = 1.0;
  v[2][0] = 2.0;
  EXPECT_THROW(Mesh<1>(v, {{0, 1}}), std::invalid_argument);
}

TEST(Validation, HangingVertex) {
  // Two triangles on the left share the edge (0,0)-(0.5,0.5)-... with a midpoint
  // that the right triangle does not see.
  std::vector<Mesh<2>::Point> v{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  std::vector<Mesh<2>::Cell> c{{0, 1, 2}, {0, 4, 3}, {4, 2, 3}};
  EXPECT_THROW(Mesh<2>(v, c), std::invalid_argument);
}

TEST(Validation, OverfullFace) {
  std::vector<Mesh<2>::Point> v{{0, 0}, {1, 0}, {0, 1}, {0, -1}, {1, 1}};
  std::vector<Mesh<2>::Cell> c{{0, 1, 2}, {0, 1, 3}, {0, 1, 4}};
  EXPECT_THROW(Mesh<2>(v, c), std::invalid_argument);
}

TEST(Locate, FindsContainingCell) {
  const auto m = build_unit_square_mesh(4);
  const Eigen::Vector2d x(0.3, 0.7);
  const auto [c, b] = locate(m, x);
  EXPECT_GE(b.minCoeff(), 0.0);
  EXPECT_NEAR((m.geometry(c).map(b) - x).norm(), 0.0, 1e-14);
  EXPECT_THROW(locate(m, Eigen::Vector2d(1.5, 0.5)), std::invalid_argument);
}

TEST(TextIo, RoundTrip) {
  const auto m = uniform_refine(build_unit_square_mesh(2));
  std::stringstream ss;
  write_mesh_text(m, ss);
  const auto back = read_mesh_text<2>(ss);
  ASSERT_EQ(back.n_vertices(), m.n_vertices());
  ASSERT_EQ(back.cells(), m.cells());
  for (Index v = 0; v < m.n_vertices(); ++v) EXPECT_EQ(back.vertex(v), m.vertex(v));
}

TEST(TextIo, RejectsWrongDimensionAndTruncation) {
  std::stringstream a("1 2 1\n0\n1\n0 1\n");
  EXPECT_THROW(read_mesh_text<2>(a), std::invalid_argument);
  std::stringstream b("1 3 2\n0\n0.5\n1\n0 1\n");
  EXPECT_THROW(read_mesh_text<1>(b), std::invalid_argument);
}
