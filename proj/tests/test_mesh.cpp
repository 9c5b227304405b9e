#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nanochan/fem.hpp"
#include "nanochan/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

using namespace nanochan;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct FaceCount {
  std::map<std::array<int, 3>, int> count;
  void add(int a, int b, int c) {
    std::array<int, 3> f{a, b, c};
    std::sort(f.begin(), f.end());
    ++count[f];
  }
};

/// V - E + F - T for a tet mesh; equals 1 for a topological ball.
long euler_characteristic(const Mesh& m) {
  std::set<std::array<int, 2>> edges;
  FaceCount faces;
  for (const auto& t : m.tets) {
    for (const auto& e : kTetEdges) {
      int a = t[e[0]], b = t[e[1]];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
    faces.add(t[0], t[1], t[2]);
    faces.add(t[0], t[1], t[3]);
    faces.add(t[0], t[2], t[3]);
    faces.add(t[1], t[2], t[3]);
  }
  return static_cast<long>(m.n_vertices()) - static_cast<long>(edges.size()) +
         static_cast<long>(faces.count.size()) - static_cast<long>(m.n_tets());
}

/// Every interior face shared by exactly 2 tets, every boundary face by 1,
/// and the boundary face set must coincide with mesh.boundary_facets.
void check_conformity(const Mesh& m) {
  FaceCount faces;
  for (const auto& t : m.tets) {
    faces.add(t[0], t[1], t[2]);
    faces.add(t[0], t[1], t[3]);
    faces.add(t[0], t[2], t[3]);
    faces.add(t[1], t[2], t[3]);
  }
  size_t n_boundary = 0;
  for (const auto& [f, c] : faces.count) {
    REQUIRE(c >= 1);
    REQUIRE(c <= 2);
    if (c == 1) ++n_boundary;
  }
  REQUIRE(m.boundary_facets.size() == n_boundary);
  for (const auto& bf : m.boundary_facets) {
    std::array<int, 3> f{bf.v[0], bf.v[1], bf.v[2]};
    std::sort(f.begin(), f.end());
    auto it = faces.count.find(f);
    REQUIRE(it != faces.count.end());
    REQUIRE(it->second == 1);
    // Outward orientation: the facet normal points away from the owning tet's
    // fourth vertex.
    REQUIRE(bf.tet >= 0);
    REQUIRE(bf.tet < m.n_tets());
    const auto& tet = m.tets[bf.tet];
    Vec3 centroid = Vec3::Zero();
    for (int i = 0; i < 4; ++i) centroid += 0.25 * m.vertices[tet[i]];
    const Vec3 a = m.vertices[bf.v[0]];
    const Vec3 n =
        (m.vertices[bf.v[1]] - a).cross(m.vertices[bf.v[2]] - a);
    REQUIRE(n.dot(centroid - a) < 0.0);
  }
}

void check_positive_volumes(const Mesh& m) {
  for (int k = 0; k < m.n_tets(); ++k) REQUIRE(m.tet_volume(k) > 0.0);
}

/// The structural property the monotone transport discretization rests on:
/// each element's P1 stiffness block has no positive off-diagonal beyond
/// roundoff.
void check_element_stiffness_signs(const Mesh& m) {
  double worst_rel = 0.0;
  for (int k = 0; k < m.n_tets(); ++k) {
    const ElementGeometry geo = element_geometry(m, k);
    const Eigen::Matrix4d loc =
        geo.volume * geo.grad_lambda * geo.grad_lambda.transpose();
    const double scale = loc.cwiseAbs().maxCoeff();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i != j) worst_rel = std::max(worst_rel, loc(i, j) / scale);
      }
    }
  }
  CHECK(worst_rel <= 1e-13);
}

int count_tag(const Mesh& m, BoundaryTag tag) {
  int n = 0;
  for (const auto& f : m.boundary_facets) {
    if (f.tag == tag) ++n;
  }
  return n;
}

double tag_area(const Mesh& m, BoundaryTag tag) {
  double a = 0.0;
  for (const auto& f : m.boundary_facets) {
    if (f.tag == tag) a += facet_area(m, f);
  }
  return a;
}

}  // namespace

TEST_CASE("cylinder mesh: exact counts, volume, topology (R=1nm, res=0.25nm)") {
  // Sizing rules: N = 8*round(2*pi*R/res/8) = 24 sectors, ladder depth
  // m = round(R*cos(pi/N)/res) = 4, layers nz = round(L/res) = 16.
  const Mesh m = build_cylinder_mesh(4e-9, 2e-9, 0.25e-9);

  // Cross-section vertices: 1 + N*m (midline) + N*m (spokes) + N*m*(m-1)
  // interior = 481; triangles 2*N*m^2 = 768.
  CHECK(m.n_vertices() == 481 * 17);
  CHECK(m.n_tets() == 3 * 768 * 16);

  // Boundary: 768 cap triangles per end, rim 2*N*m = 192 stations, each wall
  // quad split in 2.
  CHECK(count_tag(m, BoundaryTag::SideA) == 768);
  CHECK(count_tag(m, BoundaryTag::SideB) == 768);
  CHECK(count_tag(m, BoundaryTag::LateralWall) == 192 * 2 * 16);
  CHECK(count_tag(m, BoundaryTag::OuterWall) == 0);

  // Exact volume: inscribed N-gon area times length.
  const double R = 1e-9;
  const double polygon = 0.5 * 24 * R * R * std::sin(2.0 * kPi / 24);
  CHECK(m.total_volume() == doctest::Approx(polygon * 4e-9).epsilon(1e-12));
  CHECK(tag_area(m, BoundaryTag::SideA) == doctest::Approx(polygon).epsilon(1e-12));

  // Polygon areas approach the disc area at the expected O(1/N^2) rate.
  const double circle = kPi * R * R;
  CHECK(std::abs(polygon - circle) / circle < 2.0 * kPi * kPi / (3.0 * 24 * 24) * 1.05);

  check_positive_volumes(m);
  check_conformity(m);
  CHECK(euler_characteristic(m) == 1);
  check_element_stiffness_signs(m);

  // Regularity: bounded aspect ratio, strictly positive dihedral angles.
  const MeshQualityReport q = quality(m);
  CHECK(q.max_ratio < 25.0);
  CHECK(q.min_dihedral_angle > 0.1);
  CHECK(q.h == doctest::Approx(std::sqrt(2.0) * 0.25e-9).epsilon(0.3));
}

TEST_CASE("cylinder mesh honors the requested layer count") {
  // resolution = length/16 must give exactly 16 layers (17 distinct z).
  const Mesh m = build_cylinder_mesh(10e-9, 2e-9, 10e-9 / 16);
  std::set<double> zs;
  for (const auto& v : m.vertices) zs.insert(v.z());
  CHECK(zs.size() == 17);
  CHECK(*zs.begin() == 0.0);
  CHECK(*zs.rbegin() == doctest::Approx(10e-9).epsilon(1e-14));
  // N = 8, m = 1 at this resolution: 16 cross-section triangles.
  CHECK(m.n_tets() == 3 * 16 * 16);
}

TEST_CASE("channel box mesh: regions, tags, exact volume (default geometry)") {
  const ChannelGeometry geom;  // L=10nm, d=2nm, W=2.5nm, res=0.65nm
  geom.validate();
  const Mesh m = build_channel_mesh(geom);

  // Sizing: N=8, m=1, collar rings n_out=2, nz=15 (forced multiple of 3).
  // Cross-section: 16 disc triangles + 2 rings * 16 stations * 2 = 64 collar
  // triangles; 3 tets per prism.
  CHECK(m.n_tets() == 3 * 80 * 15);

  int n_channel = 0, n_o1 = 0, n_o2 = 0, n_o3 = 0;
  for (int k = 0; k < m.n_tets(); ++k) {
    switch (m.region[k]) {
      case Region::Channel: ++n_channel; break;
      case Region::Omega1: ++n_o1; break;
      case Region::Omega2: ++n_o2; break;
      case Region::Omega3: ++n_o3; break;
    }
  }
  CHECK(n_channel == 3 * 16 * 15);
  CHECK(n_o1 == 960);
  CHECK(n_o2 == 960);
  CHECK(n_o3 == 960);

  // Axial thirds: every Omega1 tet lies in z < L/3, Omega2 in the middle
  // third, Omega3 in the top third.
  const double L = geom.channel_length;
  for (int k = 0; k < m.n_tets(); ++k) {
    double zmin = 1e300, zmax = -1e300;
    for (int i = 0; i < 4; ++i) {
      zmin = std::min(zmin, m.vertices[m.tets[k][i]].z());
      zmax = std::max(zmax, m.vertices[m.tets[k][i]].z());
    }
    switch (m.region[k]) {
      case Region::Omega1: CHECK(zmax <= L / 3 + 1e-18); break;
      case Region::Omega2:
        CHECK(zmin >= L / 3 - 1e-18);
        CHECK(zmax <= 2 * L / 3 + 1e-18);
        break;
      case Region::Omega3: CHECK(zmin >= 2 * L / 3 - 1e-18); break;
      case Region::Channel: break;
    }
  }

  // Boundary census: 16 disc triangles per terminal, collar caps
  // 2*64, outermost ring 16 stations * 2 * 15 layers.
  CHECK(count_tag(m, BoundaryTag::SideA) == 16);
  CHECK(count_tag(m, BoundaryTag::SideB) == 16);
  CHECK(count_tag(m, BoundaryTag::LateralWall) == 0);
  CHECK(count_tag(m, BoundaryTag::OuterWall) == 2 * 64 + 16 * 2 * 15);

  // The collar blends the polygon rim onto the square box: total volume is
  // exactly (2W)^2 * L.
  const double W = geom.box_half_width;
  CHECK(m.total_volume() == doctest::Approx(4 * W * W * L).epsilon(1e-12));

  // SideA is the inscribed polygon disc.
  const double R = 0.5 * geom.channel_diameter;
  const double polygon = 0.5 * 8 * R * R * std::sin(2.0 * kPi / 8);
  CHECK(tag_area(m, BoundaryTag::SideA) == doctest::Approx(polygon).epsilon(1e-12));

  check_positive_volumes(m);
  check_conformity(m);
  CHECK(euler_characteristic(m) == 1);

  // The sign structure must hold on the fluid region (where transport is
  // discretized); the collar is excluded by construction.
  const Submesh fluid = extract_region_submesh(m, Region::Channel);
  check_element_stiffness_signs(fluid.mesh);
}

TEST_CASE("channel box mesh at production resolution lands in the expected size band") {
  ChannelGeometry geom;
  geom.resolution = 0.42e-9;
  const Mesh m = build_channel_mesh(geom);
  // Paper-scale run: a few tens of thousands of elements.
  CHECK(m.n_tets() >= 25000);
  CHECK(m.n_tets() <= 100000);
  check_positive_volumes(m);
  check_conformity(m);
}

TEST_CASE("fluid submesh of the channel box") {
  const ChannelGeometry geom;
  const Mesh box = build_channel_mesh(geom);
  const Submesh fluid = extract_region_submesh(box, Region::Channel);

  CHECK(fluid.mesh.n_tets() == 720);
  for (const auto r : fluid.mesh.region) CHECK(r == Region::Channel);

  // Terminal discs keep their tags; the fluid-solid interface becomes
  // LateralWall (16 rim stations * 2 triangles * 15 layers).
  CHECK(count_tag(fluid.mesh, BoundaryTag::SideA) == 16);
  CHECK(count_tag(fluid.mesh, BoundaryTag::SideB) == 16);
  CHECK(count_tag(fluid.mesh, BoundaryTag::LateralWall) == 16 * 2 * 15);
  CHECK(count_tag(fluid.mesh, BoundaryTag::OuterWall) == 0);

  // Index maps are mutually consistent and preserve coordinates bit-for-bit.
  REQUIRE(static_cast<int>(fluid.vertex_to_parent.size()) == fluid.mesh.n_vertices());
  for (int v = 0; v < fluid.mesh.n_vertices(); ++v) {
    const int pv = fluid.vertex_to_parent[v];
    CHECK(fluid.parent_vertex_to_sub[pv] == v);
    CHECK(fluid.mesh.vertices[v] == box.vertices[pv]);
  }
  for (int t = 0; t < fluid.mesh.n_tets(); ++t) {
    const int pt = fluid.tet_to_parent[t];
    CHECK(box.region[pt] == Region::Channel);
    for (int i = 0; i < 4; ++i) {
      CHECK(fluid.vertex_to_parent[fluid.mesh.tets[t][i]] == box.tets[pt][i]);
    }
  }

  check_positive_volumes(fluid.mesh);
  check_conformity(fluid.mesh);
}

TEST_CASE("block mesh: counts, volume, tags, sign structure") {
  const Mesh m = build_block_mesh(Vec3(1.0, 2.0, 3.0), 2, 3, 4);
  CHECK(m.n_vertices() == 3 * 4 * 5);
  CHECK(m.n_tets() == 6 * 2 * 3 * 4);
  CHECK(m.total_volume() == doctest::Approx(6.0).epsilon(1e-13));

  CHECK(count_tag(m, BoundaryTag::SideA) == 2 * 2 * 3);
  CHECK(count_tag(m, BoundaryTag::SideB) == 2 * 2 * 3);
  CHECK(count_tag(m, BoundaryTag::LateralWall) == 2 * (2 * (3 * 4) + 2 * (2 * 4)));
  CHECK(tag_area(m, BoundaryTag::SideA) == doctest::Approx(2.0).epsilon(1e-13));

  check_positive_volumes(m);
  check_conformity(m);
  CHECK(euler_characteristic(m) == 1);
  check_element_stiffness_signs(m);

  // Anisotropic cells keep the nonobtuse path-tet structure.
  const Mesh skew = build_block_mesh(Vec3(1.0, 0.3, 2.0), 3, 2, 5);
  check_element_stiffness_signs(skew);
  check_conformity(skew);
}

TEST_CASE("quality report: regular tetrahedron and scale invariance") {
  Mesh reg;
  reg.vertices = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
  reg.tets = {{0, 1, 3, 2}};  // positively oriented ordering
  reg.region = {Region::Channel};
  REQUIRE(reg.tet_volume(0) > 0.0);
  const MeshQualityReport q = quality(reg);
  // Longest edge over insphere diameter = sqrt(6) for the regular tet;
  // dihedral angle arccos(1/3).
  CHECK(q.max_ratio == doctest::Approx(std::sqrt(6.0)).epsilon(1e-12));
  CHECK(q.min_dihedral_angle == doctest::Approx(std::acos(1.0 / 3.0)).epsilon(1e-12));
  CHECK(q.h == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));

  Mesh scaled = reg;
  for (auto& v : scaled.vertices) v *= 1e-9;
  const MeshQualityReport qs = quality(scaled);
  CHECK(qs.max_ratio == doctest::Approx(q.max_ratio).epsilon(1e-12));
  CHECK(qs.min_dihedral_angle == doctest::Approx(q.min_dihedral_angle).epsilon(1e-12));

  // A flat sliver is reported as such.
  Mesh sliver;
  sliver.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0.5, 0.5, 1e-4)};
  sliver.tets = {{0, 1, 2, 3}};
  sliver.region = {Region::Channel};
  CHECK(quality(sliver).max_ratio > 100.0);
}

TEST_CASE("deform_mesh: identity, rigid translation, inversion detection") {
  const Mesh m = build_cylinder_mesh(2e-9, 2e-9, 0.5e-9);
  const int n = m.n_vertices();

  SUBCASE("zero displacement is the identity") {
    const Mesh d = deform_mesh(m, Eigen::VectorXd::Zero(3 * n));
    for (int v = 0; v < n; ++v) CHECK(d.vertices[v] == m.vertices[v]);
    CHECK(d.n_tets() == m.n_tets());
  }
  SUBCASE("rigid translation preserves volumes") {
    Eigen::VectorXd u(3 * n);
    for (int v = 0; v < n; ++v) {
      u[3 * v] = 1e-9;
      u[3 * v + 1] = -2e-9;
      u[3 * v + 2] = 0.5e-9;
    }
    const Mesh d = deform_mesh(m, u);
    for (int k = 0; k < m.n_tets(); ++k) {
      CHECK(d.tet_volume(k) == doctest::Approx(m.tet_volume(k)).epsilon(1e-12));
    }
    CHECK(d.boundary_facets.size() == m.boundary_facets.size());
  }
  SUBCASE("radial contraction shrinks the volume without inverting") {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(3 * n);
    for (int v = 0; v < n; ++v) {
      u[3 * v] = -0.3 * m.vertices[v].x();
      u[3 * v + 1] = -0.3 * m.vertices[v].y();
    }
    const Mesh d = deform_mesh(m, u);
    CHECK(d.total_volume() == doctest::Approx(0.49 * m.total_volume()).epsilon(1e-12));
  }
  SUBCASE("element inversion is refused") {
    // Point-reflect one tet through its centroid: its volume changes sign.
    Eigen::VectorXd u = Eigen::VectorXd::Zero(3 * n);
    Vec3 c = Vec3::Zero();
    for (int i = 0; i < 4; ++i) c += 0.25 * m.vertices[m.tets[0][i]];
    for (int i = 0; i < 4; ++i) {
      const int v = m.tets[0][i];
      const Vec3 disp = 2.0 * (c - m.vertices[v]);
      u[3 * v] = disp.x();
      u[3 * v + 1] = disp.y();
      u[3 * v + 2] = disp.z();
    }
    CHECK_THROWS_AS(deform_mesh(m, u), MeshInversionError);
  }
}

TEST_CASE("text serialization round-trips exactly") {
  const ChannelGeometry geom;
  const Mesh m = build_channel_mesh(geom);
  const std::string path = "mesh_roundtrip_test.txt";
  write_mesh_text(path, m);
  const Mesh r = read_mesh_text(path);

  REQUIRE(r.n_vertices() == m.n_vertices());
  REQUIRE(r.n_tets() == m.n_tets());
  for (int v = 0; v < m.n_vertices(); ++v) CHECK(r.vertices[v] == m.vertices[v]);
  for (int k = 0; k < m.n_tets(); ++k) {
    CHECK(r.tets[k] == m.tets[k]);
    CHECK(r.region[k] == m.region[k]);
  }
  REQUIRE(r.boundary_facets.size() == m.boundary_facets.size());
  for (size_t f = 0; f < m.boundary_facets.size(); ++f) {
    CHECK(r.boundary_facets[f].v == m.boundary_facets[f].v);
    CHECK(r.boundary_facets[f].tag == m.boundary_facets[f].tag);
    CHECK(r.boundary_facets[f].tet == m.boundary_facets[f].tet);
  }
  std::remove(path.c_str());

  // Garbage input is rejected.
  {
    FILE* fp = std::fopen("mesh_bad_test.txt", "w");
    std::fputs("not a mesh\n", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(read_mesh_text("mesh_bad_test.txt"), SimulationError);
  std::remove("mesh_bad_test.txt");
}

TEST_CASE("geometry validation rejects nonsense") {
  ChannelGeometry g;
  g.channel_diameter = -1.0;
  CHECK_THROWS_AS(g.validate(), InvalidParameterError);
  g = ChannelGeometry{};
  g.box_half_width = 0.4 * g.channel_diameter;  // box narrower than the pore
  CHECK_THROWS_AS(g.validate(), InvalidParameterError);
  g = ChannelGeometry{};
  g.resolution = 0.0;
  CHECK_THROWS_AS(g.validate(), InvalidParameterError);
}
