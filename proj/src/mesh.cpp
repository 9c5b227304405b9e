#include "nanochan/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>

namespace nanochan {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double signed_volume(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  return (p1 - p0).cross(p2 - p0).dot(p3 - p0) / 6.0;
}

// ---------------------------------------------------------------------------
// 2D cross-section scaffolding.
//
// Both the disc and the block cross-sections are built from axis-aligned
// right triangles, and every 2D edge carries an orientation (tail -> head).
// The prism split of the extrusion step reads that orientation to decide how
// to cut each prism into three tets so that neighbouring prisms match and
// every tet keeps its right-angled structure. Right angles are what make the
// P1 stiffness off-diagonals nonpositive element by element, independent of
// any positive per-element coefficient; that property is load-bearing for the
// monotone transport discretization, so treat this construction as exact.
// ---------------------------------------------------------------------------

struct CrossSection {
  std::vector<Eigen::Vector2d> verts;
  std::vector<std::array<int, 3>> tris;
  std::vector<char> in_disc;  // per tri: channel cross-section vs collar
  std::map<std::pair<int, int>, int> edge_tail;  // (min,max) -> tail vertex
  std::vector<int> rim;  // CCW vertex loop of the disc boundary
};

void add_tri(CrossSection& cs, int a, int b, int c, bool disc) {
  cs.tris.push_back({a, b, c});
  cs.in_disc.push_back(disc ? 1 : 0);
}

void orient_edge(CrossSection& cs, int tail, int head) {
  const auto key = std::minmax(tail, head);
  auto it = cs.edge_tail.find(key);
  if (it == cs.edge_tail.end()) {
    cs.edge_tail.emplace(key, tail);
  } else if (it->second != tail) {
    throw SimulationError("cross-section construction: conflicting edge orientation");
  }
}

/// Disc of radius R: each half-sector of the inscribed N-gon is tiled by a
/// ladder of congruent right triangles (legs du radially, dt tangentially).
/// Vertices shared between sectors/halves are deduplicated by integer keys,
/// never by coordinate comparison, so conformity is exact.
CrossSection build_disc_cross_section(double R, double resolution) {
  const int N =
      std::max<int>(8, 8 * static_cast<int>(std::llround(kTwoPi * R / resolution / 8.0)));
  const double beta = kTwoPi / N;
  const double apothem = R * std::cos(beta / 2.0);
  const int m = std::max<int>(1, static_cast<int>(std::llround(apothem / resolution)));
  const double du = apothem / m;
  const double dt = du * std::tan(beta / 2.0);

  CrossSection cs;
  // Canonical vertex keys: {0}=center, {1,s,i}=sector midline, {2,spoke,i}=
  // spoke ray shared by adjacent sectors, {3,2s+half,i,k}=half-sector interior.
  std::map<std::array<int, 4>, int> ids;
  auto get_vertex = [&](const std::array<int, 4>& key, const Eigen::Vector2d& pos) {
    auto it = ids.find(key);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(cs.verts.size());
    cs.verts.push_back(pos);
    ids.emplace(key, id);
    return id;
  };

  for (int s = 0; s < N; ++s) {
    const double phi = (s + 0.5) * beta;
    const Eigen::Vector2d mhat(std::cos(phi), std::sin(phi));
    const Eigen::Vector2d that(-std::sin(phi), std::cos(phi));
    for (int half = 0; half < 2; ++half) {
      // half 0 leans toward spoke s+1 (CCW side), half 1 toward spoke s.
      const double sgn = (half == 0) ? 1.0 : -1.0;
      const int spoke = (half == 0) ? (s + 1) % N : s;

      auto vid = [&](int i, int k) {
        const Eigen::Vector2d pos = (i * du) * mhat + (sgn * k * dt) * that;
        if (i == 0) return get_vertex({0, 0, 0, 0}, Eigen::Vector2d::Zero());
        if (k == 0) return get_vertex({1, s, i, 0}, pos);
        if (k == i) return get_vertex({2, spoke, i, 0}, pos);
        return get_vertex({3, 2 * s + half, i, k}, pos);
      };

      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < i; ++k) {
          const int v00 = vid(i, k), v10 = vid(i + 1, k);
          const int v01 = vid(i, k + 1), v11 = vid(i + 1, k + 1);
          if (half == 0) {
            add_tri(cs, v00, v10, v11, true);
            add_tri(cs, v00, v11, v01, true);
          } else {
            add_tri(cs, v00, v11, v10, true);
            add_tri(cs, v00, v01, v11, true);
          }
          orient_edge(cs, v00, v10);
          orient_edge(cs, v01, v11);
          orient_edge(cs, v00, v01);
          orient_edge(cs, v10, v11);
          orient_edge(cs, v00, v11);
        }
        const int a = vid(i, i), b = vid(i + 1, i), c = vid(i + 1, i + 1);
        if (half == 0) {
          add_tri(cs, a, b, c, true);
        } else {
          add_tri(cs, a, c, b, true);
        }
        orient_edge(cs, a, b);
        orient_edge(cs, b, c);
        orient_edge(cs, a, c);
      }
    }
  }

  // CCW rim loop, sector by sector: spoke s, half-1 interior points walking
  // toward the midline, midline, half-0 interior points toward spoke s+1.
  for (int s = 0; s < N; ++s) {
    cs.rim.push_back(ids.at({2, s, m, 0}));
    for (int k = m - 1; k >= 1; --k) cs.rim.push_back(ids.at({3, 2 * s + 1, m, k}));
    cs.rim.push_back(ids.at({1, s, m, 0}));
    for (int k = 1; k <= m - 1; ++k) cs.rim.push_back(ids.at({3, 2 * s + 0, m, k}));
  }
  return cs;
}

/// Collar between the disc rim and the square of half-width W: radial rays
/// through every rim vertex, blended linearly over n_out rings, quads split
/// along the ring-increasing diagonal. The collar never enters the transport
/// operators, so it needs no angle condition, only valid prism orientations
/// (radial and diagonal edges point ring-outward, ring edges point CCW).
void add_box_collar(CrossSection& cs, double W, int n_out) {
  const int n_rim = static_cast<int>(cs.rim.size());
  std::vector<std::vector<int>> ring(n_out + 1);
  ring[0] = cs.rim;
  for (int l = 1; l <= n_out; ++l) {
    ring[l].resize(n_rim);
    const double a = static_cast<double>(l) / n_out;
    for (int j = 0; j < n_rim; ++j) {
      const Eigen::Vector2d P = cs.verts[cs.rim[j]];
      const Eigen::Vector2d dir = P.normalized();
      const double t = W / std::max(std::abs(dir.x()), std::abs(dir.y()));
      const Eigen::Vector2d V = (1.0 - a) * P + a * (t * dir);
      ring[l][j] = static_cast<int>(cs.verts.size());
      cs.verts.push_back(V);
    }
  }
  for (int l = 0; l < n_out; ++l) {
    for (int j = 0; j < n_rim; ++j) {
      const int j1 = (j + 1) % n_rim;
      const int Lj = ring[l][j], Lj1 = ring[l][j1];
      const int Uj = ring[l + 1][j], Uj1 = ring[l + 1][j1];
      add_tri(cs, Lj, Lj1, Uj1, false);
      add_tri(cs, Lj, Uj1, Uj, false);
      orient_edge(cs, Lj, Uj);    // radial, ring-outward
      orient_edge(cs, Lj, Uj1);   // diagonal, ring-outward
      orient_edge(cs, Uj, Uj1);   // ring edge, CCW (ring-0 edges already exist)
    }
  }
}

/// Unit-structure grid cross-section for the rectangular block mesh.
CrossSection build_grid_cross_section(double sx, double sy, int nx, int ny) {
  CrossSection cs;
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      cs.verts.emplace_back(sx * i / nx, sy * j / ny);
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      add_tri(cs, v00, v10, v11, true);
      add_tri(cs, v00, v11, v01, true);
      orient_edge(cs, v00, v10);
      orient_edge(cs, v01, v11);
      orient_edge(cs, v00, v01);
      orient_edge(cs, v10, v11);
      orient_edge(cs, v00, v11);
    }
  }
  return cs;
}

// ---------------------------------------------------------------------------
// Extrusion: prisms over every cross-section triangle, each cut into three
// tets. The cut is dictated by the 2D edge orientations: for triangle
// (t0,t1,t2) let d[i] = 0 if edge (t[i], t[i+1]) is oriented from t[i], else
// 1. The pattern (d never being constant by construction) selects the apex
// vertex c and the diagonal layout, which makes the triangulations of shared
// prism walls agree between neighbours.
// ---------------------------------------------------------------------------

struct FaceKey {
  std::array<int, 3> v;
  bool operator==(const FaceKey& o) const { return v == o.v; }
};
struct FaceKeyHash {
  size_t operator()(const FaceKey& k) const {
    size_t h = 1469598103934665603ull;
    for (int x : k.v) {
      h ^= static_cast<size_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

Mesh extrude_cross_section(const CrossSection& cs, int nz, double zlen,
                           const std::function<Region(int, int)>& region_of,
                           BoundaryTag lateral_tag) {
  if (nz < 1) throw InvalidParameterError("extrusion needs at least one layer");
  const int nv2 = static_cast<int>(cs.verts.size());
  const int nt2 = static_cast<int>(cs.tris.size());

  Mesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(nv2) * (nz + 1));
  for (int l = 0; l <= nz; ++l) {
    const double z = zlen * l / nz;
    for (int v = 0; v < nv2; ++v) {
      mesh.vertices.emplace_back(cs.verts[v].x(), cs.verts[v].y(), z);
    }
  }

  mesh.tets.reserve(static_cast<size_t>(nt2) * nz * 3);
  mesh.region.reserve(mesh.tets.capacity());
  for (int l = 0; l < nz; ++l) {
    for (int t = 0; t < nt2; ++t) {
      const auto& tri = cs.tris[t];
      int d[3];
      for (int e = 0; e < 3; ++e) {
        const int a = tri[e], b = tri[(e + 1) % 3];
        d[e] = (cs.edge_tail.at(std::minmax(a, b)) == a) ? 0 : 1;
      }
      if ((d[0] == d[1] && d[1] == d[2])) {
        throw SimulationError("extrusion: cyclic edge orientation on a triangle");
      }
      int c = -1;
      for (int e = 0; e < 3; ++e) {
        if (d[(e + 2) % 3] == 1 && d[e] == 0) {
          c = e;
          break;
        }
      }
      const int j = (c + 1) % 3, k = (c + 2) % 3;
      int A[3], B[3];
      for (int e = 0; e < 3; ++e) {
        A[e] = tri[e] + l * nv2;
        B[e] = tri[e] + (l + 1) * nv2;
      }
      std::array<std::array<int, 4>, 3> cut;
      cut[0] = {A[c], B[c], B[j], B[k]};
      if (d[j] == 0) {
        cut[1] = {A[c], A[j], A[k], B[k]};
        cut[2] = {A[c], A[j], B[k], B[j]};
      } else {
        cut[1] = {A[c], A[j], A[k], B[j]};
        cut[2] = {A[c], A[k], B[k], B[j]};
      }
      const Region reg = region_of(t, l);
      for (auto tet : cut) {
        if (signed_volume(mesh.vertices[tet[0]], mesh.vertices[tet[1]], mesh.vertices[tet[2]],
                          mesh.vertices[tet[3]]) < 0.0) {
          std::swap(tet[1], tet[2]);
        }
        mesh.tets.push_back(tet);
        mesh.region.push_back(reg);
      }
    }
  }

  // Boundary facets by face counting; classification uses the layer structure
  // (a facet whose vertices all sit on one z-plane is a cap, otherwise it is
  // lateral), and cap facets inherit SideA/SideB only over the disc.
  std::unordered_map<FaceKey, std::pair<int, int>, FaceKeyHash> faces;  // -> (count, owner)
  faces.reserve(mesh.tets.size() * 4);
  static const int face_of[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
  for (int kk = 0; kk < mesh.n_tets(); ++kk) {
    for (const auto& f : face_of) {
      FaceKey key{{mesh.tets[kk][f[0]], mesh.tets[kk][f[1]], mesh.tets[kk][f[2]]}};
      std::sort(key.v.begin(), key.v.end());
      auto [it, inserted] = faces.emplace(key, std::make_pair(1, kk));
      if (!inserted) ++it->second.first;
    }
  }
  std::vector<FaceKey> boundary;
  for (const auto& [key, cnt] : faces) {
    if (cnt.first == 1) boundary.push_back(key);
    if (cnt.first > 2) throw SimulationError("extrusion: non-manifold face");
  }
  std::sort(boundary.begin(), boundary.end(),
            [](const FaceKey& a, const FaceKey& b) { return a.v < b.v; });

  for (const auto& key : boundary) {
    const int owner = faces.at(key).second;
    const int tri = (owner / 3) % nt2;
    const int p0 = key.v[0] / nv2, p1 = key.v[1] / nv2, p2 = key.v[2] / nv2;
    BoundaryTag tag;
    if (p0 == p1 && p1 == p2) {
      const bool disc = cs.in_disc[tri] != 0;
      if (p0 == 0) {
        tag = disc ? BoundaryTag::SideA : BoundaryTag::OuterWall;
      } else if (p0 == nz) {
        tag = disc ? BoundaryTag::SideB : BoundaryTag::OuterWall;
      } else {
        throw SimulationError("extrusion: interior cap facet left unpaired");
      }
    } else {
      tag = lateral_tag;
    }

    BoundaryFacet facet;
    facet.v = key.v;
    facet.tag = tag;
    facet.tet = owner;
    // Make the stored orientation outward.
    const auto& t = mesh.tets[owner];
    const Vec3 centroid_t =
        (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]] + mesh.vertices[t[3]]) /
        4.0;
    const Vec3 a = mesh.vertices[facet.v[0]];
    const Vec3 n =
        (mesh.vertices[facet.v[1]] - a).cross(mesh.vertices[facet.v[2]] - a);
    const Vec3 centroid_f = (a + mesh.vertices[facet.v[1]] + mesh.vertices[facet.v[2]]) / 3.0;
    if (n.dot(centroid_f - centroid_t) < 0.0) std::swap(facet.v[1], facet.v[2]);
    mesh.boundary_facets.push_back(facet);
  }
  return mesh;
}

int layers_for(double length, double resolution) {
  return std::max<int>(1, static_cast<int>(std::llround(length / resolution)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Mesh basics.
// ---------------------------------------------------------------------------

double Mesh::tet_volume(int k) const {
  const auto& t = tets[k];
  return signed_volume(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]);
}

double Mesh::total_volume() const {
  double v = 0.0;
  for (int k = 0; k < n_tets(); ++k) v += tet_volume(k);
  return v;
}

void ChannelGeometry::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) {
      throw InvalidParameterError(std::string("geometry: ") + name + " must be positive");
    }
  };
  positive(channel_length, "channel_length");
  positive(channel_diameter, "channel_diameter");
  positive(box_half_width, "box_half_width");
  positive(resolution, "resolution");
  if (channel_diameter / 2.0 >= box_half_width) {
    throw InvalidParameterError("geometry: the channel must fit inside the box "
                                "(channel_diameter/2 < box_half_width)");
  }
}

Mesh build_cylinder_mesh(double length, double diameter, double resolution) {
  if (!(length > 0.0) || !(diameter > 0.0) || !(resolution > 0.0)) {
    throw InvalidParameterError("build_cylinder_mesh: lengths must be positive");
  }
  return build_cylinder_mesh(length, diameter, resolution,
                             layers_for(length, resolution));
}

Mesh build_cylinder_mesh(double length, double diameter, double resolution,
                         int n_layers) {
  if (!(length > 0.0) || !(diameter > 0.0) || !(resolution > 0.0)) {
    throw InvalidParameterError("build_cylinder_mesh: lengths must be positive");
  }
  if (n_layers < 1) {
    throw InvalidParameterError("build_cylinder_mesh: need at least one layer");
  }
  const CrossSection cs = build_disc_cross_section(diameter / 2.0, resolution);
  return extrude_cross_section(
      cs, n_layers, length, [](int, int) { return Region::Channel; },
      BoundaryTag::LateralWall);
}

Mesh build_channel_mesh(const ChannelGeometry& geom) {
  geom.validate();
  const double R = geom.channel_diameter / 2.0;
  CrossSection cs = build_disc_cross_section(R, geom.resolution);
  const int n_out = std::max<int>(
      1, static_cast<int>(std::llround((geom.box_half_width - R) / geom.resolution)));
  add_box_collar(cs, geom.box_half_width, n_out);

  // The solid is split into axial thirds, so the layer count is a multiple of 3.
  const int nz_raw = layers_for(geom.channel_length, geom.resolution);
  const int nz = 3 * std::max<int>(1, static_cast<int>(std::llround(nz_raw / 3.0)));

  auto region_of = [&cs, nz](int tri, int layer) {
    if (cs.in_disc[tri]) return Region::Channel;
    if (layer < nz / 3) return Region::Omega1;
    if (layer < 2 * nz / 3) return Region::Omega2;
    return Region::Omega3;
  };
  return extrude_cross_section(cs, nz, geom.channel_length, region_of, BoundaryTag::OuterWall);
}

Mesh build_block_mesh(const Vec3& size, int nx, int ny, int nz) {
  if (!(size.x() > 0.0) || !(size.y() > 0.0) || !(size.z() > 0.0)) {
    throw InvalidParameterError("build_block_mesh: size must be positive");
  }
  if (nx < 1 || ny < 1 || nz < 1) {
    throw InvalidParameterError("build_block_mesh: cell counts must be at least 1");
  }
  const CrossSection cs = build_grid_cross_section(size.x(), size.y(), nx, ny);
  return extrude_cross_section(
      cs, nz, size.z(), [](int, int) { return Region::Channel; }, BoundaryTag::LateralWall);
}

// ---------------------------------------------------------------------------
// Quality, deformation, submesh extraction, serialization.
// ---------------------------------------------------------------------------

MeshQualityReport quality(const Mesh& mesh) {
  if (mesh.n_tets() == 0) throw InvalidParameterError("quality: empty mesh");
  MeshQualityReport rep;
  rep.min_dihedral_angle = M_PI;

  for (int k = 0; k < mesh.n_tets(); ++k) {
    const auto& t = mesh.tets[k];
    const Vec3 p[4] = {mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
                       mesh.vertices[t[3]]};
    double hk = 0.0;
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) hk = std::max(hk, (p[a] - p[b]).norm());
    }
    const double vol = signed_volume(p[0], p[1], p[2], p[3]);
    if (!(vol > 0.0)) {
      throw SimulationError("quality: element " + std::to_string(k) +
                            " is degenerate or inverted");
    }

    // Outward unit normal of the face opposite each vertex.
    Vec3 normal[4];
    double area_sum = 0.0;
    static const int face_of[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
    for (int f = 0; f < 4; ++f) {
      const Vec3& a = p[face_of[f][0]];
      Vec3 n = (p[face_of[f][1]] - a).cross(p[face_of[f][2]] - a);
      if (n.dot(p[f] - a) > 0.0) n = -n;
      area_sum += 0.5 * n.norm();
      normal[f] = n.normalized();
    }
    const double rho = 6.0 * vol / area_sum;  // insphere diameter
    rep.h = std::max(rep.h, hk);
    rep.max_ratio = std::max(rep.max_ratio, hk / rho);
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        const double cosv = std::clamp(normal[a].dot(normal[b]), -1.0, 1.0);
        rep.min_dihedral_angle = std::min(rep.min_dihedral_angle, M_PI - std::acos(cosv));
      }
    }
  }
  return rep;
}

Mesh deform_mesh(const Mesh& mesh, const Eigen::VectorXd& displacement) {
  if (displacement.size() != 3 * mesh.n_vertices()) {
    throw InvalidParameterError("deform_mesh: displacement has " +
                                std::to_string(displacement.size()) + " entries, expected " +
                                std::to_string(3 * mesh.n_vertices()));
  }
  Mesh out = mesh;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    out.vertices[v] += Vec3(displacement[3 * v], displacement[3 * v + 1],
                            displacement[3 * v + 2]);
  }
  int worst = -1;
  double worst_vol = 0.0;
  for (int k = 0; k < out.n_tets(); ++k) {
    const double vol = out.tet_volume(k);
    if (vol <= 0.0 && (worst < 0 || vol < worst_vol)) {
      worst = k;
      worst_vol = vol;
    }
  }
  if (worst >= 0) {
    std::ostringstream msg;
    msg << "deform_mesh: displacement inverts element " << worst << " (signed volume "
        << worst_vol << ")";
    throw MeshInversionError(msg.str());
  }
  return out;
}

Submesh extract_region_submesh(const Mesh& mesh, Region region) {
  Submesh sub;
  sub.parent_vertex_to_sub.assign(mesh.n_vertices(), -1);

  std::vector<int> kept;
  for (int k = 0; k < mesh.n_tets(); ++k) {
    if (mesh.region[k] == region) kept.push_back(k);
  }
  if (kept.empty()) {
    throw InvalidParameterError(std::string("extract_region_submesh: no elements in region ") +
                                to_string(region));
  }

  // Vertices enter in parent-index order for a deterministic numbering.
  std::vector<char> used(mesh.n_vertices(), 0);
  for (int k : kept) {
    for (int v : mesh.tets[k]) used[v] = 1;
  }
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (used[v]) {
      sub.parent_vertex_to_sub[v] = static_cast<int>(sub.vertex_to_parent.size());
      sub.vertex_to_parent.push_back(v);
      sub.mesh.vertices.push_back(mesh.vertices[v]);
    }
  }
  for (int k : kept) {
    std::array<int, 4> t;
    for (int i = 0; i < 4; ++i) t[i] = sub.parent_vertex_to_sub[mesh.tets[k][i]];
    sub.mesh.tets.push_back(t);
    sub.mesh.region.push_back(region);
    sub.tet_to_parent.push_back(k);
  }

  // Parent boundary facets keep their tag; facets that used to be interior
  // interfaces become the submesh's LateralWall.
  std::map<std::array<int, 3>, BoundaryTag> parent_tags;
  for (const auto& f : mesh.boundary_facets) {
    std::array<int, 3> key = f.v;
    std::sort(key.begin(), key.end());
    parent_tags.emplace(key, f.tag);
  }

  std::map<std::array<int, 3>, std::pair<int, int>> faces;
  static const int face_of[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
  for (int kk = 0; kk < sub.mesh.n_tets(); ++kk) {
    for (const auto& f : face_of) {
      std::array<int, 3> key = {sub.mesh.tets[kk][f[0]], sub.mesh.tets[kk][f[1]],
                                sub.mesh.tets[kk][f[2]]};
      std::sort(key.begin(), key.end());
      auto [it, inserted] = faces.emplace(key, std::make_pair(1, kk));
      if (!inserted) ++it->second.first;
    }
  }
  for (const auto& [key, cnt] : faces) {
    if (cnt.first != 1) continue;
    BoundaryFacet facet;
    facet.v = key;
    facet.tet = cnt.second;
    std::array<int, 3> parent_key = {sub.vertex_to_parent[key[0]], sub.vertex_to_parent[key[1]],
                                     sub.vertex_to_parent[key[2]]};
    std::sort(parent_key.begin(), parent_key.end());
    auto it = parent_tags.find(parent_key);
    facet.tag = (it != parent_tags.end()) ? it->second : BoundaryTag::LateralWall;

    const auto& t = sub.mesh.tets[facet.tet];
    const Vec3 centroid_t = (sub.mesh.vertices[t[0]] + sub.mesh.vertices[t[1]] +
                             sub.mesh.vertices[t[2]] + sub.mesh.vertices[t[3]]) /
                            4.0;
    const Vec3 a = sub.mesh.vertices[facet.v[0]];
    const Vec3 n = (sub.mesh.vertices[facet.v[1]] - a).cross(sub.mesh.vertices[facet.v[2]] - a);
    const Vec3 centroid_f =
        (a + sub.mesh.vertices[facet.v[1]] + sub.mesh.vertices[facet.v[2]]) / 3.0;
    if (n.dot(centroid_f - centroid_t) < 0.0) std::swap(facet.v[1], facet.v[2]);
    sub.mesh.boundary_facets.push_back(facet);
  }
  return sub;
}

void write_mesh_text(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw InvalidParameterError("write_mesh_text: cannot open " + path);
  out << "tetmesh 1\n";
  out << mesh.n_vertices() << " " << mesh.n_tets() << " " << mesh.boundary_facets.size() << "\n";
  char buf[128];
  for (const auto& p : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const auto& t = mesh.tets[k];
    out << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << " "
        << static_cast<int>(mesh.region[k]) << "\n";
  }
  for (const auto& f : mesh.boundary_facets) {
    out << f.v[0] << " " << f.v[1] << " " << f.v[2] << " " << static_cast<int>(f.tag) << " "
        << f.tet << "\n";
  }
  if (!out.good()) throw SimulationError("write_mesh_text: write failed for " + path);
}

Mesh read_mesh_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameterError("read_mesh_text: cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "tetmesh" || version != 1) {
    throw InvalidParameterError("read_mesh_text: " + path + " is not a version-1 mesh file");
  }
  int nv = 0, nt = 0, nf = 0;
  in >> nv >> nt >> nf;
  if (!in || nv < 0 || nt < 0 || nf < 0) {
    throw InvalidParameterError("read_mesh_text: bad header in " + path);
  }
  Mesh mesh;
  mesh.vertices.resize(nv);
  for (auto& p : mesh.vertices) in >> p.x() >> p.y() >> p.z();
  mesh.tets.resize(nt);
  mesh.region.resize(nt);
  for (int k = 0; k < nt; ++k) {
    int r = 0;
    in >> mesh.tets[k][0] >> mesh.tets[k][1] >> mesh.tets[k][2] >> mesh.tets[k][3] >> r;
    if (r < 0 || r > 3) throw InvalidParameterError("read_mesh_text: bad region tag");
    mesh.region[k] = static_cast<Region>(r);
  }
  mesh.boundary_facets.resize(nf);
  for (auto& f : mesh.boundary_facets) {
    int tag = 0;
    in >> f.v[0] >> f.v[1] >> f.v[2] >> tag >> f.tet;
    if (tag < 0 || tag > 3) throw InvalidParameterError("read_mesh_text: bad boundary tag");
    f.tag = static_cast<BoundaryTag>(tag);
  }
  if (!in) throw InvalidParameterError("read_mesh_text: truncated file " + path);
  for (int k = 0; k < nt; ++k) {
    for (int v : mesh.tets[k]) {
      if (v < 0 || v >= nv) throw InvalidParameterError("read_mesh_text: vertex index range");
    }
    if (mesh.tet_volume(k) <= 0.0) {
      throw InvalidParameterError("read_mesh_text: element " + std::to_string(k) +
                                  " is not positively oriented");
    }
  }
  return mesh;
}

}  // namespace nanochan
