#pragma once

#include "nanochan/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace nanochan {

/// Oriented boundary triangle. Vertices are ordered so that
/// (v1-v0) x (v2-v0) points out of the mesh; tet is the unique element the
/// facet belongs to.
struct BoundaryFacet {
  std::array<int, 3> v;
  BoundaryTag tag = BoundaryTag::OuterWall;
  int tet = -1;
};

/// Conforming tetrahedral mesh. Every tet is positively oriented
/// (det[p1-p0, p2-p0, p3-p0] > 0) and carries a material region; every
/// boundary facet belongs to exactly one tet and every interior facet to
/// exactly two.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<Region> region;
  std::vector<BoundaryFacet> boundary_facets;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_tets() const { return static_cast<int>(tets.size()); }

  double tet_volume(int k) const;
  double total_volume() const;
};

/// Channel-in-a-box geometry (all lengths in meters). The pore is a cylinder
/// of the given diameter and length along z, embedded in a square solid block
/// of side 2*box_half_width; resolution is the target edge length.
struct ChannelGeometry {
  double channel_length = 10e-9;
  double channel_diameter = 2e-9;
  double box_half_width = 2.5e-9;
  double resolution = 0.65e-9;

  void validate() const;
};

struct MeshQualityReport {
  double h = 0.0;                   ///< largest element diameter (longest edge)
  double max_ratio = 0.0;           ///< max over elements of diameter / insphere diameter
  double min_dihedral_angle = 0.0;  ///< radians
};

/// Full simulation domain: structured fluid cylinder (region Channel) inside
/// the solid box (regions Omega1/Omega2/Omega3, split as axial thirds).
/// Boundary: SideA / SideB are the fluid terminal discs at z = 0 / z = L,
/// everything else is OuterWall.
///
/// The cross-section tiles each half-sector of the inscribed polygon with a
/// lattice of *exactly right-angled* triangles; together with the layer
/// orientation rule used by the prism split this makes every P1 stiffness
/// off-diagonal nonpositive element by element, which is what the monotone
/// (M-matrix) structure of the transport discretization rests on.
Mesh build_channel_mesh(const ChannelGeometry& geom);

/// Stand-alone fluid cylinder (region Channel everywhere): terminal discs
/// SideA / SideB, curved wall LateralWall. Same cross-section construction as
/// build_channel_mesh. The number of axial layers is round(length/resolution),
/// so resolution = length/16 yields exactly 16 layers.
Mesh build_cylinder_mesh(double length, double diameter, double resolution);

/// Same cylinder with the axial layer count chosen explicitly instead of
/// derived from the resolution (for meshes that are deliberately anisotropic,
/// e.g. long ducts where the axial variation is mild).
Mesh build_cylinder_mesh(double length, double diameter, double resolution,
                         int n_layers);

/// Structured rectangular block [0,size.x]x[0,size.y]x[0,size.z] with
/// nx x ny x nz cells, every cell split into right-angled prisms and tets by
/// the same orientation rule as the channel meshes (so the monotonicity
/// structure holds here too). Region Channel everywhere; z = 0 is SideA,
/// z = size.z is SideB, the four sides are LateralWall.
Mesh build_block_mesh(const Vec3& size, int nx, int ny, int nz);

MeshQualityReport quality(const Mesh& mesh);

/// Move every vertex by the P1 displacement field (flat vector, components
/// interleaved as x0,y0,z0,x1,...). Throws MeshInversionError naming the
/// worst element if any tet volume becomes nonpositive.
Mesh deform_mesh(const Mesh& mesh, const Eigen::VectorXd& displacement);

/// Restriction of a mesh to one region, with index maps back to the parent.
/// Facets that separated the region from the rest of the mesh become
/// boundary facets tagged LateralWall; parent boundary facets keep their tag.
struct Submesh {
  Mesh mesh;
  std::vector<int> vertex_to_parent;
  std::vector<int> tet_to_parent;
  std::vector<int> parent_vertex_to_sub;  ///< -1 where the parent vertex is absent
};

Submesh extract_region_submesh(const Mesh& mesh, Region region);

/// Plain-text mesh serialization (17 significant digits, stable ordering);
/// read_mesh_text(write_mesh_text(m)) reproduces the mesh exactly.
void write_mesh_text(const std::string& path, const Mesh& mesh);
Mesh read_mesh_text(const std::string& path);

}  // namespace nanochan
