#pragma once

#include "nanochan/linalg.hpp"
#include "nanochan/mesh.hpp"

#include <array>
#include <vector>

namespace nanochan {

// ---------------------------------------------------------------------------
// Scalar special functions of the exponentially fitted discretization.
// ---------------------------------------------------------------------------

/// Bernoulli function B(x) = x / (e^x - 1), the exponential-fitting weight.
/// Series branch for |x| < 1e-4 keeps full precision through the removable
/// singularity; the exact limits B(+inf) = 0 and B(-inf) = -x are preserved.
double bernoulli(double x);

/// Harmonic mean 2ab/(a+b) of two positive values (edge endpoint averaging of
/// diffusion coefficients). Throws InvalidParameterError unless a, b > 0.
double harmonic_average_edge(double a, double b);

/// Harmonic average of a P1 field over an element,
/// H(q) = |K| / int_K q^{-1} = 1 / sum_i w_i / q(x_i),
/// evaluated with the 4-point degree-2 rule (exact for constant q). All four
/// vertex values must be positive.
double harmonic_average_element(const std::array<double, 4>& vertex_values);

// ---------------------------------------------------------------------------
// Quadrature on the reference tetrahedron (barycentric points, weights
// normalized to sum 1; multiply by |K|).
// ---------------------------------------------------------------------------

struct QuadraturePoint {
  std::array<double, 4> lambda;
  double weight;
};

/// degree <= 2: 4-point rule; degree <= 5: 14-point rule (all weights
/// positive). Higher degrees are rejected.
const std::vector<QuadraturePoint>& quadrature_rule(int degree);

// ---------------------------------------------------------------------------
// Element geometry and Lagrange spaces.
// ---------------------------------------------------------------------------

struct ElementGeometry {
  Eigen::Matrix<double, 4, 3> grad_lambda;  ///< gradients of the barycentric coordinates
  double volume = 0.0;
};

ElementGeometry element_geometry(const Mesh& mesh, int k);

enum class SpaceKind { P1, P2 };

/// Scalar Lagrange space on a mesh. P1 dofs are the vertices; P2 dofs are the
/// vertices followed by the global edges. Per-element local dof order: the 4
/// vertices, then (for P2) the 6 edges in local pairs
/// (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
struct FiniteElementSpace {
  SpaceKind kind = SpaceKind::P1;
  int n_dofs = 0;
  int n_vertex_dofs = 0;
  int dofs_per_element = 4;
  Eigen::Matrix<int, Eigen::Dynamic, 10> element_dofs;
  std::vector<std::array<int, 2>> edges;  ///< P2 only: global edge -> (a,b), a < b

  int dof(int element, int local) const { return element_dofs(element, local); }
};

FiniteElementSpace make_space(const Mesh& mesh, SpaceKind kind);

/// Local edge order used by P2 spaces and edge-based assembly.
inline constexpr std::array<std::array<int, 2>, 6> kTetEdges = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

/// Basis values/gradients at a barycentric point. For P1 only the first 4
/// entries are meaningful.
double basis_value(SpaceKind kind, int local, const std::array<double, 4>& lambda);
Vec3 basis_gradient(SpaceKind kind, int local, const std::array<double, 4>& lambda,
                    const ElementGeometry& geo);

// ---------------------------------------------------------------------------
// Assembly.
// ---------------------------------------------------------------------------

/// Scatter-add assembly of a square operator from per-element dense blocks.
/// The kernel fills `local` (sized per element) for element k; contributions
/// accumulate in element order, deterministically.
template <class Kernel>
SparseMatrix assemble_matrix(const Mesh& mesh, const FiniteElementSpace& rows,
                             const FiniteElementSpace& cols, Kernel&& kernel) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(mesh.n_tets()) * rows.dofs_per_element *
                cols.dofs_per_element);
  Eigen::MatrixXd local(rows.dofs_per_element, cols.dofs_per_element);
  for (int k = 0; k < mesh.n_tets(); ++k) {
    local.setZero();
    kernel(k, local);
    for (int i = 0; i < rows.dofs_per_element; ++i) {
      for (int j = 0; j < cols.dofs_per_element; ++j) {
        if (local(i, j) != 0.0) {
          trips.emplace_back(rows.dof(k, i), cols.dof(k, j), local(i, j));
        }
      }
    }
  }
  SparseMatrix A(rows.n_dofs, cols.n_dofs);
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

/// P1 stiffness with per-element scalar coefficient, sum_K c_K (grad u, grad v)_K.
SparseMatrix assemble_p1_stiffness(const Mesh& mesh, const FiniteElementSpace& space,
                                   const Eigen::VectorXd& element_coefficient);

/// P1 consistent mass with per-element coefficient.
SparseMatrix assemble_p1_mass(const Mesh& mesh, const FiniteElementSpace& space,
                              const Eigen::VectorXd& element_coefficient);

/// Row-sum lumped P1 mass: entry v gets sum over elements containing v of
/// |K|/4, optionally scaled
/// by a per-vertex weight.
Eigen::VectorXd lumped_mass(const Mesh& mesh, const Eigen::VectorXd* vertex_weight = nullptr);

// ---------------------------------------------------------------------------
// Boundary data.
// ---------------------------------------------------------------------------

struct DirichletData {
  std::vector<int> dofs;
  Eigen::VectorXd values;
};

/// Vertices lying on facets with any of the given tags, ascending, no
/// duplicates.
std::vector<int> boundary_vertices(const Mesh& mesh, const std::vector<BoundaryTag>& tags);

/// P2 dofs (vertices and edge midpoints) on facets with the given tags.
std::vector<int> boundary_dofs(const Mesh& mesh, const FiniteElementSpace& space,
                               const std::vector<BoundaryTag>& tags);

/// Impose u = value by row replacement (row cleared, unit diagonal, RHS set).
/// With symmetric = true the columns are eliminated into the RHS as well,
/// preserving symmetry for SPD solvers.
void apply_dirichlet(SparseMatrix& A, Eigen::VectorXd& b, const DirichletData& bc,
                     bool symmetric = false);

double facet_area(const Mesh& mesh, const BoundaryFacet& facet);
Vec3 facet_outward_normal(const Mesh& mesh, const BoundaryFacet& facet);

/// Geometric location of a scalar dof: the vertex itself for vertex dofs, the
/// edge midpoint for P2 edge dofs. Nodal interpolation of a continuous
/// function samples it at these points.
Vec3 dof_position(const Mesh& mesh, const FiniteElementSpace& space, int dof);

}  // namespace nanochan
