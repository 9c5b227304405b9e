#include "nanochan/thermal.hpp"

#include "nanochan/linalg.hpp"

#include <cmath>
#include <map>
#include <vector>

namespace nanochan {

namespace {

/// Flatten per-tag boundary values into pointwise Dirichlet data. Vertices
/// shared by two tagged patches (e.g. the rim circle between a terminal disc
/// and the wall) take the value of the later tag in enum order, so the rule
/// is deterministic.
DirichletData tag_dirichlet(const Mesh& mesh, const std::map<BoundaryTag, double>& values) {
  std::map<int, double> pointwise;
  for (const auto& [tag, value] : values) {
    for (int v : boundary_vertices(mesh, {tag})) pointwise[v] = value;
  }
  DirichletData bc;
  bc.dofs.reserve(pointwise.size());
  bc.values.resize(static_cast<Eigen::Index>(pointwise.size()));
  Eigen::Index k = 0;
  for (const auto& [v, value] : pointwise) {
    bc.dofs.push_back(v);
    bc.values[k++] = value;
  }
  return bc;
}

}  // namespace

Eigen::VectorXd solve_heat(const Mesh& mesh, const ThermalProperties& props,
                           const std::map<BoundaryTag, double>& dirichlet,
                           const Eigen::VectorXd& T_old, double dt) {
  if (props.density <= 0.0 || props.specific_heat <= 0.0 || props.conductivity <= 0.0) {
    throw InvalidParameterError("solve_heat: density, specific heat and conductivity must be positive");
  }
  const int n = mesh.n_vertices();
  if (T_old.size() != n) {
    throw InvalidParameterError("solve_heat: T_old has " + std::to_string(T_old.size()) +
                                " entries for " + std::to_string(n) + " vertices");
  }
  const bool steady = !std::isfinite(dt);
  if (!steady && dt <= 0.0) throw InvalidParameterError("solve_heat: dt must be positive");
  if (steady && dirichlet.empty()) {
    throw SingularMatrixError("solve_heat: steady problem with every boundary adiabatic");
  }

  const FiniteElementSpace space = make_space(mesh, SpaceKind::P1);
  SparseMatrix A = assemble_p1_stiffness(
      mesh, space, Eigen::VectorXd::Constant(mesh.n_tets(), props.conductivity));
  const Eigen::VectorXd ml = lumped_mass(mesh);
  Eigen::VectorXd rhs = props.volumetric_source * ml;

  if (!steady) {
    // Lumped mass keeps the system an M-matrix, which is what the discrete
    // maximum principle below rests on.
    const double a = props.density * props.specific_heat / dt;
    std::vector<Eigen::Triplet<double>> diag;
    diag.reserve(n);
    for (int v = 0; v < n; ++v) diag.emplace_back(v, v, a * ml[v]);
    SparseMatrix M(n, n);
    M.setFromTriplets(diag.begin(), diag.end());
    A += M;
    rhs += a * ml.cwiseProduct(T_old);
  }

  const DirichletData bc = tag_dirichlet(mesh, dirichlet);
  Eigen::VectorXd b = rhs;
  apply_dirichlet(A, b, bc, false);
  Eigen::VectorXd T = sparse_lu_solve(A, b);

  if (T.minCoeff() <= 0.0) {
    throw SimulationError("solve_heat: nonpositive temperature " +
                          std::to_string(T.minCoeff()) +
                          " K in the solution (maximum principle violated; solver fault)");
  }
  return T;
}

double boundary_conductive_flux(const Mesh& mesh, const Eigen::VectorXd& T, double conductivity,
                                const std::vector<BoundaryTag>& tags) {
  double flux = 0.0;
  for (const auto& facet : mesh.boundary_facets) {
    bool wanted = false;
    for (BoundaryTag t : tags) wanted = wanted || (t == facet.tag);
    if (!wanted) continue;
    const ElementGeometry geo = element_geometry(mesh, facet.tet);
    Vec3 grad = Vec3::Zero();
    for (int i = 0; i < 4; ++i) {
      grad += T[mesh.tets[facet.tet][i]] * geo.grad_lambda.row(i).transpose();
    }
    flux += conductivity * grad.dot(facet_outward_normal(mesh, facet)) * facet_area(mesh, facet);
  }
  return flux;
}

}  // namespace nanochan
