#include "nanochan/elasticity.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace nanochan {

namespace {

using Triplet = Eigen::Triplet<double>;

const ElasticMaterial& material_for(const std::map<Region, ElasticMaterial>& materials,
                                    Region region) {
  const auto it = materials.find(region);
  if (it == materials.end()) {
    throw InvalidParameterError("elasticity: no material assigned to region " +
                                std::to_string(static_cast<int>(region)));
  }
  return it->second;
}

void check_temperature(const Mesh& mesh, const Eigen::VectorXd& T) {
  if (T.size() != mesh.n_vertices()) {
    throw InvalidParameterError("elasticity: temperature field has " +
                                std::to_string(T.size()) + " entries, expected " +
                                std::to_string(mesh.n_vertices()));
  }
}

}  // namespace

std::pair<double, double> lame_coefficients(double young_modulus, double poisson_ratio) {
  if (young_modulus <= 0.0) {
    throw InvalidParameterError("lame_coefficients: Young modulus must be positive");
  }
  if (poisson_ratio < 0.0 || poisson_ratio >= 0.5) {
    throw InvalidParameterError(
        "lame_coefficients: Poisson ratio must lie in [0, 0.5); the incompressible "
        "limit has no displacement-only form");
  }
  const double lambda = poisson_ratio * young_modulus /
                        ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
  const double mu = young_modulus / (2.0 * (1.0 + poisson_ratio));
  return {lambda, mu};
}

SparseMatrix assemble_elastic_stiffness(const Mesh& mesh,
                                        const std::map<Region, ElasticMaterial>& materials) {
  const int n = 3 * mesh.n_vertices();
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(mesh.n_tets()) * 144);
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const ElasticMaterial& mat = material_for(materials, mesh.region[k]);
    const auto [lambda, mu] = lame_coefficients(mat.young_modulus, mat.poisson_ratio);
    const ElementGeometry geo = element_geometry(mesh, k);
    const double V = geo.volume;
    const auto& tet = mesh.tets[k];
    for (int a = 0; a < 4; ++a) {
      const Vec3 ga = geo.grad_lambda.row(a);
      for (int b = 0; b < 4; ++b) {
        const Vec3 gb = geo.grad_lambda.row(b);
        const double dot = ga.dot(gb);
        for (int c = 0; c < 3; ++c) {
          for (int d = 0; d < 3; ++d) {
            // C eps(u):eps(v) = mu (delta_cd grad.grad + du_d dv_c)
            //                 + lambda div u div v for nodal shape pairs.
            double entry = mu * (ga[d] * gb[c]) + lambda * ga[c] * gb[d];
            if (c == d) entry += mu * dot;
            t.emplace_back(3 * tet[a] + c, 3 * tet[b] + d, V * entry);
          }
        }
      }
    }
  }
  SparseMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

Eigen::VectorXd assemble_thermal_load(const Mesh& mesh,
                                      const std::map<Region, ElasticMaterial>& materials,
                                      const Eigen::VectorXd& T, double T_ref) {
  check_temperature(mesh, T);
  Eigen::VectorXd F = Eigen::VectorXd::Zero(3 * mesh.n_vertices());
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const ElasticMaterial& mat = material_for(materials, mesh.region[k]);
    const auto [lambda, mu] = lame_coefficients(mat.young_modulus, mat.poisson_ratio);
    const ElementGeometry geo = element_geometry(mesh, k);
    const auto& tet = mesh.tets[k];
    double dT = 0.0;  // element mean of T - T_ref (exact for nodal T)
    for (int i = 0; i < 4; ++i) dT += 0.25 * (T[tet[i]] - T_ref);
    if (dT == 0.0) continue;
    // C eps_th = diag(2 mu alpha_c dT + lambda (sum alpha) dT); contracting
    // against eps(v) leaves only the diagonal gradient components.
    const double trace_term = lambda * mat.thermal_expansion.sum() * dT;
    for (int a = 0; a < 4; ++a) {
      const Vec3 ga = geo.grad_lambda.row(a);
      for (int c = 0; c < 3; ++c) {
        F[3 * tet[a] + c] +=
            geo.volume * (2.0 * mu * mat.thermal_expansion[c] * dT + trace_term) * ga[c];
      }
    }
  }
  return F;
}

Eigen::VectorXd solve_displacement(const Mesh& mesh,
                                   const std::map<Region, ElasticMaterial>& materials,
                                   const MechanicalLoad& load, const Eigen::VectorXd& T,
                                   double T_ref, SolveReport* report) {
  check_temperature(mesh, T);
  const int n = 3 * mesh.n_vertices();
  for (const auto& [region, sigma] : load.initial_stress) {
    (void)region;
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
      throw InvalidParameterError("solve_displacement: initial stress must be symmetric");
    }
  }

  SparseMatrix A = assemble_elastic_stiffness(mesh, materials);
  Eigen::VectorXd F = assemble_thermal_load(mesh, materials, T, T_ref);

  // Body force and the volume part of the initial-stress load,
  // -(sigma_0, eps(v)): for nodal shapes eps(v):sigma_0 reduces to
  // (sigma_0 grad lambda_a)_c per component.
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const ElementGeometry geo = element_geometry(mesh, k);
    const auto& tet = mesh.tets[k];
    const auto s0 = load.initial_stress.find(mesh.region[k]);
    for (int a = 0; a < 4; ++a) {
      const Vec3 ga = geo.grad_lambda.row(a);
      Vec3 fa = load.body_force * (geo.volume / 4.0);
      if (s0 != load.initial_stress.end()) fa -= geo.volume * (s0->second * ga);
      for (int c = 0; c < 3; ++c) F[3 * tet[a] + c] += fa[c];
    }
  }

  // Traction of the initial stress on the free (non-Dirichlet) boundary: the
  // by-parts reading of div sigma_0 keeps sigma_0 n where the displacement is
  // not prescribed. Vertex load A/3 per facet corner (exact for the constant
  // integrand).
  if (!load.initial_stress.empty()) {
    for (const auto& facet : mesh.boundary_facets) {
      if (load.dirichlet.count(facet.tag)) continue;
      const auto s0 = load.initial_stress.find(mesh.region[facet.tet]);
      if (s0 == load.initial_stress.end()) continue;
      const Vec3 traction = s0->second * facet_outward_normal(mesh, facet);
      const double wa = facet_area(mesh, facet) / 3.0;
      for (int v : facet.v) {
        for (int c = 0; c < 3; ++c) F[3 * v + c] += wa * traction[c];
      }
    }
  }

  // Constraints: tag patches (later enum tags win on shared vertices), then
  // point pins on top.
  std::map<int, double> flat;
  for (const auto& [tag, g] : load.dirichlet) {
    for (int v : boundary_vertices(mesh, {tag})) {
      for (int c = 0; c < 3; ++c) flat[3 * v + c] = g[c];
    }
  }
  for (const auto& [dof, value] : load.pins) {
    if (dof < 0 || dof >= n) {
      throw InvalidParameterError("solve_displacement: pin dof " + std::to_string(dof) +
                                  " outside [0, " + std::to_string(n) + ")");
    }
    flat[dof] = value;
  }
  if (flat.empty()) {
    throw SingularMatrixError(
        "solve_displacement: nothing constrains the body; rigid motions are free");
  }
  DirichletData bc;
  bc.dofs.reserve(flat.size());
  bc.values.resize(static_cast<Eigen::Index>(flat.size()));
  int i = 0;
  for (const auto& [dof, value] : flat) {
    bc.dofs.push_back(dof);
    bc.values[i++] = value;
  }
  apply_dirichlet(A, F, bc, true);

  // Bi-conjugate gradients on the (symmetric) eliminated system; the direct
  // factorization covers stagnation and breakdown.
  SolveReport local;
  Eigen::VectorXd d;
  try {
    d = bicg_solve(A, F, 1e-12, 4000, &local);
  } catch (const BreakdownError&) {
    local.converged = false;
  }
  if (!local.converged) {
    d = sparse_lu_solve(A, F);
    local.iterations = -local.iterations;  // flag the fallback in the report
    local.converged = true;
  }
  if (report) *report = local;
  return d;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> vertex_displacement(const Mesh& mesh,
                                                             const Eigen::VectorXd& d) {
  if (d.size() != 3 * mesh.n_vertices()) {
    throw InvalidParameterError("vertex_displacement: dof vector size mismatch");
  }
  Eigen::Matrix<double, Eigen::Dynamic, 3> out(mesh.n_vertices(), 3);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    for (int c = 0; c < 3; ++c) out(v, c) = d[3 * v + c];
  }
  return out;
}

}  // namespace nanochan
