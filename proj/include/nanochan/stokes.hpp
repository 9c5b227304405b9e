#pragma once

#include "nanochan/electrodiffusion.hpp"
#include "nanochan/fem.hpp"
#include "nanochan/linalg.hpp"
#include "nanochan/mesh.hpp"

#include <map>
#include <optional>
#include <string>

namespace nanochan {

// ---------------------------------------------------------------------------
// Creeping electrolyte flow. The momentum balance is solved in kinematic form
// (everything divided by the fluid density), so the velocity block carries
// the kinematic viscosity nu = mu/rho and the pressure unknown is p/rho;
// solve_stokes scales the pressure back to Pa before returning it. The
// transient term is a backward difference (u^{new} - u^{old})/dt; a
// non-finite dt requests the steady problem.
// ---------------------------------------------------------------------------

struct FluidProperties {
  double density = 1000.0;    ///< kg/m^3
  double viscosity = 1.0e-3;  ///< dynamic, Pa s

  double kinematic_viscosity() const { return viscosity / density; }
};

/// Boundary data per tag. Tags absent from both maps get the natural
/// zero-traction condition. A tag must not appear in both maps. The stress
/// datum prescribes the full normal traction sigma n = value * n (Pa).
struct StokesBC {
  std::map<BoundaryTag, Vec3> velocity;
  std::map<BoundaryTag, double> normal_stress;
};

/// Ionic body force per element, f = q sum_i z_i n_i E with the element-mean
/// concentration of each species (N/m^3). Concentrations are per-vertex, one
/// vector per species; E is per-element.
Eigen::Matrix<double, Eigen::Dynamic, 3> electric_body_force(
    const Mesh& mesh, const std::vector<Species>& species,
    const std::vector<Eigen::VectorXd>& concentrations,
    const Eigen::Matrix<double, Eigen::Dynamic, 3>& E);

/// Assembled (possibly stabilized) saddle system
///   A u + B^T p = F,  (B - C) u - S p = G.
/// A is the kinematic velocity operator (mass/dt + 2 nu eps:eps), B the
/// pressure/divergence coupling -(q, div u). The equal-order variant adds the
/// pressure-gradient stabilization S, its transient velocity coupling C, and
/// a force consistency term in G; all three are empty in the inf-sup stable
/// variant. Velocity dofs are interleaved per scalar dof: component c of
/// scalar dof s sits at 3 s + c, and scalar dofs order the mesh vertices
/// first, so the per-vertex velocity occupies the leading 3 n_v entries.
struct StokesSystem {
  FiniteElementSpace velocity_space;
  SparseMatrix A;
  SparseMatrix B;
  SparseMatrix C;
  SparseMatrix S;
  Eigen::VectorXd F;
  Eigen::VectorXd G;
  DirichletData velocity_bc;  ///< global velocity dofs (3s + c)
  Eigen::VectorXd pressure_mass_diag;  ///< lumped vertex mass (gauge + preconditioner)
  int n_pressure = 0;
  double nu = 0.0;
  double rho_f = 0.0;
  bool has_stress_bc = false;  ///< false => pressure only defined up to gauge

  int n_velocity_dofs() const { return 3 * velocity_space.n_dofs; }
};

/// Quadratic velocity / linear pressure pair (inf-sup stable, no
/// stabilization blocks). body_force is per element (rows = n_tets) or empty
/// for zero; u_old is the previous velocity (3 * n_dofs) or empty for zero
/// and is ignored in the steady case. Throws SingularMatrixError when
/// neither a Dirichlet velocity nor a stress datum constrains the system,
/// InvalidParameterError for dt <= 0 or malformed field sizes.
StokesSystem assemble_taylor_hood(const Mesh& mesh, const FluidProperties& props,
                                  const StokesBC& bcs,
                                  const Eigen::Matrix<double, Eigen::Dynamic, 3>& body_force,
                                  const Eigen::VectorXd& u_old, double dt);

/// Equal-order linear/linear pair stabilized by the element-residual pressure
/// term (h_K^2/delta) (grad p - residual, grad q). For linear velocity the
/// viscous part of the residual vanishes elementwise, which leaves the
/// transient coupling C, the pressure Laplacian S, and the force term in G.
/// delta defaults to 12 nu; it must be positive when given.
StokesSystem assemble_hfb(const Mesh& mesh, const FluidProperties& props, const StokesBC& bcs,
                          const Eigen::Matrix<double, Eigen::Dynamic, 3>& body_force,
                          const Eigen::VectorXd& u_old, double dt,
                          std::optional<double> delta = std::nullopt);

enum class StokesMethod { Uzawa, Direct };

struct StokesSolution {
  Eigen::VectorXd velocity;  ///< 3 * n_dofs, m/s
  Eigen::VectorXd pressure;  ///< n_vertices, Pa (zero volume mean if no stress BC)
  bool used_direct = false;
  bool fell_back = false;  ///< Uzawa requested but direct solve took over
  int uzawa_iterations = 0;
  double constraint_residual = 0.0;  ///< ||(B - C) u - S p - G||_2 of the returned pair
  std::string warning;
};

/// Solve the assembled system. Uzawa iterates on the pressure Schur
/// complement with the nu-scaled pressure mass preconditioner; rho <= 0
/// (the default) picks the acceleration parameter by an exact line search
/// on the first step. The iteration falls back to a direct factorization of
/// the full block matrix when it stalls (the transient systems at nanometer
/// scales condition the Schur complement badly); Direct requests the block
/// factorization outright. Without any stress boundary the pressure gauge
/// is fixed to zero volume mean.
StokesSolution solve_stokes(const StokesSystem& system, StokesMethod method,
                            double rho = 0.0);

/// Per-vertex velocity rows extracted from the interleaved solution vector
/// (the convective field handed to the transport assembly).
Eigen::Matrix<double, Eigen::Dynamic, 3> vertex_velocity(const Mesh& mesh,
                                                         const FiniteElementSpace& space,
                                                         const Eigen::VectorXd& u);

}  // namespace nanochan
