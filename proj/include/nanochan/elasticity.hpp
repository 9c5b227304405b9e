#pragma once

#include "nanochan/fem.hpp"
#include "nanochan/linalg.hpp"
#include "nanochan/mesh.hpp"

#include <map>
#include <utility>
#include <vector>

namespace nanochan {

// ---------------------------------------------------------------------------
// Small-strain isotropic elasticity of the channel scaffold. Displacements
// are linear per element, interleaved like the flow velocities (component c
// of vertex v at 3 v + c). Hooke's law sigma = 2 mu eps + lambda tr(eps) I
// acts on the elastic strain eps - eps_th, with the orthotropic thermal
// strain eps_th = diag(alpha_i (T - T_ref)); a region-wise initial stress
// enters the load weakly (see solve_displacement).
// ---------------------------------------------------------------------------

/// lambda = nu E / ((1+nu)(1-2nu)), mu = E / (2(1+nu)). Throws for E <= 0 or
/// nu outside (0, 0.5) -- the incompressible limit is not representable in
/// pure displacement form. The nu -> 0 limit (lambda -> 0) is admitted via
/// nu = 0 exactly for degenerate test materials.
std::pair<double, double> lame_coefficients(double young_modulus, double poisson_ratio);

struct ElasticMaterial {
  double young_modulus = 0.0;              ///< Pa
  double poisson_ratio = 0.0;
  Vec3 thermal_expansion = Vec3::Zero();   ///< per-axis, 1/K
};

struct MechanicalLoad {
  Vec3 body_force = Vec3::Zero();                    ///< N/m^3, uniform
  std::map<Region, Eigen::Matrix3d> initial_stress;  ///< Pa, symmetric, per region
  std::map<BoundaryTag, Vec3> dirichlet;             ///< prescribed displacement, m
  /// Extra point constraints (global dof 3 v + c -> value): the minimal
  /// rigid-mode pinning used when no boundary patch is held.
  std::vector<std::pair<int, double>> pins;
};

/// Thermal-strain load vector: integral of C eps_th(T) : eps(v) with the
/// vertex temperature field T. Linear in (T - T_ref) and zero at T == T_ref.
Eigen::VectorXd assemble_thermal_load(const Mesh& mesh,
                                      const std::map<Region, ElasticMaterial>& materials,
                                      const Eigen::VectorXd& T, double T_ref);

/// Elastic stiffness with region-wise Lame coefficients (no constraints
/// applied). Exposed for the structural invariants: symmetry and the
/// rigid-motion kernel.
SparseMatrix assemble_elastic_stiffness(const Mesh& mesh,
                                        const std::map<Region, ElasticMaterial>& materials);

/// Equilibrium displacement under thermal strain, initial stress, and body
/// force. The initial-stress load is integrated by parts,
/// -(sigma_0, eps(v)) plus its traction on the non-Dirichlet boundary, which
/// is the meaningful reading when sigma_0 jumps between regions. Solved with
/// the biconjugate-gradient iteration (the matrix is SPD after elimination);
/// a stagnating iteration falls back to the direct factorization. Throws
/// SingularMatrixError when neither a Dirichlet tag nor a pin constrains the
/// body, InvalidParameterError for missing region materials or size
/// mismatches.
Eigen::VectorXd solve_displacement(const Mesh& mesh,
                                   const std::map<Region, ElasticMaterial>& materials,
                                   const MechanicalLoad& load, const Eigen::VectorXd& T,
                                   double T_ref, SolveReport* report = nullptr);

/// Per-vertex displacement rows from the interleaved solution (the geometry
/// update handed to deform_mesh).
Eigen::Matrix<double, Eigen::Dynamic, 3> vertex_displacement(const Mesh& mesh,
                                                             const Eigen::VectorXd& d);

}  // namespace nanochan
