#pragma once

#include "nanochan/fem.hpp"

#include <map>

namespace nanochan {

/// Material data of the heat equation rho c dT/dt - div(k grad T) = Q.
/// Table-style inputs omit c and k; the defaults are liquid-water values and
/// only enter transients (steady profiles are c,k-independent).
struct ThermalProperties {
  double density = 1000.0;         ///< rho, kg/m^3
  double specific_heat = 4186.0;   ///< c, J kg^-1 K^-1
  double conductivity = 0.6;       ///< k, W m^-1 K^-1
  double volumetric_source = 0.0;  ///< Q, W/m^3 (zero in all scenarios)
};

/// One backward-Euler step of the heat equation with lumped mass (the lumping
/// keeps the system an M-matrix on the structured meshes, hence the discrete
/// maximum principle). Tags absent from `dirichlet` are adiabatic; dt = +inf
/// solves the steady problem. Throws SimulationError if the solve returns a
/// nonpositive temperature (impossible under the maximum principle, so it
/// indicates a solver fault), SingularMatrixError for an all-adiabatic steady
/// problem.
Eigen::VectorXd solve_heat(const Mesh& mesh, const ThermalProperties& props,
                           const std::map<BoundaryTag, double>& dirichlet,
                           const Eigen::VectorXd& T_old, double dt);

/// Outward conductive flux integral of k grad T . n over the facets with the
/// given tags (W).
double boundary_conductive_flux(const Mesh& mesh, const Eigen::VectorXd& T, double conductivity,
                                const std::vector<BoundaryTag>& tags);

}  // namespace nanochan
