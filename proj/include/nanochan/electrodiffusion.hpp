#pragma once

#include "nanochan/fem.hpp"

#include <map>
#include <string>
#include <vector>

namespace nanochan {

/// One ionic species: valence, mobility, and its boundary/initial data.
/// Boundary tags absent from `dirichlet_concentration` carry the natural
/// no-flux condition.
struct Species {
  std::string name;
  int valence = 1;
  double mobility = 0.0;  ///< m^2 V^-1 s^-1
  std::map<BoundaryTag, double> dirichlet_concentration;  ///< m^-3
  double initial_concentration = 0.0;                     ///< m^-3
};

/// Electrostatics of the electrolyte. `fixed_charge` is a per-vertex signed
/// number density (m^-3) multiplying the electron charge; size 0 means zero
/// everywhere.
struct ElectrostaticEnvironment {
  double permittivity = 80.0 * phys::eps0;  ///< F/m (relative 80: aqueous electrolyte)
  Eigen::VectorXd fixed_charge;
};

/// Dimensionless potential of the exponential change of variables
/// n = e^Psi n~. Per element, Psi at vertex v uses the element-harmonic
/// temperature in the drift term,
///   psi_K,v = -[ q z phi_v / (k_B H_K(T)) + ln(T_v / T_ref) ],
/// while the per-vertex values (used for the column rescaling) use the vertex
/// temperature itself.
struct SlotboomData {
  Eigen::Matrix<double, Eigen::Dynamic, 4> psi_element;  ///< n_tets x 4
  Eigen::VectorXd psi_vertex;
  double T_ref = 300.0;
};

/// Einstein relation D = mu k_B T / (q |z|). Throws for z = 0 (no drift
/// coupling; a pure-diffusion species needs an explicit D) and for T <= 0.
double einstein_diffusivity(const Species& species, double T);

/// Potential equation -div(eps grad phi) = q (sum_i z_i n_i + rho_fixed).
/// Dirichlet on the tags given (throws SingularMatrixError when the map is
/// empty: the lateral walls are natural), homogeneous Neumann elsewhere.
Eigen::VectorXd solve_poisson(const Mesh& mesh, const ElectrostaticEnvironment& env,
                              const std::vector<Species>& species,
                              const std::vector<Eigen::VectorXd>& concentrations,
                              const std::map<BoundaryTag, double>& dirichlet);

/// Per-element electric field E = -grad phi (constant on each tet).
Eigen::Matrix<double, Eigen::Dynamic, 3> element_electric_field(const Mesh& mesh,
                                                                const Eigen::VectorXd& phi);

/// Slotboom exponents for one species. Guards |Psi| <= 500 and T > 0,
/// naming the offending vertex.
SlotboomData compute_slotboom(const Mesh& mesh, const Eigen::VectorXd& phi,
                              const Eigen::VectorXd& T, const Species& species, double T_ref);

/// Assembled transport system K x = F (boundary conditions not yet applied).
struct TransportSystem {
  SparseMatrix K;
  Eigen::VectorXd F;
};

/// Backward-Euler edge-averaged (exponentially fitted) system in the Slotboom
/// variable n~:
///   K = (1/dt) lumped-mass(e^Psi) + edge-averaged stiffness + convection,
///   F = (1/dt) lumped-mass n_old,
/// where each edge carries omega_E^K * D_E * e^{psi_a} B(psi_a - psi_b) with
/// D_E the harmonic endpoint average of the Einstein diffusivity and
/// omega_E^K = -(local P1 stiffness off-diagonal). On a 1D chain the scheme
/// reduces to the classical two-point exponential-fitting flux, hence nodal
/// exactness for constant-coefficient steady drift-diffusion. `velocity` is a
/// per-vertex field (0 rows = no flow); dt = +inf drops the time terms
/// (steady state).
TransportSystem assemble_np_eafe(const Mesh& mesh, const Species& species,
                                 const Eigen::VectorXd& phi, const Eigen::VectorXd& T,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 3>& velocity,
                                 double dt, const Eigen::VectorXd& n_old, double T_ref);

/// Same system assembled directly in the physical concentration n (the
/// column-rescaled form): every column-a entry carries the bounded factor
/// e^{psi_a - Psi_a} B(...) instead of the raw exponentials, so the dynamic
/// range stays moderate even for large potentials. Solving this against the
/// same F gives n without post-processing.
TransportSystem assemble_np_rescaled(const Mesh& mesh, const Species& species,
                                     const Eigen::VectorXd& phi, const Eigen::VectorXd& T,
                                     const Eigen::Matrix<double, Eigen::Dynamic, 3>& velocity,
                                     double dt, const Eigen::VectorXd& n_old, double T_ref);

/// K * diag(e^{-Psi}): maps the Slotboom system onto the concentration
/// unknowns. Throws RescalingError (reporting max |Psi|) when the exponential
/// would overflow.
SparseMatrix column_rescale(const SparseMatrix& K, const Eigen::VectorXd& psi_vertex);

/// Dirichlet data for the concentration unknowns (values n-bar per tag), and
/// for the Slotboom unknowns (values n-bar e^{-Psi_I}).
DirichletData species_dirichlet(const Mesh& mesh, const Species& species);
DirichletData species_dirichlet_slotboom(const Mesh& mesh, const Species& species,
                                         const SlotboomData& slotboom);

/// Extra pointwise anchors (used to close pure-Neumann equilibrium problems).
struct VertexPin {
  int vertex = -1;
  double value = 0.0;
};

/// Inner self-consistency cycle configuration: species, electrostatics, heat,
/// and the stopping rule on the scaled solution vector.
struct TpnpSetup {
  std::vector<Species> species;
  ElectrostaticEnvironment env;
  std::map<BoundaryTag, double> phi_dirichlet;
  std::vector<VertexPin> phi_pins;
  std::vector<std::vector<VertexPin>> species_pins;  ///< sized like species, or empty

  struct Heat {
    bool enabled = true;
    double density = 1000.0;        ///< kg/m^3
    double specific_heat = 4186.0;  ///< J kg^-1 K^-1
    double conductivity = 0.6;      ///< W m^-1 K^-1
    double volumetric_source = 0.0; ///< W/m^3
    std::map<BoundaryTag, double> dirichlet;
  } heat;

  double T_ref = 300.0;
  double toll = 1e-3;   ///< threshold on ||U^{j+1} - U^j||_2, scaled variables
  int max_outer = 100;
};

struct TpnpState {
  std::vector<Eigen::VectorXd> concentration;  ///< per species, transport-mesh vertices
  Eigen::VectorXd phi;                         ///< transport-mesh vertices
  Eigen::VectorXd temperature;                 ///< heat-mesh vertices
};

/// History of the stopping criterion, one entry per completed sweep.
struct TpnpReport {
  int iterations = 0;
  std::vector<double> increments;
};

/// Fixed-point sweep potential -> each species -> temperature, repeated until
/// the scaled increment drops below toll. `old_state` is the previous *time
/// level* (every backward-Euler solve steps from it); the frozen velocity is
/// per transport-mesh vertex (0 rows = no flow). Throws OuterDivergenceError
/// with the increment history after max_outer sweeps.
TpnpState tpnp_inner_cycle(const Mesh& transport_mesh, const TpnpSetup& setup,
                           const TpnpState& old_state,
                           const Eigen::Matrix<double, Eigen::Dynamic, 3>& velocity, double dt,
                           TpnpReport* report = nullptr);

/// Two-mesh composition: the heat equation lives on the enclosing mesh (solid
/// plus fluid), transport on its fluid restriction. `fluid` must be the
/// submesh extraction of `heat_mesh`'s fluid region; temperatures are read at
/// the fluid vertices through the submesh maps.
TpnpState tpnp_inner_cycle(const Mesh& heat_mesh, const Submesh& fluid, const TpnpSetup& setup,
                           const TpnpState& old_state,
                           const Eigen::Matrix<double, Eigen::Dynamic, 3>& velocity, double dt,
                           TpnpReport* report = nullptr);

}  // namespace nanochan
