#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace nanochan {

using Vec3 = Eigen::Vector3d;

/// Physical constants (SI, CODATA 2018 exact values).
namespace phys {
inline constexpr double k_B = 1.380649e-23;       ///< Boltzmann constant [J/K]
inline constexpr double q_e = 1.602176634e-19;    ///< elementary charge [C]
inline constexpr double eps0 = 8.8541878128e-12;  ///< vacuum permittivity [F/m]
}  // namespace phys

/// Material subdomains of the simulation box. The ion-conducting pore is
/// Channel; Omega1..Omega3 are the surrounding solid blocks ordered along the
/// channel axis (Omega2 is the middle third, where gating prestress acts).
enum class Region : int { Channel = 0, Omega1 = 1, Omega2 = 2, Omega3 = 3 };

/// Boundary pieces. SideA/SideB are the channel terminal cross-sections at
/// z = 0 and z = L. LateralWall is the curved fluid-solid interface (outer
/// boundary of a stand-alone cylinder mesh, interface facets of an extracted
/// fluid submesh). OuterWall is the exterior surface of the solid box.
enum class BoundaryTag : int { SideA = 0, SideB = 1, LateralWall = 2, OuterWall = 3 };

const char* to_string(Region r);
const char* to_string(BoundaryTag t);

/// Base class for every error the library throws on contract violations.
struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear system has no unique solution (empty row/column, zero pivot, ...).
struct SingularMatrixError : SimulationError {
  using SimulationError::SimulationError;
};

/// Krylov inner product collapsed; the iteration cannot continue.
struct BreakdownError : SimulationError {
  using SimulationError::SimulationError;
};

/// An exponential change of variables left the range of double precision.
struct RescalingError : SimulationError {
  using SimulationError::SimulationError;
};

/// A displacement field turned at least one element inside out.
struct MeshInversionError : SimulationError {
  using SimulationError::SimulationError;
};

/// The outer fixed-point iteration failed to reach its tolerance.
struct OuterDivergenceError : SimulationError {
  using SimulationError::SimulationError;
};

/// Bad user input (config values, geometry, missing keys, ...).
struct InvalidParameterError : SimulationError {
  using SimulationError::SimulationError;
};

}  // namespace nanochan
