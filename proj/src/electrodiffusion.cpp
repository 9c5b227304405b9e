#include "nanochan/electrodiffusion.hpp"

#include "nanochan/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nanochan {

namespace {

using VelocityField = Eigen::Matrix<double, Eigen::Dynamic, 3>;

Eigen::Matrix4d local_stiffness(const ElementGeometry& geo) {
  return geo.volume * (geo.grad_lambda * geo.grad_lambda.transpose());
}

/// Tiny-positive clamp for the edge weights omega = -k_ab: the structured
/// meshes are exactly nonobtuse, so a weight that is negative only at
/// roundoff level is fp noise and is flushed to zero. A genuinely negative
/// weight (obtuse element) is kept, so meshes violating the angle condition
/// fail the monotonicity checks honestly instead of being silently repaired.
double clamp_edge_weight(double omega, double scale) {
  if (omega < 0.0 && omega >= -1e-12 * scale) return 0.0;
  return omega;
}

DirichletData flatten_pointwise(const std::map<int, double>& pointwise) {
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

/// Tag values first (enum order, later tags win at shared vertices such as
/// the rim circles), then pointwise pins on top.
std::map<int, double> pointwise_from_tags(const Mesh& mesh,
                                          const std::map<BoundaryTag, double>& tags,
                                          const std::vector<VertexPin>& pins) {
  std::map<int, double> pointwise;
  for (const auto& [tag, value] : tags) {
    for (int v : boundary_vertices(mesh, {tag})) pointwise[v] = value;
  }
  for (const VertexPin& pin : pins) {
    if (pin.vertex < 0 || pin.vertex >= mesh.n_vertices()) {
      throw InvalidParameterError("dirichlet pin: vertex " + std::to_string(pin.vertex) +
                                  " out of range");
    }
    pointwise[pin.vertex] = pin.value;
  }
  return pointwise;
}

void check_field_size(const Eigen::VectorXd& f, int n, const char* what) {
  if (f.size() != n) {
    throw InvalidParameterError(std::string(what) + ": field has " + std::to_string(f.size()) +
                                " entries for " + std::to_string(n) + " vertices");
  }
}

void check_velocity(const VelocityField& u, int n, const char* what) {
  if (u.rows() != 0 && u.rows() != n) {
    throw InvalidParameterError(std::string(what) + ": velocity has " +
                                std::to_string(u.rows()) + " rows for " + std::to_string(n) +
                                " vertices");
  }
}

Eigen::VectorXd solve_poisson_impl(const Mesh& mesh, const ElectrostaticEnvironment& env,
                                   const std::vector<Species>& species,
                                   const std::vector<Eigen::VectorXd>& concentrations,
                                   const std::map<BoundaryTag, double>& dirichlet,
                                   const std::vector<VertexPin>& pins) {
  if (env.permittivity <= 0.0) {
    throw InvalidParameterError("solve_poisson: permittivity must be positive");
  }
  if (species.size() != concentrations.size()) {
    throw InvalidParameterError("solve_poisson: " + std::to_string(species.size()) +
                                " species but " + std::to_string(concentrations.size()) +
                                " concentration fields");
  }
  if (dirichlet.empty() && pins.empty()) {
    throw SingularMatrixError("solve_poisson: potential fixed nowhere (all-natural boundary)");
  }
  const int n = mesh.n_vertices();

  // Nodal charge number density sum_i z_i n_i + rho_fixed.
  Eigen::VectorXd charge = Eigen::VectorXd::Zero(n);
  for (size_t i = 0; i < species.size(); ++i) {
    check_field_size(concentrations[i], n, "solve_poisson concentration");
    charge += static_cast<double>(species[i].valence) * concentrations[i];
  }
  if (env.fixed_charge.size() != 0) {
    check_field_size(env.fixed_charge, n, "solve_poisson fixed_charge");
    charge += env.fixed_charge;
  }

  const FiniteElementSpace space = make_space(mesh, SpaceKind::P1);
  SparseMatrix A = assemble_p1_stiffness(
      mesh, space, Eigen::VectorXd::Constant(mesh.n_tets(), env.permittivity));
  const SparseMatrix M =
      assemble_p1_mass(mesh, space, Eigen::VectorXd::Ones(mesh.n_tets()));
  Eigen::VectorXd b = M * (phys::q_e * charge);

  const DirichletData bc = flatten_pointwise(pointwise_from_tags(mesh, dirichlet, pins));
  apply_dirichlet(A, b, bc, false);
  return sparse_lu_solve(A, b);
}

/// Shared element-loop scaffolding of the two transport assemblers. The
/// `Edge`, `Mass` and `Convection` callables receive everything needed to
/// scatter their variant's entries.
struct AssemblyInput {
  const Mesh& mesh;
  const Species& species;
  const Eigen::VectorXd& phi;
  const Eigen::VectorXd& T;
  const VelocityField& velocity;
  double dt;
  const Eigen::VectorXd& n_old;
  double T_ref;
};

void validate_assembly_input(const AssemblyInput& in) {
  const int n = in.mesh.n_vertices();
  check_field_size(in.phi, n, "transport assembly phi");
  check_field_size(in.T, n, "transport assembly T");
  check_velocity(in.velocity, n, "transport assembly");
  const bool steady = !std::isfinite(in.dt);
  if (!steady) {
    if (in.dt <= 0.0) throw InvalidParameterError("transport assembly: dt must be positive");
    check_field_size(in.n_old, n, "transport assembly n_old");
  }
}

}  // namespace

double einstein_diffusivity(const Species& species, double T) {
  if (species.valence == 0) {
    throw InvalidParameterError("einstein_diffusivity: species '" + species.name +
                                "' has zero valence (no drift coupling); supply an explicit "
                                "diffusivity instead");
  }
  if (T <= 0.0) {
    throw InvalidParameterError("einstein_diffusivity: nonpositive temperature " +
                                std::to_string(T));
  }
  if (species.mobility <= 0.0) {
    throw InvalidParameterError("einstein_diffusivity: species '" + species.name +
                                "' has nonpositive mobility");
  }
  return species.mobility * phys::k_B * T / (phys::q_e * std::abs(species.valence));
}

Eigen::VectorXd solve_poisson(const Mesh& mesh, const ElectrostaticEnvironment& env,
                              const std::vector<Species>& species,
                              const std::vector<Eigen::VectorXd>& concentrations,
                              const std::map<BoundaryTag, double>& dirichlet) {
  return solve_poisson_impl(mesh, env, species, concentrations, dirichlet, {});
}

Eigen::Matrix<double, Eigen::Dynamic, 3> element_electric_field(const Mesh& mesh,
                                                                const Eigen::VectorXd& phi) {
  check_field_size(phi, mesh.n_vertices(), "element_electric_field");
  Eigen::Matrix<double, Eigen::Dynamic, 3> E(mesh.n_tets(), 3);
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const ElementGeometry geo = element_geometry(mesh, k);
    Eigen::RowVector3d grad = Eigen::RowVector3d::Zero();
    for (int i = 0; i < 4; ++i) grad += phi[mesh.tets[k][i]] * geo.grad_lambda.row(i);
    E.row(k) = -grad;
  }
  return E;
}

SlotboomData compute_slotboom(const Mesh& mesh, const Eigen::VectorXd& phi,
                              const Eigen::VectorXd& T, const Species& species, double T_ref) {
  const int n = mesh.n_vertices();
  check_field_size(phi, n, "compute_slotboom phi");
  check_field_size(T, n, "compute_slotboom T");
  if (T_ref <= 0.0) throw InvalidParameterError("compute_slotboom: T_ref must be positive");

  SlotboomData slot;
  slot.T_ref = T_ref;
  slot.psi_vertex.resize(n);
  slot.psi_element.resize(mesh.n_tets(), 4);
  const double z = static_cast<double>(species.valence);

  auto guard = [&](double psi, int vertex) {
    if (!(std::abs(psi) <= 500.0)) {
      std::ostringstream msg;
      msg << "compute_slotboom: |Psi| = " << std::abs(psi) << " at vertex " << vertex
          << " exceeds the overflow guard 500 (species '" << species.name << "')";
      throw RescalingError(msg.str());
    }
  };

  for (int v = 0; v < n; ++v) {
    if (T[v] <= 0.0) {
      throw InvalidParameterError("compute_slotboom: nonpositive temperature at vertex " +
                                  std::to_string(v));
    }
    slot.psi_vertex[v] =
        -(phys::q_e * z * phi[v] / (phys::k_B * T[v]) + std::log(T[v] / T_ref));
    guard(slot.psi_vertex[v], v);
  }
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const auto& tet = mesh.tets[k];
    const double HK =
        harmonic_average_element({T[tet[0]], T[tet[1]], T[tet[2]], T[tet[3]]});
    for (int i = 0; i < 4; ++i) {
      const int v = tet[i];
      slot.psi_element(k, i) =
          -(phys::q_e * z * phi[v] / (phys::k_B * HK) + std::log(T[v] / T_ref));
      guard(slot.psi_element(k, i), v);
    }
  }
  return slot;
}

TransportSystem assemble_np_eafe(const Mesh& mesh, const Species& species,
                                 const Eigen::VectorXd& phi, const Eigen::VectorXd& T,
                                 const VelocityField& velocity, double dt,
                                 const Eigen::VectorXd& n_old, double T_ref) {
  const AssemblyInput in{mesh, species, phi, T, velocity, dt, n_old, T_ref};
  validate_assembly_input(in);
  const bool steady = !std::isfinite(dt);
  const bool convect = velocity.rows() != 0;
  const int n = mesh.n_vertices();

  const SlotboomData slot = compute_slotboom(mesh, phi, T, species, T_ref);
  Eigen::VectorXd D(n);
  for (int v = 0; v < n; ++v) D[v] = einstein_diffusivity(species, T[v]);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(mesh.n_tets()) * 16);
  Eigen::VectorXd F = Eigen::VectorXd::Zero(n);
  const auto& rule = quadrature_rule(5);

  for (int k = 0; k < mesh.n_tets(); ++k) {
    const auto& tet = mesh.tets[k];
    const ElementGeometry geo = element_geometry(mesh, k);
    const Eigen::Matrix4d loc = local_stiffness(geo);
    const double scale = loc.cwiseAbs().maxCoeff();
    const Eigen::Vector4d psi = slot.psi_element.row(k);

    // Edge-averaged diffusion-drift: each edge carries the Bernoulli-weighted
    // conductance; the symmetric form e^{psi_a} B(psi_a - psi_b) equals its
    // (a<->b)-swap analytically.
    for (const auto& e : kTetEdges) {
      const int a = e[0], b = e[1];
      const double omega = clamp_edge_weight(-loc(a, b), scale);
      if (omega == 0.0) continue;
      const double DE = harmonic_average_edge(D[tet[a]], D[tet[b]]);
      const double c = omega * DE * std::exp(psi[a]) * bernoulli(psi[a] - psi[b]);
      trips.emplace_back(tet[a], tet[a], c);
      trips.emplace_back(tet[b], tet[b], c);
      trips.emplace_back(tet[a], tet[b], -c);
      trips.emplace_back(tet[b], tet[a], -c);
    }

    if (!steady) {
      const double m = geo.volume / 4.0;
      for (int i = 0; i < 4; ++i) {
        trips.emplace_back(tet[i], tet[i], m * std::exp(slot.psi_vertex[tet[i]]) / dt);
        F[tet[i]] += m * n_old[tet[i]] / dt;
      }
    }

    if (convect) {
      // -(e^psi n~ u, grad v): integrates the transported variable against
      // the test gradient; the no-flux wall condition is natural in this form.
      for (const auto& qp : rule) {
        double psix = 0.0;
        Vec3 u = Vec3::Zero();
        for (int i = 0; i < 4; ++i) {
          psix += qp.lambda[i] * psi[i];
          u += qp.lambda[i] * velocity.row(tet[i]).transpose();
        }
        const double w = qp.weight * geo.volume * std::exp(psix);
        for (int a = 0; a < 4; ++a) {
          const double ugrad = u.dot(geo.grad_lambda.row(a));
          for (int b = 0; b < 4; ++b) {
            trips.emplace_back(tet[a], tet[b], -w * qp.lambda[b] * ugrad);
          }
        }
      }
    }
  }

  TransportSystem sys;
  sys.K.resize(n, n);
  sys.K.setFromTriplets(trips.begin(), trips.end());
  sys.F = std::move(F);
  return sys;
}

TransportSystem assemble_np_rescaled(const Mesh& mesh, const Species& species,
                                     const Eigen::VectorXd& phi, const Eigen::VectorXd& T,
                                     const VelocityField& velocity, double dt,
                                     const Eigen::VectorXd& n_old, double T_ref) {
  const AssemblyInput in{mesh, species, phi, T, velocity, dt, n_old, T_ref};
  validate_assembly_input(in);
  const bool steady = !std::isfinite(dt);
  const bool convect = velocity.rows() != 0;
  const int n = mesh.n_vertices();

  const SlotboomData slot = compute_slotboom(mesh, phi, T, species, T_ref);
  Eigen::VectorXd D(n);
  for (int v = 0; v < n; ++v) D[v] = einstein_diffusivity(species, T[v]);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(mesh.n_tets()) * 16);
  Eigen::VectorXd F = Eigen::VectorXd::Zero(n);
  const auto& rule = quadrature_rule(5);

  for (int k = 0; k < mesh.n_tets(); ++k) {
    const auto& tet = mesh.tets[k];
    const ElementGeometry geo = element_geometry(mesh, k);
    const Eigen::Matrix4d loc = local_stiffness(geo);
    const double scale = loc.cwiseAbs().maxCoeff();
    const Eigen::Vector4d psi = slot.psi_element.row(k);

    // Column I of the Slotboom system times e^{-Psi_I}, written directly:
    // every factor stays O(local potential differences), which is the whole
    // point of assembling in the physical concentration.
    for (const auto& e : kTetEdges) {
      const int a = e[0], b = e[1];
      const double omega = clamp_edge_weight(-loc(a, b), scale);
      if (omega == 0.0) continue;
      const double DE = harmonic_average_edge(D[tet[a]], D[tet[b]]);
      const double fa = omega * DE * std::exp(psi[a] - slot.psi_vertex[tet[a]]) *
                        bernoulli(psi[a] - psi[b]);
      const double fb = omega * DE * std::exp(psi[b] - slot.psi_vertex[tet[b]]) *
                        bernoulli(psi[b] - psi[a]);
      trips.emplace_back(tet[a], tet[a], fa);
      trips.emplace_back(tet[b], tet[a], -fa);
      trips.emplace_back(tet[b], tet[b], fb);
      trips.emplace_back(tet[a], tet[b], -fb);
    }

    if (!steady) {
      const double m = geo.volume / 4.0;
      for (int i = 0; i < 4; ++i) {
        // e^{Psi} e^{-Psi} = 1 exactly: the lumped mass is untouched.
        trips.emplace_back(tet[i], tet[i], m / dt);
        F[tet[i]] += m * n_old[tet[i]] / dt;
      }
    }

    if (convect) {
      for (const auto& qp : rule) {
        double psix = 0.0;
        Vec3 u = Vec3::Zero();
        for (int i = 0; i < 4; ++i) {
          psix += qp.lambda[i] * psi[i];
          u += qp.lambda[i] * velocity.row(tet[i]).transpose();
        }
        const double w = qp.weight * geo.volume;
        for (int a = 0; a < 4; ++a) {
          const double ugrad = u.dot(geo.grad_lambda.row(a));
          for (int b = 0; b < 4; ++b) {
            trips.emplace_back(tet[a], tet[b],
                               -w * std::exp(psix - slot.psi_vertex[tet[b]]) * qp.lambda[b] *
                                   ugrad);
          }
        }
      }
    }
  }

  TransportSystem sys;
  sys.K.resize(n, n);
  sys.K.setFromTriplets(trips.begin(), trips.end());
  sys.F = std::move(F);
  return sys;
}

SparseMatrix column_rescale(const SparseMatrix& K, const Eigen::VectorXd& psi_vertex) {
  if (K.cols() != psi_vertex.size()) {
    throw InvalidParameterError("column_rescale: dimension mismatch");
  }
  const double psi_max = psi_vertex.size() ? psi_vertex.cwiseAbs().maxCoeff() : 0.0;
  if (!(psi_max <= 500.0)) {
    throw RescalingError("column_rescale: max |Psi| = " + std::to_string(psi_max) +
                         " exceeds the overflow guard 500");
  }
  const Eigen::VectorXd w = (-psi_vertex.array()).exp();
  SparseMatrix R = K;
  for (int i = 0; i < R.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(R, i); it; ++it) it.valueRef() *= w[it.col()];
  }
  return R;
}

DirichletData species_dirichlet(const Mesh& mesh, const Species& species) {
  return flatten_pointwise(
      pointwise_from_tags(mesh, species.dirichlet_concentration, {}));
}

DirichletData species_dirichlet_slotboom(const Mesh& mesh, const Species& species,
                                         const SlotboomData& slotboom) {
  std::map<int, double> pointwise =
      pointwise_from_tags(mesh, species.dirichlet_concentration, {});
  for (auto& [v, value] : pointwise) value *= std::exp(-slotboom.psi_vertex[v]);
  return flatten_pointwise(pointwise);
}

// ---------------------------------------------------------------------------
// Inner self-consistency cycle.
// ---------------------------------------------------------------------------

double concentration_scale(const TpnpSetup& setup, const TpnpState& state) {
  double n_ref = 0.0;
  for (const Species& sp : setup.species) {
    for (const auto& [tag, value] : sp.dirichlet_concentration) n_ref = std::max(n_ref, value);
  }
  for (const auto& pins : setup.species_pins) {
    for (const VertexPin& pin : pins) n_ref = std::max(n_ref, pin.value);
  }
  if (n_ref <= 0.0) {
    for (const auto& c : state.concentration) {
      if (c.size()) n_ref = std::max(n_ref, c.maxCoeff());
    }
  }
  return n_ref > 0.0 ? n_ref : 1.0;
}

double convergence_norm(const TpnpState& a, const TpnpState& b, double n_ref, double phi_ref,
                        double T_ref) {
  double s = 0.0;
  for (size_t i = 0; i < a.concentration.size(); ++i) {
    s += ((a.concentration[i] - b.concentration[i]) / n_ref).squaredNorm();
  }
  s += ((a.phi - b.phi) / phi_ref).squaredNorm();
  if (a.temperature.size()) s += ((a.temperature - b.temperature) / T_ref).squaredNorm();
  return std::sqrt(s);
}

namespace {

TpnpState tpnp_core(const Mesh& transport_mesh, const Mesh& heat_mesh,
                    const std::vector<int>* fluid_to_heat_vertex, const TpnpSetup& setup,
                    const TpnpState& old_state, const VelocityField& velocity, double dt,
                    TpnpReport* report) {
  const int n = transport_mesh.n_vertices();
  const size_t ns = setup.species.size();
  if (ns == 0) throw InvalidParameterError("tpnp_inner_cycle: no species");
  if (old_state.concentration.size() != ns) {
    throw InvalidParameterError("tpnp_inner_cycle: state carries " +
                                std::to_string(old_state.concentration.size()) +
                                " concentration fields for " + std::to_string(ns) + " species");
  }
  if (!setup.species_pins.empty() && setup.species_pins.size() != ns) {
    throw InvalidParameterError("tpnp_inner_cycle: species_pins must be empty or one list per species");
  }
  for (size_t i = 0; i < ns; ++i) {
    check_field_size(old_state.concentration[i], n, "tpnp_inner_cycle concentration");
  }
  check_field_size(old_state.phi, n, "tpnp_inner_cycle phi");
  check_field_size(old_state.temperature, heat_mesh.n_vertices(), "tpnp_inner_cycle temperature");
  check_velocity(velocity, n, "tpnp_inner_cycle");

  const double n_ref = concentration_scale(setup, old_state);
  const double phi_ref = phys::k_B * setup.T_ref / phys::q_e;

  auto fluid_temperature = [&](const Eigen::VectorXd& T_heat) {
    if (!fluid_to_heat_vertex) return T_heat;
    Eigen::VectorXd T(n);
    for (int v = 0; v < n; ++v) T[v] = T_heat[(*fluid_to_heat_vertex)[v]];
    return T;
  };

  const ThermalProperties props{setup.heat.density, setup.heat.specific_heat,
                                setup.heat.conductivity, setup.heat.volumetric_source};

  TpnpState cur = old_state;
  std::vector<double> increments;

  for (int sweep = 1; sweep <= setup.max_outer; ++sweep) {
    TpnpState next;
    next.concentration.resize(ns);

    // 1. Potential from the current concentrations.
    next.phi = solve_poisson_impl(transport_mesh, setup.env, setup.species, cur.concentration,
                                  setup.phi_dirichlet, setup.phi_pins);

    // 2. Each species steps from the previous *time level* with the fresh
    //    potential (and the temperatures of the previous sweep).
    const Eigen::VectorXd T_fluid = fluid_temperature(cur.temperature);
    for (size_t i = 0; i < ns; ++i) {
      const Species& sp = setup.species[i];
      TransportSystem sys = assemble_np_rescaled(transport_mesh, sp, next.phi, T_fluid,
                                                 velocity, dt, old_state.concentration[i],
                                                 setup.T_ref);
      std::map<int, double> bc_map = pointwise_from_tags(
          transport_mesh, sp.dirichlet_concentration,
          setup.species_pins.empty() ? std::vector<VertexPin>{} : setup.species_pins[i]);
      const DirichletData bc = flatten_pointwise(bc_map);
      apply_dirichlet(sys.K, sys.F, bc, false);
      next.concentration[i] = sparse_lu_solve(sys.K, sys.F);
    }

    // 3. Temperature (no feedback from the fields: Q_heat = 0, convection
    //    neglected; it still participates in the stopping criterion).
    if (setup.heat.enabled) {
      next.temperature =
          solve_heat(heat_mesh, props, setup.heat.dirichlet, old_state.temperature, dt);
    } else {
      next.temperature = cur.temperature;
    }

    const double inc = scaled_increment(next, cur, n_ref, phi_ref, setup.T_ref);
    increments.push_back(inc);
    cur = std::move(next);

    if (inc < setup.toll) {
      if (report) {
        report->iterations = sweep;
        report->increments = increments;
      }
      return cur;
    }
  }

  std::ostringstream msg;
  msg << "tpnp_inner_cycle: no self-consistency after " << setup.max_outer
      << " sweeps (threshold " << setup.toll << "); last increments:";
  const size_t first = increments.size() > 10 ? increments.size() - 10 : 0;
  for (size_t i = first; i < increments.size(); ++i) msg << " " << increments[i];
  throw OuterDivergenceError(msg.str());
}

}  // namespace

TpnpState tpnp_inner_cycle(const Mesh& transport_mesh, const TpnpSetup& setup,
                           const TpnpState& old_state, const VelocityField& velocity, double dt,
                           TpnpReport* report) {
  return tpnp_core(transport_mesh, transport_mesh, nullptr, setup, old_state, velocity, dt,
                   report);
}

TpnpState tpnp_inner_cycle(const Mesh& heat_mesh, const Submesh& fluid, const TpnpSetup& setup,
                           const TpnpState& old_state, const VelocityField& velocity, double dt,
                           TpnpReport* report) {
  if (fluid.mesh.n_vertices() == 0 ||
      static_cast<int>(fluid.vertex_to_parent.size()) != fluid.mesh.n_vertices()) {
    throw InvalidParameterError("tpnp_inner_cycle: malformed fluid submesh");
  }
  return tpnp_core(fluid.mesh, heat_mesh, &fluid.vertex_to_parent, setup, old_state, velocity,
                   dt, report);
}

}  // namespace nanochan
