#include "nanochan/stokes.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <vector>

namespace nanochan {

namespace {

using Triplet = Eigen::Triplet<double>;
using ElementField = Eigen::Matrix<double, Eigen::Dynamic, 3>;

bool is_steady(double dt) { return !std::isfinite(dt); }

/// Longest edge of element k (the element size h_K of the stabilization).
double element_diameter(const Mesh& mesh, int k) {
  double h = 0.0;
  const auto& t = mesh.tets[k];
  for (const auto& e : kTetEdges) {
    h = std::max(h, (mesh.vertices[t[e[0]]] - mesh.vertices[t[e[1]]]).norm());
  }
  return h;
}

void check_inputs(const Mesh& mesh, const FluidProperties& props, const StokesBC& bcs,
                  const ElementField& body_force, const Eigen::VectorXd& u_old, double dt,
                  int n_velocity_dofs) {
  if (props.density <= 0.0 || props.viscosity <= 0.0) {
    throw InvalidParameterError("stokes: density and viscosity must be positive");
  }
  if (!is_steady(dt) && dt <= 0.0) {
    throw InvalidParameterError("stokes: dt must be positive or non-finite (steady)");
  }
  if (body_force.rows() != 0 && body_force.rows() != mesh.n_tets()) {
    throw InvalidParameterError("stokes: body force has " +
                                std::to_string(body_force.rows()) + " rows, expected " +
                                std::to_string(mesh.n_tets()));
  }
  if (u_old.size() != 0 && u_old.size() != n_velocity_dofs) {
    throw InvalidParameterError("stokes: previous velocity has " +
                                std::to_string(u_old.size()) + " entries, expected " +
                                std::to_string(n_velocity_dofs));
  }
  for (const auto& [tag, value] : bcs.normal_stress) {
    (void)value;
    if (bcs.velocity.count(tag)) {
      throw InvalidParameterError(
          "stokes: a tag carries both a velocity and a stress datum");
    }
  }
  if (bcs.velocity.empty() && bcs.normal_stress.empty()) {
    throw SingularMatrixError(
        "stokes: no velocity Dirichlet datum and no stress datum; the flow is floating");
  }
}

/// Velocity Dirichlet set from the per-tag constant data; on dofs shared by
/// several tagged patches the tag latest in enum order wins (same flattening
/// rule as the scalar solvers).
DirichletData velocity_dirichlet(const Mesh& mesh, const FiniteElementSpace& space,
                                 const StokesBC& bcs) {
  std::map<int, double> flat;
  for (const auto& [tag, g] : bcs.velocity) {
    for (int s : boundary_dofs(mesh, space, {tag})) {
      for (int c = 0; c < 3; ++c) flat[3 * s + c] = g[c];
    }
  }
  DirichletData bc;
  bc.dofs.reserve(flat.size());
  bc.values.resize(static_cast<Eigen::Index>(flat.size()));
  int i = 0;
  for (const auto& [dof, value] : flat) {
    bc.dofs.push_back(dof);
    bc.values[i++] = value;
  }
  return bc;
}

/// Facet load: integral of (h n) . v over the stress-tagged boundary, using
/// the three-midpoint rule, which is exact for the quadratic trace. Each
/// midpoint is the midpoint of one facet edge, so for P2 it loads exactly the
/// three edge dofs; for P1 each vertex collects half of two midpoints.
void add_traction(const Mesh& mesh, const FiniteElementSpace& space, const StokesBC& bcs,
                  double rho_f, Eigen::VectorXd& F) {
  if (bcs.normal_stress.empty()) return;
  std::map<std::array<int, 2>, int> edge_dof;
  if (space.kind == SpaceKind::P2) {
    for (size_t e = 0; e < space.edges.size(); ++e) {
      edge_dof[space.edges[e]] = space.n_vertex_dofs + static_cast<int>(e);
    }
  }
  for (const auto& facet : mesh.boundary_facets) {
    const auto it = bcs.normal_stress.find(facet.tag);
    if (it == bcs.normal_stress.end()) continue;
    const Vec3 h = it->second * facet_outward_normal(mesh, facet);
    const double wa = facet_area(mesh, facet) / 3.0;  // midpoint-rule weight
    for (int e = 0; e < 3; ++e) {
      const int a = facet.v[e];
      const int b = facet.v[(e + 1) % 3];
      if (space.kind == SpaceKind::P2) {
        // The P2 vertex function vanishes at every facet-edge midpoint, so
        // the whole facet load lands on the edge dofs.
        const int s = edge_dof.at({std::min(a, b), std::max(a, b)});
        for (int c = 0; c < 3; ++c) F[3 * s + c] += wa * h[c] / rho_f;
      } else {
        for (int c = 0; c < 3; ++c) {
          F[3 * a + c] += 0.5 * wa * h[c] / rho_f;
          F[3 * b + c] += 0.5 * wa * h[c] / rho_f;
        }
      }
    }
  }
}

/// Shared assembly. The two element pairs differ only in the velocity space
/// and in the stabilization blocks.
StokesSystem assemble(const Mesh& mesh, const FluidProperties& props, const StokesBC& bcs,
                      const ElementField& body_force, const Eigen::VectorXd& u_old, double dt,
                      SpaceKind velocity_kind, double delta) {
  StokesSystem sys;
  sys.velocity_space = make_space(mesh, velocity_kind);
  sys.n_pressure = mesh.n_vertices();
  sys.nu = props.kinematic_viscosity();
  sys.rho_f = props.density;
  sys.has_stress_bc = !bcs.normal_stress.empty();

  const int n_u = sys.n_velocity_dofs();
  const int n_p = sys.n_pressure;
  check_inputs(mesh, props, bcs, body_force, u_old, dt, n_u);
  sys.velocity_bc = velocity_dirichlet(mesh, sys.velocity_space, bcs);

  const bool steady = is_steady(dt);
  const bool stabilized = velocity_kind == SpaceKind::P1;
  const double nu = sys.nu;
  const int nd = sys.velocity_space.dofs_per_element;
  const auto& quad = quadrature_rule(velocity_kind == SpaceKind::P2 ? 5 : 2);

  std::vector<Triplet> ta, tb, tc, ts;
  ta.reserve(static_cast<size_t>(mesh.n_tets()) * (3 * nd) * (3 * nd));
  tb.reserve(static_cast<size_t>(mesh.n_tets()) * 4 * 3 * nd);
  sys.F = Eigen::VectorXd::Zero(n_u);
  sys.G = Eigen::VectorXd::Zero(n_p);

  Eigen::MatrixXd grads(nd, 3);
  Eigen::VectorXd vals(nd);
  // Scalar-valued element accumulators; the 3x3 component structure of the
  // velocity block is expanded only once per element when the triplets are
  // emitted.
  Eigen::MatrixXd lap(nd, nd), mass(nd, nd);
  Eigen::MatrixXd gcross[3][3];
  for (auto& row : gcross) {
    for (auto& m : row) m.resize(nd, nd);
  }
  Eigen::MatrixXd bdiv[3];
  for (auto& m : bdiv) m.resize(4, nd);
  Eigen::VectorXd phi_int(nd);

  for (int k = 0; k < mesh.n_tets(); ++k) {
    const ElementGeometry geo = element_geometry(mesh, k);
    const double V = geo.volume;
    const auto& tet = mesh.tets[k];

    const Vec3 f_over_rho = body_force.rows() ? Vec3(body_force.row(k) / props.density)
                                              : Vec3::Zero();

    lap.setZero();
    mass.setZero();
    for (auto& row : gcross) {
      for (auto& m : row) m.setZero();
    }
    for (auto& m : bdiv) m.setZero();
    phi_int.setZero();

    for (const auto& qp : quad) {
      const double w = qp.weight * V;
      for (int a = 0; a < nd; ++a) {
        vals[a] = basis_value(velocity_kind, a, qp.lambda);
        grads.row(a) = basis_gradient(velocity_kind, a, qp.lambda, geo);
      }
      phi_int += w * vals;
      lap += w * (grads * grads.transpose());
      if (!steady) mass += (w / dt) * (vals * vals.transpose());
      for (int c = 0; c < 3; ++c) {
        for (int d = 0; d < 3; ++d) {
          // (grad phi_a)_d (grad phi_b)_c, the component coupling of eps:eps.
          gcross[c][d].noalias() += w * (grads.col(d) * grads.col(c).transpose());
        }
        for (int i = 0; i < 4; ++i) {
          for (int a = 0; a < nd; ++a) {
            bdiv[c](i, a) -= w * qp.lambda[i] * grads(a, c);
          }
        }
      }
    }

    for (int a = 0; a < nd; ++a) {
      const int sa = sys.velocity_space.dof(k, a);
      for (int c = 0; c < 3; ++c) sys.F[3 * sa + c] += phi_int[a] * f_over_rho[c];
      for (int b = 0; b < nd; ++b) {
        const int sb = sys.velocity_space.dof(k, b);
        for (int c = 0; c < 3; ++c) {
          for (int d = 0; d < 3; ++d) {
            double entry = nu * gcross[c][d](a, b);
            if (c == d) entry += nu * lap(a, b) + mass(a, b);
            ta.emplace_back(3 * sa + c, 3 * sb + d, entry);
          }
        }
        if (!steady && u_old.size()) {
          for (int c = 0; c < 3; ++c) {
            sys.F[3 * sa + c] += mass(a, b) * u_old[3 * sb + c];
          }
        }
      }
      for (int i = 0; i < 4; ++i) {
        for (int c = 0; c < 3; ++c) {
          tb.emplace_back(tet[i], 3 * sa + c, bdiv[c](i, a));
        }
      }
    }

    if (stabilized) {
      // Element residual term (h_K^2/delta) (u/dt + grad p - f~, grad q);
      // the viscous residual of a linear velocity vanishes elementwise.
      const double h2d = element_diameter(mesh, k) * element_diameter(mesh, k) / delta;
      Vec3 ftilde = f_over_rho;
      if (!steady && u_old.size()) {
        Vec3 u_mean = Vec3::Zero();
        for (int i = 0; i < 4; ++i) {
          for (int c = 0; c < 3; ++c) u_mean[c] += 0.25 * u_old[3 * tet[i] + c];
        }
        ftilde += u_mean / dt;
      }
      for (int i = 0; i < 4; ++i) {
        const Vec3 gi = geo.grad_lambda.row(i);
        sys.G[tet[i]] -= h2d * V * ftilde.dot(gi);
        for (int j = 0; j < 4; ++j) {
          ts.emplace_back(tet[i], tet[j],
                          h2d * V * gi.dot(geo.grad_lambda.row(j)));
          if (!steady) {
            for (int c = 0; c < 3; ++c) {
              tc.emplace_back(tet[i], 3 * tet[j] + c, h2d * (V / 4.0) * gi[c] / dt);
            }
          }
        }
      }
    }
  }

  sys.A.resize(n_u, n_u);
  sys.A.setFromTriplets(ta.begin(), ta.end());
  sys.B.resize(n_p, n_u);
  sys.B.setFromTriplets(tb.begin(), tb.end());
  sys.C.resize(n_p, n_u);
  if (!tc.empty()) sys.C.setFromTriplets(tc.begin(), tc.end());
  sys.S.resize(n_p, n_p);
  if (!ts.empty()) sys.S.setFromTriplets(ts.begin(), ts.end());

  add_traction(mesh, sys.velocity_space, bcs, props.density, sys.F);
  sys.pressure_mass_diag = lumped_mass(mesh);
  return sys;
}

}  // namespace

ElementField electric_body_force(const Mesh& mesh, const std::vector<Species>& species,
                                 const std::vector<Eigen::VectorXd>& concentrations,
                                 const ElementField& E) {
  if (species.size() != concentrations.size()) {
    throw InvalidParameterError("electric_body_force: species/concentration count mismatch");
  }
  if (E.rows() != mesh.n_tets()) {
    throw InvalidParameterError("electric_body_force: E must have one row per element");
  }
  for (const auto& n : concentrations) {
    if (n.size() != mesh.n_vertices()) {
      throw InvalidParameterError("electric_body_force: concentration size mismatch");
    }
  }
  ElementField f = ElementField::Zero(mesh.n_tets(), 3);
  for (int k = 0; k < mesh.n_tets(); ++k) {
    double charge = 0.0;  // signed number density at the element midpoint
    for (size_t i = 0; i < species.size(); ++i) {
      double mean = 0.0;
      for (int v : mesh.tets[k]) mean += 0.25 * concentrations[i][v];
      charge += species[i].valence * mean;
    }
    f.row(k) = phys::q_e * charge * E.row(k);
  }
  return f;
}

StokesSystem assemble_taylor_hood(const Mesh& mesh, const FluidProperties& props,
                                  const StokesBC& bcs, const ElementField& body_force,
                                  const Eigen::VectorXd& u_old, double dt) {
  return assemble(mesh, props, bcs, body_force, u_old, dt, SpaceKind::P2, 1.0);
}

StokesSystem assemble_hfb(const Mesh& mesh, const FluidProperties& props, const StokesBC& bcs,
                          const ElementField& body_force, const Eigen::VectorXd& u_old,
                          double dt, std::optional<double> delta) {
  if (delta && *delta <= 0.0) {
    throw InvalidParameterError("assemble_hfb: delta must be positive");
  }
  const double d = delta ? *delta : 12.0 * props.kinematic_viscosity();
  return assemble(mesh, props, bcs, body_force, u_old, dt, SpaceKind::P1, d);
}

namespace {

/// Direct factorization of the full block matrix
///   [ A  B^T ] [u]   [F]
///   [ B-C -S ] [p] = [G]
/// with the velocity Dirichlet rows/columns eliminated and, if no stress
/// datum fixes the pressure level, the first pressure row pinned to zero.
void solve_direct(const StokesSystem& sys, Eigen::VectorXd& u, Eigen::VectorXd& p) {
  const int n_u = sys.n_velocity_dofs();
  const int n_p = sys.n_pressure;
  std::vector<Triplet> t;
  t.reserve(sys.A.nonZeros() + 2 * sys.B.nonZeros() + sys.C.nonZeros() + sys.S.nonZeros());
  for (int i = 0; i < sys.A.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(sys.A, i); it; ++it) {
      t.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int i = 0; i < sys.B.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(sys.B, i); it; ++it) {
      t.emplace_back(n_u + it.row(), it.col(), it.value());   // B
      t.emplace_back(it.col(), n_u + it.row(), it.value());   // B^T
    }
  }
  for (int i = 0; i < sys.C.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(sys.C, i); it; ++it) {
      t.emplace_back(n_u + it.row(), it.col(), -it.value());
    }
  }
  for (int i = 0; i < sys.S.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(sys.S, i); it; ++it) {
      t.emplace_back(n_u + it.row(), n_u + it.col(), -it.value());
    }
  }
  SparseMatrix K(n_u + n_p, n_u + n_p);
  K.setFromTriplets(t.begin(), t.end());

  Eigen::VectorXd rhs(n_u + n_p);
  rhs << sys.F, sys.G;
  apply_dirichlet(K, rhs, sys.velocity_bc, true);
  if (!sys.has_stress_bc) {
    // All-Dirichlet velocity: the pressure is defined up to a constant; pin
    // the first pressure row (the gauge is normalized after the solve).
    for (SparseMatrix::InnerIterator it(K, n_u); it; ++it) it.valueRef() = 0.0;
    K.coeffRef(n_u, n_u) = 1.0;
    rhs[n_u] = 0.0;
  }

  const Eigen::VectorXd x = sparse_lu_solve(K, rhs);
  u = x.head(n_u);
  p = x.tail(n_p);
}

}  // namespace

StokesSolution solve_stokes(const StokesSystem& sys, StokesMethod method, double rho) {
  StokesSolution out;
  const int n_u = sys.n_velocity_dofs();
  const int n_p = sys.n_pressure;
  const bool stabilized = sys.S.nonZeros() > 0;

  if (method == StokesMethod::Uzawa) {
    // Symmetric elimination of the Dirichlet set keeps the velocity block
    // SPD; the eliminated load is reused across pressure updates.
    SparseMatrix A = sys.A;
    Eigen::VectorXd F = sys.F;
    apply_dirichlet(A, F, sys.velocity_bc, true);

    const Eigen::SparseMatrix<double> a_col(A);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> a_fac(a_col);
    const bool a_spd =
        a_fac.info() == Eigen::Success && a_fac.vectorD().minCoeff() > 0.0;
    if (a_spd) {
      // Preconditioner M_p/nu: the nu-scaling makes the preconditioned Schur
      // spectrum O(1) for the steady operator (||div v||^2 <= 3 ||eps(v)||^2
      // bounds it above by 3/2; the inf-sup constant bounds it below).
      const Eigen::VectorXd mp = sys.pressure_mass_diag / sys.nu;
      const double total_volume = sys.pressure_mass_diag.sum();
      const int max_iterations = 400;

      Eigen::VectorXd p = Eigen::VectorXd::Zero(n_p);
      Eigen::VectorXd u(n_u);
      auto velocity_solve = [&](const Eigen::VectorXd& pres) {
        Eigen::VectorXd rhs = F - sys.B.transpose() * pres;
        for (size_t i = 0; i < sys.velocity_bc.dofs.size(); ++i) {
          rhs[sys.velocity_bc.dofs[i]] = sys.velocity_bc.values[i];
        }
        return Eigen::VectorXd(a_fac.solve(rhs));
      };
      auto constraint_residual = [&](const Eigen::VectorXd& vel,
                                     const Eigen::VectorXd& pres) {
        Eigen::VectorXd r = sys.B * vel - sys.G;
        if (sys.C.nonZeros()) r -= sys.C * vel;
        if (stabilized) r -= sys.S * pres;
        return r;
      };

      u = velocity_solve(p);
      Eigen::VectorXd r = constraint_residual(u, p);
      const double scale = std::max(r.norm(), 1e-30);

      if (rho <= 0.0) {
        // Exact line search along the preconditioned residual: rho* =
        // (z, r) / (z, S_c z) with S_c the (stabilized) Schur complement,
        // applied through one extra velocity solve. Tunes the step to the
        // modes actually present instead of a worst-case bound.
        Eigen::VectorXd z = r.cwiseQuotient(mp);
        if (!sys.has_stress_bc) {
          z.array() -= sys.pressure_mass_diag.dot(z) / total_volume;
        }
        const Eigen::VectorXd du = velocity_solve(p + z) - u;
        Eigen::VectorXd scz = -(sys.B * du);
        if (sys.C.nonZeros()) scz += sys.C * du;
        if (stabilized) scz += sys.S * z;
        const double denom = z.dot(scz);
        rho = denom > 0.0 ? z.dot(r) / denom : 1.0;
        // The line search minimizes the first step, but when the initial
        // residual is smooth it lands near 1/lambda_min, outside the
        // Richardson stability window 0 < rho < 2/lambda_max; later steps
        // would then amplify the high pressure modes. Cap at the spectral
        // bound: lambda_max <= 3/2 from ||div v||^2 <= 3 ||eps(v)||^2, plus
        // a Gershgorin estimate of the stabilization part. (The transient
        // coupling block has no cheap bound; the stall fallback covers it.)
        double lambda_max = 1.5;
        if (stabilized) {
          Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n_p);
          for (int k = 0; k < sys.S.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(sys.S, k); it; ++it) {
              row_sum[it.row()] += std::abs(it.value());
            }
          }
          lambda_max += (row_sum.cwiseQuotient(mp)).maxCoeff();
        }
        rho = std::min(rho, 1.9 / lambda_max);
      }

      bool converged = r.norm() <= 1e-10 * scale;
      // Residual history, for projecting whether the geometric rate can
      // still reach the tolerance inside the iteration budget.
      std::vector<double> history{r.norm()};
      for (int it = 0; it < max_iterations && !converged; ++it) {
        p += rho * r.cwiseQuotient(mp);
        if (!sys.has_stress_bc) {
          // Project out the gauge mode so the iteration cannot drift along it.
          p.array() -= sys.pressure_mass_diag.dot(p) / total_volume;
        }
        u = velocity_solve(p);
        r = constraint_residual(u, p);
        out.uzawa_iterations = it + 1;
        converged = r.norm() <= 1e-10 * scale;
        history.push_back(r.norm());
        if (!converged && history.size() > 24) {
          const double before = history[history.size() - 25];
          // Less than a halving over 24 steps cannot reach 1e-10 within any
          // remaining budget; hand over to the factorization early.
          if (r.norm() > 0.5 * before) break;
        }
      }
      if (converged) {
        out.velocity = u;
        out.pressure = p;
        out.constraint_residual = r.norm();
      } else {
        out.fell_back = true;
        out.warning = "uzawa stalled at constraint residual " + std::to_string(r.norm()) +
                      " (scale " + std::to_string(scale) + "); direct factorization used";
      }
    } else {
      out.fell_back = true;
      out.warning = "velocity block not SPD under LDLT; direct factorization used";
    }
  }

  if (method == StokesMethod::Direct || out.fell_back) {
    Eigen::VectorXd u, p;
    solve_direct(sys, u, p);
    out.velocity = u;
    out.pressure = p;
    out.used_direct = true;
    Eigen::VectorXd r = sys.B * u - sys.G;
    if (sys.C.nonZeros()) r -= sys.C * u;
    if (stabilized) r -= sys.S * p;
    out.constraint_residual = r.norm();
  }

  if (!sys.has_stress_bc) {
    const double total_volume = sys.pressure_mass_diag.sum();
    out.pressure.array() -= sys.pressure_mass_diag.dot(out.pressure) / total_volume;
  }
  out.pressure *= sys.rho_f;  // kinematic -> Pa
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> vertex_velocity(const Mesh& mesh,
                                                         const FiniteElementSpace& space,
                                                         const Eigen::VectorXd& u) {
  if (u.size() != 3 * space.n_dofs) {
    throw InvalidParameterError("vertex_velocity: dof vector size mismatch");
  }
  Eigen::Matrix<double, Eigen::Dynamic, 3> v(mesh.n_vertices(), 3);
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    for (int c = 0; c < 3; ++c) v(i, c) = u[3 * i + c];
  }
  return v;
}

}  // namespace nanochan
