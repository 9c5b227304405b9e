#include "nanochan/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nanochan {

double bernoulli(double x) {
  if (std::abs(x) < 1e-4) {
    // x/(e^x-1) = 1 - x/2 + x^2/12 - x^4/720 + ...; the x^4 term is below
    // double precision on this branch.
    return 1.0 - 0.5 * x + x * x / 12.0;
  }
  if (x > 0.0) {
    const double em = std::expm1(x);
    return std::isinf(em) ? 0.0 : x / em;
  }
  return x / std::expm1(x);
}

double harmonic_average_edge(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw InvalidParameterError("harmonic_average_edge: values must be positive");
  }
  return 2.0 * a * b / (a + b);
}

double harmonic_average_element(const std::array<double, 4>& vertex_values) {
  for (double q : vertex_values) {
    if (!(q > 0.0)) {
      throw InvalidParameterError("harmonic_average_element: vertex values must be positive");
    }
  }
  double inv = 0.0;
  for (const auto& qp : quadrature_rule(2)) {
    double q = 0.0;
    for (int i = 0; i < 4; ++i) q += qp.lambda[i] * vertex_values[i];
    inv += qp.weight / q;
  }
  return 1.0 / inv;
}

// ---------------------------------------------------------------------------
// Quadrature.
// ---------------------------------------------------------------------------

namespace {

std::vector<QuadraturePoint> make_degree2_rule() {
  const double a = 0.58541019662496845;  // (5 + 3 sqrt 5)/20
  const double b = 0.13819660112501051;  // (5 - sqrt 5)/20
  std::vector<QuadraturePoint> rule;
  for (int i = 0; i < 4; ++i) {
    QuadraturePoint qp{{b, b, b, b}, 0.25};
    qp.lambda[i] = a;
    rule.push_back(qp);
  }
  return rule;
}

std::vector<QuadraturePoint> make_degree5_rule() {
  // 14-point degree-5 rule, all weights positive.
  const double b1 = 0.31088591926330060;
  const double w1 = 0.11268792571801585;
  const double b2 = 0.092735250310891226;
  const double w2 = 0.073493043116361949;
  const double d = 0.045503704125649649;
  const double c = 0.5 - d;
  const double w3 = 0.042546020777081467;

  std::vector<QuadraturePoint> rule;
  for (int i = 0; i < 4; ++i) {
    QuadraturePoint qp{{b1, b1, b1, b1}, w1};
    qp.lambda[i] = 1.0 - 3.0 * b1;
    rule.push_back(qp);
  }
  for (int i = 0; i < 4; ++i) {
    QuadraturePoint qp{{b2, b2, b2, b2}, w2};
    qp.lambda[i] = 1.0 - 3.0 * b2;
    rule.push_back(qp);
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      QuadraturePoint qp{{d, d, d, d}, w3};
      qp.lambda[i] = c;
      qp.lambda[j] = c;
      rule.push_back(qp);
    }
  }
  return rule;
}

}  // namespace

const std::vector<QuadraturePoint>& quadrature_rule(int degree) {
  static const std::vector<QuadraturePoint> deg2 = make_degree2_rule();
  static const std::vector<QuadraturePoint> deg5 = make_degree5_rule();
  if (degree <= 2) return deg2;
  if (degree <= 5) return deg5;
  throw InvalidParameterError("quadrature_rule: degree " + std::to_string(degree) +
                              " not available (max 5)");
}

// ---------------------------------------------------------------------------
// Element geometry and spaces.
// ---------------------------------------------------------------------------

ElementGeometry element_geometry(const Mesh& mesh, int k) {
  const auto& t = mesh.tets[k];
  const Vec3& p0 = mesh.vertices[t[0]];
  Eigen::Matrix3d J;
  J.col(0) = mesh.vertices[t[1]] - p0;
  J.col(1) = mesh.vertices[t[2]] - p0;
  J.col(2) = mesh.vertices[t[3]] - p0;
  const double det = J.determinant();
  if (!(det > 0.0)) {
    throw SimulationError("element_geometry: element " + std::to_string(k) +
                          " is degenerate or inverted");
  }
  ElementGeometry geo;
  geo.volume = det / 6.0;
  const Eigen::Matrix3d Jinv = J.inverse();
  for (int i = 0; i < 3; ++i) geo.grad_lambda.row(i + 1) = Jinv.row(i);
  geo.grad_lambda.row(0) = -(Jinv.row(0) + Jinv.row(1) + Jinv.row(2));
  return geo;
}

FiniteElementSpace make_space(const Mesh& mesh, SpaceKind kind) {
  FiniteElementSpace space;
  space.kind = kind;
  space.n_vertex_dofs = mesh.n_vertices();
  space.dofs_per_element = (kind == SpaceKind::P1) ? 4 : 10;
  space.element_dofs.resize(mesh.n_tets(), 10);
  space.element_dofs.setConstant(-1);

  for (int k = 0; k < mesh.n_tets(); ++k) {
    for (int i = 0; i < 4; ++i) space.element_dofs(k, i) = mesh.tets[k][i];
  }
  if (kind == SpaceKind::P1) {
    space.n_dofs = mesh.n_vertices();
    return space;
  }

  // P2: enumerate global edges in deterministic first-encounter order.
  std::map<std::array<int, 2>, int> edge_id;
  for (int k = 0; k < mesh.n_tets(); ++k) {
    for (int e = 0; e < 6; ++e) {
      const int a = mesh.tets[k][kTetEdges[e][0]];
      const int b = mesh.tets[k][kTetEdges[e][1]];
      const std::array<int, 2> key = {std::min(a, b), std::max(a, b)};
      auto it = edge_id.find(key);
      int id;
      if (it == edge_id.end()) {
        id = static_cast<int>(space.edges.size());
        edge_id.emplace(key, id);
        space.edges.push_back(key);
      } else {
        id = it->second;
      }
      space.element_dofs(k, 4 + e) = mesh.n_vertices() + id;
    }
  }
  space.n_dofs = mesh.n_vertices() + static_cast<int>(space.edges.size());
  return space;
}

double basis_value(SpaceKind kind, int local, const std::array<double, 4>& lambda) {
  if (kind == SpaceKind::P1 || local < 4) {
    const double l = lambda[local];
    return (kind == SpaceKind::P1) ? l : l * (2.0 * l - 1.0);
  }
  const auto& e = kTetEdges[local - 4];
  return 4.0 * lambda[e[0]] * lambda[e[1]];
}

Vec3 basis_gradient(SpaceKind kind, int local, const std::array<double, 4>& lambda,
                    const ElementGeometry& geo) {
  if (kind == SpaceKind::P1) return geo.grad_lambda.row(local);
  if (local < 4) {
    return (4.0 * lambda[local] - 1.0) * geo.grad_lambda.row(local).transpose();
  }
  const auto& e = kTetEdges[local - 4];
  return 4.0 * (lambda[e[0]] * geo.grad_lambda.row(e[1]).transpose() +
                lambda[e[1]] * geo.grad_lambda.row(e[0]).transpose());
}

// ---------------------------------------------------------------------------
// Ready-made P1 operators.
// ---------------------------------------------------------------------------

SparseMatrix assemble_p1_stiffness(const Mesh& mesh, const FiniteElementSpace& space,
                                   const Eigen::VectorXd& element_coefficient) {
  if (space.kind != SpaceKind::P1) {
    throw InvalidParameterError("assemble_p1_stiffness: P1 space required");
  }
  return assemble_matrix(mesh, space, space, [&](int k, Eigen::MatrixXd& local) {
    const ElementGeometry geo = element_geometry(mesh, k);
    local = element_coefficient[k] * geo.volume *
            (geo.grad_lambda * geo.grad_lambda.transpose());
  });
}

SparseMatrix assemble_p1_mass(const Mesh& mesh, const FiniteElementSpace& space,
                              const Eigen::VectorXd& element_coefficient) {
  if (space.kind != SpaceKind::P1) {
    throw InvalidParameterError("assemble_p1_mass: P1 space required");
  }
  return assemble_matrix(mesh, space, space, [&](int k, Eigen::MatrixXd& local) {
    const double s = element_coefficient[k] * element_geometry(mesh, k).volume / 20.0;
    local.setConstant(s);
    local.diagonal().array() += s;
  });
}

Eigen::VectorXd lumped_mass(const Mesh& mesh, const Eigen::VectorXd* vertex_weight) {
  if (vertex_weight && vertex_weight->size() != mesh.n_vertices()) {
    throw InvalidParameterError("lumped_mass: weight size mismatch");
  }
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.n_vertices());
  for (int k = 0; k < mesh.n_tets(); ++k) {
    const double share = mesh.tet_volume(k) / 4.0;
    for (int v : mesh.tets[k]) m[v] += share;
  }
  if (vertex_weight) m.array() *= vertex_weight->array();
  return m;
}

// ---------------------------------------------------------------------------
// Boundary data.
// ---------------------------------------------------------------------------

std::vector<int> boundary_vertices(const Mesh& mesh, const std::vector<BoundaryTag>& tags) {
  std::vector<char> keep(mesh.n_vertices(), 0);
  for (const auto& f : mesh.boundary_facets) {
    if (std::find(tags.begin(), tags.end(), f.tag) == tags.end()) continue;
    for (int v : f.v) keep[v] = 1;
  }
  std::vector<int> out;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (keep[v]) out.push_back(v);
  }
  return out;
}

std::vector<int> boundary_dofs(const Mesh& mesh, const FiniteElementSpace& space,
                               const std::vector<BoundaryTag>& tags) {
  std::vector<int> verts = boundary_vertices(mesh, tags);
  if (space.kind == SpaceKind::P1) return verts;

  std::map<std::array<int, 2>, int> edge_id;
  for (int e = 0; e < static_cast<int>(space.edges.size()); ++e) {
    edge_id.emplace(space.edges[e], e);
  }
  std::vector<char> keep(space.n_dofs, 0);
  for (int v : verts) keep[v] = 1;
  for (const auto& f : mesh.boundary_facets) {
    if (std::find(tags.begin(), tags.end(), f.tag) == tags.end()) continue;
    static const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pr : pairs) {
      const std::array<int, 2> key = {std::min(f.v[pr[0]], f.v[pr[1]]),
                                      std::max(f.v[pr[0]], f.v[pr[1]])};
      keep[space.n_vertex_dofs + edge_id.at(key)] = 1;
    }
  }
  std::vector<int> out;
  for (int d = 0; d < space.n_dofs; ++d) {
    if (keep[d]) out.push_back(d);
  }
  return out;
}

void apply_dirichlet(SparseMatrix& A, Eigen::VectorXd& b, const DirichletData& bc,
                     bool symmetric) {
  if (bc.values.size() != static_cast<Eigen::Index>(bc.dofs.size())) {
    throw InvalidParameterError("apply_dirichlet: dof/value count mismatch");
  }
  if (A.rows() != b.size()) {
    throw InvalidParameterError("apply_dirichlet: system size mismatch");
  }
  std::vector<char> is_bc(A.rows(), 0);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(A.rows());
  for (size_t i = 0; i < bc.dofs.size(); ++i) {
    const int d = bc.dofs[i];
    if (d < 0 || d >= A.rows()) throw InvalidParameterError("apply_dirichlet: dof out of range");
    is_bc[d] = 1;
    value[d] = bc.values[i];
  }

  for (int i = 0; i < A.outerSize(); ++i) {
    if (is_bc[i]) {
      for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
        it.valueRef() = (it.col() == i) ? 1.0 : 0.0;
      }
      b[i] = value[i];
    } else if (symmetric) {
      for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
        if (is_bc[it.col()]) {
          b[i] -= it.value() * value[it.col()];
          it.valueRef() = 0.0;
        }
      }
    }
  }
  // Ensure unit diagonals exist structurally for every constrained row.
  for (int d : bc.dofs) {
    if (A.coeff(d, d) != 1.0) A.coeffRef(d, d) = 1.0;
  }
}

double facet_area(const Mesh& mesh, const BoundaryFacet& facet) {
  const Vec3& a = mesh.vertices[facet.v[0]];
  return 0.5 *
         (mesh.vertices[facet.v[1]] - a).cross(mesh.vertices[facet.v[2]] - a).norm();
}

Vec3 facet_outward_normal(const Mesh& mesh, const BoundaryFacet& facet) {
  const Vec3& a = mesh.vertices[facet.v[0]];
  return (mesh.vertices[facet.v[1]] - a).cross(mesh.vertices[facet.v[2]] - a).normalized();
}

Vec3 dof_position(const Mesh& mesh, const FiniteElementSpace& space, int dof) {
  if (dof < 0 || dof >= space.n_dofs) {
    throw InvalidParameterError("dof_position: dof " + std::to_string(dof) +
                                " outside [0, " + std::to_string(space.n_dofs) + ")");
  }
  if (dof < space.n_vertex_dofs) return mesh.vertices[dof];
  const auto& e = space.edges[dof - space.n_vertex_dofs];
  return 0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]]);
}

}  // namespace nanochan
