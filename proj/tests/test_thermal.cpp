#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nanochan/thermal.hpp"

#include <cmath>
#include <random>

using namespace nanochan;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("uniform boundary data keeps a uniform state") {
  const Mesh m = build_cylinder_mesh(4e-9, 2e-9, 0.5e-9);
  const ThermalProperties props;
  const std::map<BoundaryTag, double> bc{{BoundaryTag::SideA, 293.75},
                                         {BoundaryTag::SideB, 293.75}};
  const Eigen::VectorXd T0 = Eigen::VectorXd::Constant(m.n_vertices(), 293.75);
  const Eigen::VectorXd T = solve_heat(m, props, bc, T0, 1e-9);
  CHECK((T.array() - 293.75).abs().maxCoeff() < 1e-10);
}

TEST_CASE("steady conduction through a cylinder is the exact linear profile") {
  const double L = 10e-9;
  const Mesh m = build_cylinder_mesh(L, 2e-9, 0.65e-9);
  const ThermalProperties props;
  const double Ta = 293.75, Tb = 343.75;
  const std::map<BoundaryTag, double> bc{{BoundaryTag::SideA, Ta}, {BoundaryTag::SideB, Tb}};
  const Eigen::VectorXd T0 = Eigen::VectorXd::Constant(m.n_vertices(), Ta);
  const Eigen::VectorXd T = solve_heat(m, props, bc, T0, kInf);

  double worst = 0.0;
  for (int v = 0; v < m.n_vertices(); ++v) {
    const double exact = Ta + (Tb - Ta) * m.vertices[v].z() / L;
    worst = std::max(worst, std::abs(T[v] - exact) / exact);
  }
  CHECK(worst <= 1e-10);

  // Conductive flux balance: the gradient is exactly constant, so the
  // pointwise boundary integrals match the 1D formula and cancel.
  double area = 0.0;
  for (const auto& f : m.boundary_facets) {
    if (f.tag == BoundaryTag::SideA) area += facet_area(m, f);
  }
  const double fa = boundary_conductive_flux(m, T, props.conductivity, {BoundaryTag::SideA});
  const double fb = boundary_conductive_flux(m, T, props.conductivity, {BoundaryTag::SideB});
  const double expected = props.conductivity * (Tb - Ta) / L * area;
  CHECK(fb == doctest::Approx(expected).epsilon(1e-10));
  CHECK(std::abs(fa + fb) <= 1e-10 * std::abs(fb));
}

TEST_CASE("discrete maximum principle under transient steps") {
  const Mesh m = build_channel_mesh(ChannelGeometry{});
  const ThermalProperties props;
  const std::map<BoundaryTag, double> bc{{BoundaryTag::SideA, 293.75},
                                         {BoundaryTag::SideB, 343.75},
                                         {BoundaryTag::OuterWall, 343.75}};
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(295.0, 340.0);
  Eigen::VectorXd T = Eigen::VectorXd::NullaryExpr(m.n_vertices(), [&](Eigen::Index) {
    return u(rng);
  });
  const double lo = std::min(293.75, T.minCoeff());
  const double hi = std::max(343.75, T.maxCoeff());
  for (int step = 0; step < 5; ++step) {
    T = solve_heat(m, props, bc, T, 1e-10);
    CHECK(T.minCoeff() >= lo - 1e-9);
    CHECK(T.maxCoeff() <= hi + 1e-9);
  }
  // Long-time limit approaches the steady solution.
  const Eigen::VectorXd Ts = solve_heat(m, props, bc, T, kInf);
  for (int step = 0; step < 200; ++step) T = solve_heat(m, props, bc, T, 1e-9);
  CHECK((T - Ts).lpNorm<Eigen::Infinity>() < 1e-3 * (343.75 - 293.75));
}

TEST_CASE("axial reflection symmetry for symmetric data") {
  // Transient step from a z-symmetric initial state with equal end
  // temperatures: the layered mesh reproduces a z-only solution, which is
  // symmetric under the index reflection layer -> nz - layer.
  const double L = 8e-9;
  const int nz = 16;
  const Mesh m = build_cylinder_mesh(L, 2e-9, L / nz);
  const int nv2 = m.n_vertices() / (nz + 1);
  REQUIRE(m.n_vertices() == nv2 * (nz + 1));

  const ThermalProperties props;
  const std::map<BoundaryTag, double> bc{{BoundaryTag::SideA, 350.0},
                                         {BoundaryTag::SideB, 350.0}};
  Eigen::VectorXd T0(m.n_vertices());
  for (int v = 0; v < m.n_vertices(); ++v) {
    T0[v] = 300.0 + 50.0 * std::sin(3.14159265358979323846 * m.vertices[v].z() / L);
  }
  const Eigen::VectorXd T = solve_heat(m, props, bc, T0, 2e-9);
  double worst = 0.0;
  for (int l = 0; l <= nz; ++l) {
    for (int c = 0; c < nv2; ++c) {
      const int v = l * nv2 + c;
      const int vr = (nz - l) * nv2 + c;
      worst = std::max(worst, std::abs(T[v] - T[vr]));
    }
  }
  CHECK(worst <= 1e-10 * 350.0);
}

TEST_CASE("input validation") {
  const Mesh m = build_block_mesh(Vec3(1e-9, 1e-9, 1e-9), 1, 1, 2);
  const ThermalProperties props;
  const Eigen::VectorXd T0 = Eigen::VectorXd::Constant(m.n_vertices(), 300.0);
  CHECK_THROWS_AS(solve_heat(m, props, {}, T0, kInf), SingularMatrixError);
  CHECK_THROWS_AS(solve_heat(m, props, {{BoundaryTag::SideA, 300.0}}, T0, -1.0),
                  InvalidParameterError);
  CHECK_THROWS_AS(solve_heat(m, props, {{BoundaryTag::SideA, 300.0}},
                             Eigen::VectorXd::Constant(3, 300.0), 1e-9),
                  InvalidParameterError);
  ThermalProperties bad = props;
  bad.conductivity = 0.0;
  CHECK_THROWS_AS(solve_heat(m, bad, {{BoundaryTag::SideA, 300.0}}, T0, 1e-9),
                  InvalidParameterError);
}
