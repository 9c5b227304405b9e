#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nanochan/linalg.hpp"
#include "nanochan/types.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

using namespace nanochan;

namespace {

SparseMatrix from_dense(const Eigen::MatrixXd& D) {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < D.rows(); ++i) {
    for (int j = 0; j < D.cols(); ++j) {
      if (D(i, j) != 0.0) t.emplace_back(i, j, D(i, j));
    }
  }
  SparseMatrix A(D.rows(), D.cols());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

/// Random sparse symmetric diagonally dominant matrix (deterministic seed).
SparseMatrix random_sdd(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::uniform_int_distribution<int> pick(0, n - 1);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < 4 * n; ++k) {
    const int i = pick(rng);
    const int j = pick(rng);
    if (i == j) continue;
    const double v = u(rng);
    D(i, j) -= v;
    D(j, i) -= v;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) off += std::abs(D(i, j));
    D(i, i) = off + 1.0;
  }
  return from_dense(D);
}

}  // namespace

TEST_CASE("sparse LU: exact small systems and residual contract") {
  SUBCASE("2x2 with known inverse") {
    Eigen::MatrixXd D(2, 2);
    D << 4, 1, 1, 3;
    Eigen::VectorXd b(2);
    b << 1, 2;
    const Eigen::VectorXd x = sparse_lu_solve(from_dense(D), b);
    CHECK(x[0] == doctest::Approx(1.0 / 11.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(7.0 / 11.0).epsilon(1e-14));
  }
  SUBCASE("random SDD, residual below refinement threshold") {
    const SparseMatrix A = random_sdd(80, 123);
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    Eigen::VectorXd b(80);
    for (int i = 0; i < 80; ++i) b[i] = g(rng);
    const Eigen::VectorXd x = sparse_lu_solve(A, b);
    CHECK((A * x - b).lpNorm<Eigen::Infinity>() <= 1e-10 * b.lpNorm<Eigen::Infinity>());
  }
  SUBCASE("structurally empty row throws") {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
    D(0, 0) = 1;
    D(2, 2) = 1;  // row/col 1 empty
    Eigen::VectorXd b = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(sparse_lu_solve(from_dense(D), b), SingularMatrixError);
  }
  SUBCASE("numerically singular throws") {
    Eigen::MatrixXd D(2, 2);
    D << 1, 2, 2, 4;
    Eigen::VectorXd b = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(sparse_lu_solve(from_dense(D), b), SingularMatrixError);
  }
  SUBCASE("DirectSolver factors once and matches one-shot solve") {
    const SparseMatrix A = random_sdd(40, 77);
    DirectSolver solver(A);
    std::mt19937 rng(9);
    std::normal_distribution<double> g;
    for (int rhs = 0; rhs < 3; ++rhs) {
      Eigen::VectorXd b(40);
      for (int i = 0; i < 40; ++i) b[i] = g(rng);
      const Eigen::VectorXd x1 = solver.solve(b);
      const Eigen::VectorXd x2 = sparse_lu_solve(A, b);
      CHECK((x1 - x2).lpNorm<Eigen::Infinity>() < 1e-12 * x2.lpNorm<Eigen::Infinity>());
    }
  }
}

TEST_CASE("reverse Cuthill-McKee relabels a shuffled path to bandwidth one") {
  // Path graph 0-5-1-4-2-3 (i.e. consecutive along that sequence).
  const std::vector<std::pair<int, int>> edges{{0, 5}, {5, 1}, {1, 4}, {4, 2}, {2, 3}};
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < 6; ++i) t.emplace_back(i, i, 2.0);
  for (auto [a, b] : edges) {
    t.emplace_back(a, b, -1.0);
    t.emplace_back(b, a, -1.0);
  }
  SparseMatrix A(6, 6);
  A.setFromTriplets(t.begin(), t.end());
  const auto perm = reverse_cuthill_mckee(A);
  REQUIRE(perm.size() == 6);
  std::vector<bool> seen(6, false);
  for (int p : perm) {
    REQUIRE(p >= 0);
    REQUIRE(p < 6);
    seen[p] = true;
  }
  for (bool s : seen) CHECK(s);
  for (auto [a, b] : edges) CHECK(std::abs(perm[a] - perm[b]) == 1);

  // Determinism: second call gives the identical permutation.
  CHECK(reverse_cuthill_mckee(A) == perm);
}

TEST_CASE("BiCG: exact solves, convergence report, iteration cap") {
  SUBCASE("2x2 exact") {
    Eigen::MatrixXd D(2, 2);
    D << 4, 1, 1, 3;
    Eigen::VectorXd b(2);
    b << 1, 2;
    SolveReport rep;
    const Eigen::VectorXd x = bicg_solve(from_dense(D), b, 1e-13, 50, &rep);
    CHECK(rep.converged);
    CHECK(x[0] == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(7.0 / 11.0).epsilon(1e-12));
  }
  SUBCASE("matches LU on a random SDD system") {
    const SparseMatrix A = random_sdd(60, 321);
    std::mt19937 rng(2);
    std::normal_distribution<double> g;
    Eigen::VectorXd b(60);
    for (int i = 0; i < 60; ++i) b[i] = g(rng);
    SolveReport rep;
    const Eigen::VectorXd x = bicg_solve(A, b, 1e-12, 500, &rep);
    CHECK(rep.converged);
    const Eigen::VectorXd xref = sparse_lu_solve(A, b);
    CHECK((x - xref).norm() < 1e-8 * xref.norm());
  }
  SUBCASE("iteration cap reported as non-convergence") {
    const SparseMatrix A = random_sdd(60, 321);
    std::mt19937 rng(13);
    std::normal_distribution<double> gd;
    Eigen::VectorXd b(60);
    for (int i = 0; i < 60; ++i) b[i] = gd(rng);
    SolveReport rep;
    (void)bicg_solve(A, b, 1e-14, 1, &rep);
    CHECK(!rep.converged);
    CHECK(rep.iterations == 1);
  }
  SUBCASE("zero rhs returns zero immediately") {
    const SparseMatrix A = random_sdd(10, 1);
    SolveReport rep;
    const Eigen::VectorXd x = bicg_solve(A, Eigen::VectorXd::Zero(10), 1e-12, 10, &rep);
    CHECK(rep.converged);
    CHECK(x.norm() == 0.0);
  }
}

TEST_CASE("M-matrix column-dominance check") {
  SUBCASE("identity passes") {
    CHECK(is_m_matrix_column_dominant(from_dense(Eigen::MatrixXd::Identity(3, 3))));
  }
  SUBCASE("classic tridiagonal passes") {
    Eigen::MatrixXd D(3, 3);
    D << 2, -1, 0, -1, 2, -1, 0, -1, 2;
    CHECK(is_m_matrix_column_dominant(from_dense(D)));
  }
  SUBCASE("positive off-diagonal fails with witness") {
    Eigen::MatrixXd D(2, 2);
    D << 2, 0.5, -1, 2;
    MMatrixWitness w;
    CHECK(!is_m_matrix_column_dominant(from_dense(D), &w));
    CHECK(w.row == 0);
    CHECK(w.col == 1);
    CHECK(w.value == 0.5);
  }
  SUBCASE("negative diagonal fails") {
    Eigen::MatrixXd D(2, 2);
    D << -2, 0, 0, 2;
    CHECK(!is_m_matrix_column_dominant(from_dense(D)));
  }
  SUBCASE("negative column sum fails") {
    Eigen::MatrixXd D(2, 2);
    D << 1, 0, -2, 1;  // column 0 sums to -1
    MMatrixWitness w;
    CHECK(!is_m_matrix_column_dominant(from_dense(D), &w));
    CHECK(w.col == 0);
  }
  SUBCASE("tiny negative column sum within roundoff margin passes") {
    Eigen::MatrixXd D(2, 2);
    D << 1.0, 0, -(1.0 + 1e-14), 1.0;
    CHECK(is_m_matrix_column_dominant(from_dense(D)));
  }
  SUBCASE("monotonicity consequence: nonnegative rhs gives nonnegative solution") {
    // Discrete Laplacian-like M-matrix; this is the structural property the
    // transport discretization relies on for positivity.
    const int n = 12;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      D(i, i) = 2.0;
      if (i > 0) D(i, i - 1) = -1.0;
      if (i + 1 < n) D(i, i + 1) = -1.0;
    }
    const SparseMatrix A = from_dense(D);
    REQUIRE(is_m_matrix_column_dominant(A));
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) b[i] = u(rng);
    const Eigen::VectorXd x = sparse_lu_solve(A, b);
    CHECK(x.minCoeff() >= 0.0);
  }
}

TEST_CASE("Uzawa solves a saddle system against a dense KKT oracle") {
  // A u + B^T p = f,  B u = 0 with A = I2, B = [1 1]:
  // p = 1.5, u = (-0.5, 0.5).
  SUBCASE("hand-size system") {
    const SparseMatrix A = from_dense(Eigen::MatrixXd::Identity(2, 2));
    Eigen::MatrixXd Bd(1, 2);
    Bd << 1, 1;
    const SparseMatrix B = from_dense(Bd);
    Eigen::VectorXd f(2);
    f << 1, 2;
    const SparseMatrix P = from_dense(Eigen::MatrixXd::Identity(1, 1));
    // Schur complement is B B^T = 2, so rho = 0.5 eliminates the constraint
    // residual in one step (rho = 1 would sit on the stability boundary).
    const UzawaResult r = uzawa_solve(A, B, f, P, 0.5, 1e-12, 500);
    CHECK(r.report.converged);
    CHECK(r.u[0] == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(r.u[1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.p[0] == doctest::Approx(1.5).epsilon(1e-9));
  }
  SUBCASE("random SPD block with automatic step size and nonzero g") {
    const int n = 30;
    const int m = 6;
    const SparseMatrix A = random_sdd(n, 55);
    std::mt19937 rng(66);
    std::normal_distribution<double> g;
    Eigen::MatrixXd Bd = Eigen::MatrixXd::Zero(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        if ((i * 7 + j) % 5 == 0) Bd(i, j) = g(rng);
      }
    }
    Eigen::VectorXd f(n), gv(m);
    for (int i = 0; i < n; ++i) f[i] = g(rng);
    for (int i = 0; i < m; ++i) gv[i] = 0.1 * g(rng);
    const SparseMatrix B = from_dense(Bd);
    const SparseMatrix P = from_dense(Eigen::MatrixXd::Identity(m, m));

    const UzawaResult r = uzawa_solve(A, B, f, P, -1.0, 1e-11, 4000, &gv);
    REQUIRE(r.report.converged);

    // Dense KKT oracle.
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = Eigen::MatrixXd(A);
    K.topRightCorner(n, m) = Bd.transpose();
    K.bottomLeftCorner(m, n) = Bd;
    Eigen::VectorXd rhs(n + m);
    rhs << f, gv;
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    CHECK((r.u - sol.head(n)).norm() < 1e-6 * (1.0 + sol.head(n).norm()));
    CHECK((r.p - sol.tail(m)).norm() < 1e-6 * (1.0 + sol.tail(m).norm()));
  }
  SUBCASE("non-SPD A block throws") {
    Eigen::MatrixXd D(2, 2);
    D << 1, 0, 0, -1;
    Eigen::MatrixXd Bd(1, 2);
    Bd << 1, 0;
    Eigen::VectorXd f = Eigen::VectorXd::Ones(2);
    const SparseMatrix P = from_dense(Eigen::MatrixXd::Identity(1, 1));
    CHECK_THROWS_AS(uzawa_solve(from_dense(D), from_dense(Bd), f, P, 1.0, 1e-10, 10),
                    SingularMatrixError);
  }
}

TEST_CASE("MatrixMarket writer emits a parsable exact coordinate file") {
  Eigen::MatrixXd D(2, 3);
  D << 1.5, 0, -2.25, 0, 3.0625, 0;
  const SparseMatrix A = from_dense(D);
  const std::string path = "mm_roundtrip_test.mtx";
  write_matrix_market(path, A);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.rfind("%%MatrixMarket matrix coordinate real general", 0) == 0);
  int rows = 0, cols = 0, nnz = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  {
    std::istringstream hdr(line);
    hdr >> rows >> cols >> nnz;
  }
  CHECK(rows == 2);
  CHECK(cols == 3);
  CHECK(nnz == 3);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(rows, cols);
  for (int k = 0; k < nnz; ++k) {
    int i = 0, j = 0;
    double v = 0.0;
    in >> i >> j >> v;
    R(i - 1, j - 1) = v;
  }
  CHECK((R - D).lpNorm<Eigen::Infinity>() == 0.0);
  std::remove(path.c_str());
}
