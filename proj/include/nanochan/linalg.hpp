#pragma once

#include "nanochan/types.hpp"

#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace nanochan {

/// All assembled operators are stored row-major (CSR: row offsets, column
/// indices, values), which matches the row-oriented access pattern of the
/// iterative solvers and of the matrix property checks below.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  ///< final residual norm, solver-specific scaling
};

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.
/// Deterministic: ties broken by vertex index, components seeded by their
/// minimum-degree (then minimum-index) node. Returns perm such that
/// new_index = perm[old_index].
std::vector<int> reverse_cuthill_mckee(const SparseMatrix& A);

/// Direct solve via sparse LU on the RCM-permuted matrix, followed by
/// iterative refinement until ||Ax-b||_inf <= 1e-10 ||b||_inf (at most three
/// refinement sweeps). Throws SingularMatrixError on structurally or
/// numerically singular input.
Eigen::VectorXd sparse_lu_solve(const SparseMatrix& A, const Eigen::VectorXd& b);

/// Reusable factorization for repeated right-hand sides (same semantics as
/// sparse_lu_solve, factored once).
class DirectSolver {
 public:
  explicit DirectSolver(const SparseMatrix& A);
  ~DirectSolver();
  DirectSolver(DirectSolver&&) noexcept;
  DirectSolver& operator=(DirectSolver&&) noexcept;
  DirectSolver(const DirectSolver&) = delete;
  DirectSolver& operator=(const DirectSolver&) = delete;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  struct Impl;
  Impl* impl_;
};

/// Biconjugate gradient iteration (two-sided Lanczos form, shadow system
/// driven by A^T). Starts from x = 0. Converged when ||r||_2 <= tol ||b||_2.
/// Throws BreakdownError when an inner product collapses relative to the
/// scale of its factors; plain stagnation only yields converged = false.
Eigen::VectorXd bicg_solve(const SparseMatrix& A, const Eigen::VectorXd& b, double tol,
                           int max_iterations, SolveReport* report = nullptr);

struct UzawaResult {
  Eigen::VectorXd u;
  Eigen::VectorXd p;
  SolveReport report;
};

/// Preconditioned Uzawa iteration for the saddle system
///   A u + B^T p = f,   B u = g,
/// with SPD velocity block A and SPD pressure preconditioner P:
///   u_k = A^{-1}(f - B^T p_k),  p_{k+1} = p_k + rho P^{-1}(B u_k - g).
/// Converged when ||B u - g||_2 <= tol * (||B||_inf ||u||_2 + ||g||_2).
/// rho <= 0 requests a deterministic line search over rho in
/// {1/4, 1/2, 1, 2, 4} * rho0 (rho0 from the preconditioner scaling) that
/// picks the fastest constraint-residual reduction over five trial sweeps.
UzawaResult uzawa_solve(const SparseMatrix& A, const SparseMatrix& B, const Eigen::VectorXd& f,
                        const SparseMatrix& P, double rho, double tol, int max_iterations,
                        const Eigen::VectorXd* g = nullptr);

struct MMatrixWitness {
  int row = -1;
  int col = -1;
  double value = 0.0;
  std::string reason;
};

/// True iff A has strictly positive diagonal, nonpositive off-diagonal
/// entries, and nonnegative column sums. Column sums are allowed a roundoff
/// margin of 1e-12 * (largest magnitude in the column) so that analytically
/// zero sums assembled in floating point do not flip the verdict; entry sign
/// checks are exact. On failure the first offending entry is reported.
bool is_m_matrix_column_dominant(const SparseMatrix& A, MMatrixWitness* witness = nullptr);

/// Plain-text MatrixMarket (coordinate, general) dump with 17 significant
/// digits, entries in row-major order.
void write_matrix_market(const std::string& path, const SparseMatrix& A);

}  // namespace nanochan
