#ifndef MATCHQ_LINSOLVE_HPP
#define MATCHQ_LINSOLVE_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>

namespace matchq {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Square sparse solver. Systems up to `direct_limit` unknowns use a sparse
/// LU factorization; larger ones use Jacobi-preconditioned BiCGSTAB, falling
/// back to an ILUT preconditioner and then to LU when the residual misses the
/// tolerance.
class SparseSolver {
public:
  static constexpr long kDefaultDirectLimit = 4000;

  explicit SparseSolver(const SparseMatrix& a, long direct_limit = kDefaultDirectLimit,
                        double tol = 1e-10);
  ~SparseSolver();
  SparseSolver(SparseSolver&&) noexcept;
  SparseSolver& operator=(SparseSolver&&) noexcept;

  /// Throws ConvergenceError when the relative residual
  /// |b - Ax|_inf / (|A|_inf |x|_inf + |b|_inf) exceeds the tolerance.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b, const Eigen::VectorXd& guess) const;

  long size() const { return n_; }
  /// Relative residual of the last solve.
  double last_residual() const { return last_residual_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  long n_ = 0;
  mutable double last_residual_ = 0.0;
};

}  // namespace matchq

#endif  // MATCHQ_LINSOLVE_HPP
