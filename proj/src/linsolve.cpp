#include "matchq/linsolve.hpp"

#include "matchq/model.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <limits>
#include <string>

namespace matchq {

namespace {
using LU = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;
using Jacobi = Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>>;
using Ilut = Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>>;
constexpr long kLuFallbackLimit = 200000;
}  // namespace

struct SparseSolver::Impl {
  SparseMatrix a;
  double tol = 1e-10;
  double norm_inf = 0.0;
  std::unique_ptr<LU> lu;
  std::unique_ptr<Jacobi> jacobi;
  std::unique_ptr<Ilut> ilut;

  double residual(const Eigen::VectorXd& x, const Eigen::VectorXd& b) const {
    if (!x.allFinite()) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd r = b - a * x;
    const double scale = norm_inf * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>();
    return scale > 0.0 ? r.lpNorm<Eigen::Infinity>() / scale : 0.0;
  }

  void factor() {
    lu = std::make_unique<LU>();
    lu->compute(a);
    if (lu->info() != Eigen::Success)
      throw ConvergenceError("sparse LU factorization failed (singular system?)", 0.0);
  }

  Eigen::VectorXd lu_solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = lu->solve(b);
    x += lu->solve(Eigen::VectorXd(b - a * x));  // one refinement step
    return x;
  }
};

SparseSolver::SparseSolver(const SparseMatrix& a, long direct_limit, double tol)
    : impl_(std::make_unique<Impl>()), n_(a.rows()) {
  if (a.rows() != a.cols()) throw InputError("sparse solve needs a square matrix");
  impl_->a = a;
  impl_->a.makeCompressed();
  impl_->tol = tol;
  Eigen::VectorXd row_abs = Eigen::VectorXd::Zero(n_);
  for (int k = 0; k < impl_->a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(impl_->a, k); it; ++it) row_abs[it.row()] += std::abs(it.value());
  impl_->norm_inf = n_ > 0 ? row_abs.maxCoeff() : 0.0;

  if (n_ <= direct_limit) {
    impl_->factor();
  } else {
    impl_->jacobi = std::make_unique<Jacobi>();
    impl_->jacobi->setTolerance(tol * 1e-3);
    impl_->jacobi->setMaxIterations(std::max<long>(1000, n_ / 10));
    impl_->jacobi->compute(impl_->a);
  }
}

SparseSolver::~SparseSolver() = default;
SparseSolver::SparseSolver(SparseSolver&&) noexcept = default;
SparseSolver& SparseSolver::operator=(SparseSolver&&) noexcept = default;

Eigen::VectorXd SparseSolver::solve(const Eigen::VectorXd& b) const {
  return solve(b, Eigen::VectorXd::Zero(n_));
}

Eigen::VectorXd SparseSolver::solve(const Eigen::VectorXd& b, const Eigen::VectorXd& guess) const {
  Impl& m = *impl_;
  Eigen::VectorXd x;
  double rel = std::numeric_limits<double>::infinity();
  if (m.jacobi) {
    x = m.jacobi->solveWithGuess(b, guess);
    rel = m.residual(x, b);
    if (rel > m.tol) {
      if (!m.ilut) {
        m.ilut = std::make_unique<Ilut>();
        m.ilut->preconditioner().setDroptol(1e-5);
        m.ilut->preconditioner().setFillfactor(10);
        m.ilut->setTolerance(m.tol * 1e-3);
        m.ilut->setMaxIterations(2000);
        m.ilut->compute(m.a);
      }
      if (m.ilut->info() == Eigen::Success) {
        x = m.ilut->solveWithGuess(b, x.allFinite() ? x : guess);
        rel = m.residual(x, b);
      }
    }
    if (rel > m.tol && n_ <= kLuFallbackLimit && !m.lu) m.factor();
  }
  if (m.lu && rel > m.tol) {
    x = m.lu_solve(b);
    rel = m.residual(x, b);
  }
  last_residual_ = rel;
  if (rel > m.tol)
    throw ConvergenceError("linear solve residual " + std::to_string(rel) + " above tolerance",
                           rel);
  return x;
}

}  // namespace matchq
