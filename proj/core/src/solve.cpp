#include "mshom/solve.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include <cmath>

namespace mshom {

namespace {

template <typename Mat, typename Vec>
double relative_residual(const Mat& A, const Vec& x, const Vec& b) {
  const double bn = b.norm();
  if (bn == 0.0) return x.isZero(0.0) ? 0.0 : (A * x).norm();
  if (!x.allFinite()) return std::numeric_limits<double>::infinity();
  return (b - A * x).norm() / bn;
}

template <typename Scalar, typename Vec>
Vec direct_lu(const Eigen::SparseMatrix<Scalar>& A, const Vec& b, bool& ok) {
  Eigen::SparseLU<Eigen::SparseMatrix<Scalar>> lu;
  lu.compute(A);
  ok = (lu.info() == Eigen::Success);
  if (!ok) return Vec::Zero(b.size());
  Vec x = lu.solve(b);
  ok = (lu.info() == Eigen::Success) && x.allFinite();
  return x;
}

} // namespace

VectorXd solve(const SparseSystem& sys, double tol, SolveStats* stats) {
  const int n = static_cast<int>(sys.A.rows());
  if (n == 0) {
    if (stats) *stats = {0, 0.0, false};
    return VectorXd();
  }
  const int max_iters = 10 * n;
  VectorXd x;
  int iters = 0;

  if (sys.kind == MatrixKind::SymmetricPositiveDefinite) {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setMaxIterations(max_iters);
    cg.setTolerance(tol);
    cg.compute(sys.A);
    x = cg.solve(sys.b);
    iters = static_cast<int>(cg.iterations());
  } else {
    Eigen::MINRES<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IdentityPreconditioner> mr;
    mr.setMaxIterations(max_iters);
    mr.setTolerance(tol);
    mr.compute(sys.A);
    x = mr.solve(sys.b);
    iters = static_cast<int>(mr.iterations());
  }

  double res = relative_residual(sys.A, x, sys.b);
  bool direct = false;
  if (!(res <= tol)) {
    bool ok = false;
    const VectorXd xd = direct_lu(sys.A, sys.b, ok);
    if (ok) {
      const double rd = relative_residual(sys.A, xd, sys.b);
      if (rd < res) {
        x = xd;
        res = rd;
        direct = true;
      }
    }
  }
  if (stats) *stats = {iters, res, direct};
  if (!(res <= tol))
    throw SolverError("linear solve failed to converge", res, iters);
  return x;
}

VectorXcd solve(const ComplexSparseSystem& sys, double tol, SolveStats* stats,
                const VectorXcd* guess) {
  const int n = static_cast<int>(sys.A.rows());
  if (n == 0) {
    if (stats) *stats = {0, 0.0, false};
    return VectorXcd();
  }
  const int max_iters = 10 * n;
  Eigen::BiCGSTAB<SpMatC, Eigen::DiagonalPreconditioner<Complex>> bi;
  bi.setMaxIterations(max_iters);
  bi.setTolerance(tol);
  bi.compute(sys.A);
  VectorXcd x = guess ? bi.solveWithGuess(sys.b, *guess).eval() : bi.solve(sys.b).eval();
  int iters = static_cast<int>(bi.iterations());

  double res = relative_residual(sys.A, x, sys.b);
  bool direct = false;
  if (!(res <= tol)) {
    bool ok = false;
    const VectorXcd xd = direct_lu(sys.A, sys.b, ok);
    if (ok) {
      const double rd = relative_residual(sys.A, xd, sys.b);
      if (rd < res) {
        x = xd;
        res = rd;
        direct = true;
      }
    }
  }
  if (stats) *stats = {iters, res, direct};
  if (!(res <= tol))
    throw SolverError("complex linear solve failed to converge", res, iters);
  return x;
}

} // namespace mshom
