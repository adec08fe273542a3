#include <Eigen/Eigenvalues>
#include <cmath>

#include "ewfsqd/cisolve.hpp"
#include "ewfsqd/errors.hpp"

namespace ewfsqd {

namespace {

Eigenpair dense_ground_state(const LinearOperator& op) {
  const Eigen::MatrixXd m = op.to_dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("dense eigensolver failed", NAN);
  Eigenpair out;
  out.value = es.eigenvalues()(0);
  out.vector = es.eigenvectors().col(0);
  out.residual = (m * out.vector - out.value * out.vector).norm();
  return out;
}

// Orthogonalize v against the columns of V (twice, for stability); returns
// the remaining norm.
double orthogonalize(const Eigen::MatrixXd& V, int k, Eigen::VectorXd& v) {
  for (int pass = 0; pass < 2; ++pass)
    if (k > 0) v -= V.leftCols(k) * (V.leftCols(k).transpose() * v);
  return v.norm();
}

}  // namespace

Eigenpair davidson_ground_state(const LinearOperator& op,
                                const Eigen::VectorXd* guess,
                                const DavidsonOptions& opts) {
  const std::size_t n = op.dim();
  if (n == 0) throw DomainError("eigenproblem of dimension zero");
  if (n <= opts.dense_threshold) return dense_ground_state(op);

  const Eigen::VectorXd diag = op.diagonal();
  const int max_sub = std::max(4, std::min<int>(opts.max_subspace, static_cast<int>(n)));
  Eigen::MatrixXd V(n, max_sub), AV(n, max_sub);

  Eigen::VectorXd v;
  if (guess && guess->size() == static_cast<Eigen::Index>(n) && guess->norm() > 0) {
    v = *guess / guess->norm();
  } else {
    Eigen::Index imin;
    diag.minCoeff(&imin);
    v = Eigen::VectorXd::Zero(n);
    v(imin) = 1.0;
  }

  int k = 0;
  Eigen::VectorXd w(n), x(n), r(n);
  double theta = 0.0, rnorm = INFINITY;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    if (k == max_sub) {
      // Restart from the current Ritz vector.
      V.col(0) = x;
      op.apply(x, w);
      AV.col(0) = w;
      k = 1;
      if (orthogonalize(V, k, v) < 1e-12) break;
      v.normalize();
    }
    V.col(k) = v;
    op.apply(v, w);
    AV.col(k) = w;
    ++k;

    const Eigen::MatrixXd G = V.leftCols(k).transpose() * AV.leftCols(k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()));
    theta = es.eigenvalues()(0);
    const Eigen::VectorXd y = es.eigenvectors().col(0);
    x = V.leftCols(k) * y;
    r = AV.leftCols(k) * y - theta * x;
    rnorm = r.norm();
    if (rnorm < opts.residual_tol) {
      Eigenpair out;
      out.value = theta;
      out.vector = x / x.norm();
      out.iterations = it;
      out.residual = rnorm;
      return out;
    }
    // Diagonal (Jacobi-style) preconditioner.
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double den = diag(i) - theta;
      if (std::abs(den) < 1e-8) den = den < 0 ? -1e-8 : 1e-8;
      v(i) = r(i) / den;
    }
    double vn = orthogonalize(V, k, v);
    if (vn < 1e-10) {
      // Preconditioned direction collapsed; fall back to the raw residual.
      v = r;
      vn = orthogonalize(V, k, v);
      if (vn < 1e-14) break;
    }
    v /= vn;
  }
  if (rnorm < opts.residual_tol * 10) {
    Eigenpair out{theta, x / x.norm(), opts.max_iterations, rnorm};
    return out;
  }
  throw ConvergenceError("Davidson did not converge in " +
                             std::to_string(opts.max_iterations) + " iterations",
                         rnorm);
}

}  // namespace ewfsqd
