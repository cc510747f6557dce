#include "rtd/matrix_exp.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace rtd::linalg {

Eigen::MatrixXd expm(const Eigen::MatrixXd& A, double t) { return (t * A).exp(); }

double norm1(const SpMat& A) {
  double best = 0.0;
  for (int k = 0; k < A.outerSize(); ++k) {
    double s = 0.0;
    for (SpMat::InnerIterator it(A, k); it; ++it) s += std::fabs(it.value());
    best = std::max(best, s);
  }
  return best;
}

Eigen::VectorXd expmv(const SpMat& A, double t, const Eigen::VectorXd& v, double tol, int dense_limit) {
  const Eigen::Index n = A.rows();
  if (n <= dense_limit) return expm(Eigen::MatrixXd(A), t) * v;
  // Shift by the mean diagonal to shrink the norm, undo with a scalar factor.
  const double shift = A.diagonal().sum() / static_cast<double>(n);
  SpMat B = A;
  for (Eigen::Index i = 0; i < n; ++i) B.coeffRef(i, i) -= shift;
  const double nrm = t * norm1(B);
  const int s = std::max(1, static_cast<int>(std::ceil(nrm / 3.5)));
  const double h = t / s;
  const double eta = std::exp(shift * h);
  Eigen::VectorXd f = v;
  for (int step = 0; step < s; ++step) {
    Eigen::VectorXd term = f, acc = f;
    double c1 = term.lpNorm<Eigen::Infinity>();
    for (int k = 1; k <= 60; ++k) {
      term = (h / k) * (B * term);
      acc += term;
      const double c2 = term.lpNorm<Eigen::Infinity>();
      if (c1 + c2 <= tol * acc.lpNorm<Eigen::Infinity>()) break;
      c1 = c2;
    }
    f = eta * acc;
  }
  return f;
}

}  // namespace rtd::linalg
