#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace rtd::linalg {

using SpMat = Eigen::SparseMatrix<double>;

// exp(t A) for a dense matrix (scaling and squaring with Pade 13).
Eigen::MatrixXd expm(const Eigen::MatrixXd& A, double t = 1.0);

// exp(t A) v. Dense Pade for n <= dense_limit, otherwise a shifted, scaled
// truncated Taylor series with s = ceil(||tA||_1 / 3.5) substeps.
Eigen::VectorXd expmv(const SpMat& A, double t, const Eigen::VectorXd& v, double tol = 1e-12, int dense_limit = 400);

double norm1(const SpMat& A);

}  // namespace rtd::linalg
