// Internal helpers for drawing random matrices. Not installed.
#ifndef P2MT_SRC_MATRIX_RANDOM_HPP
#define P2MT_SRC_MATRIX_RANDOM_HPP

#include <Eigen/Dense>

#include "p2mt/rng.hpp"

namespace p2mt {

inline Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows,
                                       Eigen::Index cols, double sd = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = sd * rng.normal();
  return m;
}

/// Thin Q of a Gaussian draw, column signs fixed by the R diagonal so the
/// result is canonical. Columns beyond the row count come out zero.
inline Eigen::MatrixXd orthonormal_matrix(Rng& rng, Eigen::Index rows,
                                          Eigen::Index cols) {
  Eigen::MatrixXd g = gaussian_matrix(rng, rows, cols);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  const Eigen::Index rank = std::min(rows, cols);
  for (Eigen::Index c = 0; c < rank; ++c)
    if (qr.matrixQR()(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

}  // namespace p2mt

#endif
