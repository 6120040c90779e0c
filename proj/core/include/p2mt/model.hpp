#ifndef P2MT_MODEL_HPP
#define P2MT_MODEL_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

#include "p2mt/heads.hpp"
#include "p2mt/tensor.hpp"

namespace p2mt {

/// Factor matrices for one irregular tensor: each slice is approximated as
/// U_k diag(s_k) V^T, with U_k coupled to Q_k H during training and set to
/// Q_k H exactly at export.
struct FactorModel {
  std::vector<Eigen::MatrixXd> Q;  // I_k x R, approximately orthonormal columns
  Eigen::MatrixXd H;               // R x R
  std::vector<Eigen::VectorXd> s;  // length R, nonnegative
  Eigen::MatrixXd V;               // J x R
  std::vector<Eigen::MatrixXd> U;  // I_k x R, free during training
  int rank = 0;
  std::vector<std::string> slice_ids;

  int num_slices() const { return static_cast<int>(Q.size()); }

  /// Export coupling: U_k := Q_k H for every slice.
  void couple_U_to_QH();
};

/// Coefficients of the combined objective. The rho_* values weight the
/// reconstruction / static / dynamic losses (replaced per epoch by scheduler
/// weights when scheduling is enabled); varrho1 couples U_k to Q_k H,
/// varrho2 penalizes deviation of Q_k from orthonormality, c2 scales the
/// l1 sparsity on V, and step_size is the shared SGD step.
struct PenaltyConfig {
  double rho_tensor = 1.0;
  double rho_static = 1.0;
  double rho_dynamic = 1.0;
  double varrho1 = 1.0;
  double varrho2 = 0.5;
  double c2 = 0.0;
  double step_size = 1e-2;

  void validate() const;
};

/// Per-task loss coefficients for one epoch, aligned with a TaskSet's head
/// vectors. Index 0 of the scheduler corresponds to `tensor`.
struct TaskWeights {
  double tensor = 1.0;
  std::vector<double> statics;
  std::vector<double> dynamics;

  static TaskWeights from_penalties(const PenaltyConfig& pen, int n_static,
                                    int n_dynamic);
};

// --- reconstruction and quality --------------------------------------------

/// U_k diag(s_k) V^T using the free U_k.
Eigen::MatrixXd reconstruct_slice(const FactorModel& m, int k);

/// Mean squared residual over observed entries only:
/// (1/|Omega|) sum_k ||M_k o (U_k diag(s_k) V^T - X_k)||_F^2.
double masked_l2_loss(const IrregularTensor& t, const FactorModel& m);

/// FIT = 1 - sum_k ||X_k - Q_k H diag(s_k) V^T||^2 / sum_k ||X_k||^2 with
/// both sums restricted to observed entries. Uses the exported coupling
/// U_k = Q_k H regardless of the free U_k.
double fit_score(const IrregularTensor& t, const FactorModel& m);

// --- subproblem gradients ---------------------------------------------------
//
// Each returns the gradient of the corresponding alternating subproblem at
// the current iterate. `tasks` may be null (or weights zero) to drop the
// prediction terms.

/// d/dU_k of  rho1 * masked_l2 + varrho1 ||U_k - Q_k H||_F^2
///            + sum_tau rho3_tau * L_dynamic_tau(U_k).
Eigen::MatrixXd grad_U(const IrregularTensor& t, const FactorModel& m, int k,
                       const TaskSet* tasks, const TaskWeights& w,
                       double varrho1);

/// d/dQ_k of  varrho1 ||U_k - Q_k H||_F^2 + varrho2 ||Q_k^T Q_k - I||_F^2.
Eigen::MatrixXd grad_Q(const FactorModel& m, int k, double varrho1,
                       double varrho2);

/// d/dH of  sum_k ||U_k - Q_k H||_F^2  (over the given slices; all when
/// empty).
Eigen::MatrixXd grad_H(const FactorModel& m);
Eigen::MatrixXd grad_H(const FactorModel& m, const std::vector<int>& ks);

/// d/ds_k of  rho1 * masked_l2 + sum_tau rho2_tau * L_static_tau(s_k).
Eigen::VectorXd grad_S(const IrregularTensor& t, const FactorModel& m, int k,
                       const TaskSet* tasks, const TaskWeights& w);

/// Smooth part only: d/dV of rho1 * masked_l2 (over the given slices; all
/// when empty). The l1 term is handled by soft_threshold.
Eigen::MatrixXd grad_V(const IrregularTensor& t, const FactorModel& m,
                       double rho1);
Eigen::MatrixXd grad_V(const IrregularTensor& t, const FactorModel& m,
                       double rho1, const std::vector<int>& ks);

// --- proximal operators -----------------------------------------------------

/// sign(x) * max(|x| - eta, 0), elementwise.
Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& x, double eta);

/// max(0, s), elementwise.
Eigen::VectorXd nonneg_project(const Eigen::VectorXd& s);

}  // namespace p2mt

#endif
