#include "p2mt/model.hpp"

#include <cmath>

#include "p2mt/errors.hpp"

namespace p2mt {

void FactorModel::couple_U_to_QH() {
  U.resize(Q.size());
  for (std::size_t k = 0; k < Q.size(); ++k) U[k] = Q[k] * H;
}

void PenaltyConfig::validate() const {
  if (rho_tensor < 0 || rho_static < 0 || rho_dynamic < 0 || varrho1 < 0 ||
      varrho2 < 0 || c2 < 0)
    throw ConfigError("penalty coefficients must be nonnegative");
  if (!(step_size > 0)) throw ConfigError("step_size must be positive");
}

TaskWeights TaskWeights::from_penalties(const PenaltyConfig& pen, int n_static,
                                        int n_dynamic) {
  TaskWeights w;
  w.tensor = pen.rho_tensor;
  w.statics.assign(static_cast<std::size_t>(n_static), pen.rho_static);
  w.dynamics.assign(static_cast<std::size_t>(n_dynamic), pen.rho_dynamic);
  return w;
}

Eigen::MatrixXd reconstruct_slice(const FactorModel& m, int k) {
  if (k < 0 || k >= m.num_slices())
    throw DataError("reconstruct_slice: slice index out of range");
  const auto ku = static_cast<std::size_t>(k);
  return m.U[ku] * m.s[ku].asDiagonal() * m.V.transpose();
}

double masked_l2_loss(const IrregularTensor& t, const FactorModel& m) {
  const std::int64_t omega = t.observed_count();
  if (omega == 0) throw DataError("masked_l2_loss: no observed entries");
  double sse = 0.0;
  for (int k = 0; k < t.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    Eigen::MatrixXd resid =
        t.masks[ku].cwiseProduct(reconstruct_slice(m, k) - t.slices[ku]);
    sse += resid.squaredNorm();
  }
  return sse / static_cast<double>(omega);
}

double fit_score(const IrregularTensor& t, const FactorModel& m) {
  double resid_energy = 0.0, data_energy = 0.0;
  for (int k = 0; k < t.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    Eigen::MatrixXd recon = m.Q[ku] * m.H * m.s[ku].asDiagonal() * m.V.transpose();
    resid_energy +=
        t.masks[ku].cwiseProduct(t.slices[ku] - recon).squaredNorm();
    data_energy += t.masks[ku].cwiseProduct(t.slices[ku]).squaredNorm();
  }
  if (data_energy == 0.0)
    throw DataError("fit_score: observed tensor is all zero");
  return 1.0 - resid_energy / data_energy;
}

namespace {

// M_k o (U_k diag(s_k) V^T - X_k)
Eigen::MatrixXd masked_residual(const IrregularTensor& t, const FactorModel& m,
                                int k) {
  const auto ku = static_cast<std::size_t>(k);
  return t.masks[ku].cwiseProduct(
      m.U[ku] * m.s[ku].asDiagonal() * m.V.transpose() - t.slices[ku]);
}

}  // namespace

Eigen::MatrixXd grad_U(const IrregularTensor& t, const FactorModel& m, int k,
                       const TaskSet* tasks, const TaskWeights& w,
                       double varrho1) {
  const auto ku = static_cast<std::size_t>(k);
  const double scale =
      2.0 * w.tensor / static_cast<double>(t.observed_count());
  Eigen::MatrixXd g =
      scale * masked_residual(t, m, k) * m.V * m.s[ku].asDiagonal();
  g.noalias() += 2.0 * varrho1 * (m.U[ku] - m.Q[ku] * m.H);
  if (tasks) {
    for (std::size_t ti = 0; ti < tasks->dynamics.size(); ++ti) {
      double rho3 = w.dynamics[ti];
      if (rho3 == 0.0) continue;
      const auto& head = tasks->dynamics[ti];
      auto task_it = tasks->labels.dynamic_labels.find(head.task_name);
      if (task_it == tasks->labels.dynamic_labels.end()) continue;
      auto it = task_it->second.find(t.slice_ids[ku]);
      if (it == task_it->second.end()) continue;
      DynamicGrads dg = dynamic_loss_and_grads(head, m.U[ku], it->second);
      g.noalias() += rho3 * dg.grad_U;
    }
  }
  return g;
}

Eigen::MatrixXd grad_Q(const FactorModel& m, int k, double varrho1,
                       double varrho2) {
  const auto ku = static_cast<std::size_t>(k);
  Eigen::MatrixXd g =
      -2.0 * varrho1 * (m.U[ku] - m.Q[ku] * m.H) * m.H.transpose();
  if (varrho2 != 0.0) {
    Eigen::MatrixXd gram = m.Q[ku].transpose() * m.Q[ku];
    gram.diagonal().array() -= 1.0;
    g.noalias() += 4.0 * varrho2 * m.Q[ku] * gram;
  }
  return g;
}

Eigen::MatrixXd grad_H(const FactorModel& m) {
  std::vector<int> all(static_cast<std::size_t>(m.num_slices()));
  for (int k = 0; k < m.num_slices(); ++k) all[static_cast<std::size_t>(k)] = k;
  return grad_H(m, all);
}

Eigen::MatrixXd grad_H(const FactorModel& m, const std::vector<int>& ks) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m.rank, m.rank);
  for (int k : ks) {
    const auto ku = static_cast<std::size_t>(k);
    g.noalias() += -2.0 * m.Q[ku].transpose() * (m.U[ku] - m.Q[ku] * m.H);
  }
  return g;
}

Eigen::VectorXd grad_S(const IrregularTensor& t, const FactorModel& m, int k,
                       const TaskSet* tasks, const TaskWeights& w) {
  const auto ku = static_cast<std::size_t>(k);
  const double scale =
      2.0 * w.tensor / static_cast<double>(t.observed_count());
  // diag(U_k^T resid V) without forming the R x R product
  Eigen::MatrixXd rv = masked_residual(t, m, k) * m.V;  // I_k x R
  Eigen::VectorXd g =
      scale * m.U[ku].cwiseProduct(rv).colwise().sum().transpose();
  if (tasks) {
    for (std::size_t ti = 0; ti < tasks->statics.size(); ++ti) {
      double rho2 = w.statics[ti];
      if (rho2 == 0.0) continue;
      const auto& head = tasks->statics[ti];
      auto task_it = tasks->labels.static_labels.find(head.task_name);
      if (task_it == tasks->labels.static_labels.end()) continue;
      auto it = task_it->second.find(t.slice_ids[ku]);
      if (it == task_it->second.end()) continue;
      StaticGrads sg = static_loss_and_grads(head, m.s[ku], it->second);
      g.noalias() += rho2 * sg.grad_s;
    }
  }
  return g;
}

Eigen::MatrixXd grad_V(const IrregularTensor& t, const FactorModel& m,
                       double rho1) {
  std::vector<int> all(static_cast<std::size_t>(t.num_slices()));
  for (int k = 0; k < t.num_slices(); ++k) all[static_cast<std::size_t>(k)] = k;
  return grad_V(t, m, rho1, all);
}

Eigen::MatrixXd grad_V(const IrregularTensor& t, const FactorModel& m,
                       double rho1, const std::vector<int>& ks) {
  const double scale = 2.0 * rho1 / static_cast<double>(t.observed_count());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m.V.rows(), m.V.cols());
  for (int k : ks) {
    const auto ku = static_cast<std::size_t>(k);
    g.noalias() += masked_residual(t, m, k).transpose() * m.U[ku] *
                   m.s[ku].asDiagonal();
  }
  return scale * g;
}

Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& x, double eta) {
  if (eta < 0) throw ConfigError("soft_threshold: eta must be nonnegative");
  if (eta == 0.0) return x;
  return x.unaryExpr([eta](double v) {
    double mag = std::abs(v) - eta;
    return mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
  });
}

Eigen::VectorXd nonneg_project(const Eigen::VectorXd& s) {
  return s.cwiseMax(0.0);
}

}  // namespace p2mt
