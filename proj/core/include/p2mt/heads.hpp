#ifndef P2MT_HEADS_HPP
#define P2MT_HEADS_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

#include "p2mt/tensor.hpp"

namespace p2mt {

/// Logistic regression head predicting one binary outcome per slice from the
/// slice's phenotype membership vector s_k.
struct StaticHead {
  std::string task_name;
  Eigen::VectorXd w;  // length R
  double b = 0.0;
};

/// Single-cell LSTM head predicting one binary outcome per timestep from the
/// rows of U_k. Gate matrices act on the concatenated [x_t; h_{t-1}].
struct DynamicHead {
  std::string task_name;
  int hidden = 1;
  Eigen::MatrixXd Wi, Wf, Wo, Wg;  // each hidden x (R + hidden)
  Eigen::VectorXd bi, bf, bo, bg;  // each length hidden
  Eigen::VectorXd w_out;           // length hidden
  double b_out = 0.0;
};

/// The heads being trained, bound to the labels they predict.
struct TaskSet {
  std::vector<StaticHead> statics;    // sorted by task name
  std::vector<DynamicHead> dynamics;  // sorted by task name
  LabelTable labels;

  int num_tasks() const {
    return static_cast<int>(statics.size() + dynamics.size());
  }
};

double sigmoid(double x);

/// -[y log p + (1-y) log(1-p)] with p clamped to [1e-12, 1-1e-12].
double binary_cross_entropy(double p, int y);

/// sigma(w . s + b)
double static_forward(const StaticHead& h, const Eigen::VectorXd& s);

struct StaticGrads {
  double loss = 0.0;
  Eigen::VectorXd grad_w;
  double grad_b = 0.0;
  Eigen::VectorXd grad_s;  // feeds the S-subproblem gradient
};

/// Cross-entropy loss of the logistic head and its gradients with respect to
/// the head parameters and the input s. Probabilities are clamped to
/// [1e-12, 1 - 1e-12] inside the log only.
StaticGrads static_loss_and_grads(const StaticHead& h, const Eigen::VectorXd& s,
                                  int y);

/// Per-timestep probabilities from running the LSTM cell over the rows of U,
/// starting from zero hidden and cell states.
Eigen::VectorXd dynamic_forward(const DynamicHead& h, const Eigen::MatrixXd& U);

struct DynamicGrads {
  double loss = 0.0;  // mean per-timestep cross-entropy
  Eigen::MatrixXd gWi, gWf, gWo, gWg;
  Eigen::VectorXd gbi, gbf, gbo, gbg;
  Eigen::VectorXd g_w_out;
  double g_b_out = 0.0;
  Eigen::MatrixXd grad_U;  // feeds the U-subproblem gradient
};

/// Mean per-timestep cross-entropy with full backpropagation through time
/// (no truncation), returning gradients for every head parameter and for the
/// input rows.
DynamicGrads dynamic_loss_and_grads(const DynamicHead& h,
                                    const Eigen::MatrixXd& U,
                                    const std::vector<int>& y);

/// Average precision with descending-score ranking; equal scores are treated
/// as one group. Throws DataError when no positive label is present.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace p2mt

#endif
