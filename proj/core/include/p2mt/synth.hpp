#ifndef P2MT_SYNTH_HPP
#define P2MT_SYNTH_HPP

#include <cstdint>

#include "p2mt/model.hpp"
#include "p2mt/tensor.hpp"

namespace p2mt {

/// Recipe for a synthetic ground-truth dataset.
struct SynthSpec {
  int K = 50;
  int J = 20;
  int R_true = 5;
  int I_min = 5;
  int I_max = 15;
  double noise_sd = 0.0;
  double missing_rate = 0.0;
  double label_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  IrregularTensor tensor;
  LabelTable labels;      // one static task "outcome", one dynamic task "event"
  FactorModel truth;      // generating factors, U coupled to Q H
  // generating head parameters, kept for oracle checks
  Eigen::VectorXd static_w;
  double static_b = 0.0;
  Eigen::VectorXd dynamic_w;
  double dynamic_b = 0.0;
};

/// Draw ground-truth factors Q_k (orthonormal), H, s_k, V, build
/// X_k = Q_k H diag(s_k) V^T plus Gaussian noise, knock out a missing_rate
/// fraction of the masks, and sample Bernoulli labels from seeded linear
/// maps of s_k (static) and the rows of U_k (dynamic), each flipped with
/// probability label_noise. Bit-identical for a fixed seed.
SynthData synth_generate(const SynthSpec& spec);

}  // namespace p2mt

#endif
