#include "p2mt/synth.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "matrix_random.hpp"
#include "p2mt/errors.hpp"
#include "p2mt/rng.hpp"

namespace p2mt {

void SynthSpec::validate() const {
  if (K < 1 || J < 1 || R_true < 1)
    throw ConfigError("synth: K, J, and R_true must be positive");
  if (I_min < 1 || I_min > I_max)
    throw ConfigError("synth: need 1 <= I_min <= I_max");
  if (R_true > std::min(I_min, J))
    throw ConfigError("synth: R_true must not exceed min(I_min, J)");
  if (noise_sd < 0) throw ConfigError("synth: noise_sd must be nonnegative");
  if (!(missing_rate >= 0 && missing_rate < 1))
    throw ConfigError("synth: missing_rate must lie in [0, 1)");
  if (!(label_noise >= 0 && label_noise < 0.5))
    throw ConfigError("synth: label_noise must lie in [0, 0.5)");
}

namespace {

// Sample labels from sigma(logit), flipping each with probability
// label_noise.
int sample_label(Rng& rng, double logit, double label_noise) {
  int y = rng.uniform() < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0;
  if (label_noise > 0 && rng.uniform() < label_noise) y = 1 - y;
  return y;
}

}  // namespace

SynthData synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng factor_rng = root.derive(1);
  Rng noise_rng = root.derive(2);
  Rng mask_rng = root.derive(3);
  Rng label_rng = root.derive(4);

  const int K = spec.K, J = spec.J, R = spec.R_true;

  SynthData out;
  out.truth.rank = R;

  // H: random rotation with mild per-column scales, keeps X well conditioned
  Eigen::MatrixXd h_rot = orthonormal_matrix(factor_rng, R, R);
  Eigen::VectorXd h_scale(R);
  for (int r = 0; r < R; ++r) h_scale(r) = factor_rng.uniform(0.8, 1.2);
  out.truth.H = h_rot * h_scale.asDiagonal();

  // V: Gaussian with unit-norm columns
  out.truth.V = gaussian_matrix(factor_rng, J, R);
  for (int r = 0; r < R; ++r) out.truth.V.col(r).normalize();

  for (int k = 0; k < K; ++k) {
    int rows = spec.I_min +
               static_cast<int>(factor_rng.integer(
                   static_cast<std::uint64_t>(spec.I_max - spec.I_min + 1)));
    out.truth.Q.push_back(orthonormal_matrix(factor_rng, rows, R));
    Eigen::VectorXd s(R);
    for (int r = 0; r < R; ++r) s(r) = factor_rng.uniform(0.5, 1.5);
    out.truth.s.push_back(s);
    out.truth.slice_ids.push_back("s" + std::to_string(k));
  }
  out.truth.couple_U_to_QH();

  out.tensor.slice_ids = out.truth.slice_ids;
  out.tensor.feature_names.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j)
    out.tensor.feature_names[static_cast<std::size_t>(j)] =
        "f" + std::to_string(j);

  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    Eigen::MatrixXd x = out.truth.U[ku] * out.truth.s[ku].asDiagonal() *
                        out.truth.V.transpose();
    if (spec.noise_sd > 0)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          x(i, j) += noise_rng.normal(0.0, spec.noise_sd);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(x.rows(), x.cols());
    if (spec.missing_rate > 0)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          if (mask_rng.uniform() < spec.missing_rate) mask(i, j) = 0.0;
    x = x.cwiseProduct(mask);
    out.tensor.slices.push_back(std::move(x));
    out.tensor.masks.push_back(std::move(mask));
  }

  // Label generators: linear maps calibrated so the logits over the dataset
  // have zero mean and a fixed spread, keeping both classes represented.
  const double target_logit_sd = 1.5;

  Eigen::VectorXd w_s = gaussian_matrix(label_rng, R, 1).col(0);
  {
    double mean = 0.0, sq = 0.0;
    for (int k = 0; k < K; ++k) {
      double v = w_s.dot(out.truth.s[static_cast<std::size_t>(k)]);
      mean += v;
      sq += v * v;
    }
    mean /= K;
    double sd = std::sqrt(std::max(sq / K - mean * mean, 1e-12));
    w_s *= target_logit_sd / sd;
    out.static_b = -mean * target_logit_sd / sd;
  }
  out.static_w = w_s;

  Eigen::VectorXd w_d = gaussian_matrix(label_rng, R, 1).col(0);
  {
    double mean = 0.0, sq = 0.0;
    std::int64_t n = 0;
    for (int k = 0; k < K; ++k)
      for (Eigen::Index i = 0; i < out.truth.U[static_cast<std::size_t>(k)].rows(); ++i) {
        double v =
            w_d.dot(out.truth.U[static_cast<std::size_t>(k)].row(i).transpose());
        mean += v;
        sq += v * v;
        ++n;
      }
    mean /= static_cast<double>(n);
    double sd =
        std::sqrt(std::max(sq / static_cast<double>(n) - mean * mean, 1e-12));
    w_d *= target_logit_sd / sd;
    out.dynamic_b = -mean * target_logit_sd / sd;
  }
  out.dynamic_w = w_d;

  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const std::string& id = out.tensor.slice_ids[ku];
    double logit = out.static_w.dot(out.truth.s[ku]) + out.static_b;
    out.labels.static_labels["outcome"][id] =
        sample_label(label_rng, logit, spec.label_noise);
    std::vector<int> seq;
    for (Eigen::Index i = 0; i < out.truth.U[ku].rows(); ++i) {
      double l =
          out.dynamic_w.dot(out.truth.U[ku].row(i).transpose()) + out.dynamic_b;
      seq.push_back(sample_label(label_rng, l, spec.label_noise));
    }
    out.labels.dynamic_labels["event"][id] = std::move(seq);
  }

  return out;
}

}  // namespace p2mt
