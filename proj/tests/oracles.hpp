// Test-only reference implementations, kept independent of the library code
// paths they check: plain scalar loops, central finite differences, and an
// exhaustive threshold-by-threshold average precision.
#ifndef P2MT_TESTS_ORACLES_HPP
#define P2MT_TESTS_ORACLES_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "p2mt/heads.hpp"
#include "p2mt/model.hpp"
#include "p2mt/rng.hpp"
#include "p2mt/tensor.hpp"

namespace oracle {

inline Eigen::MatrixXd fd_gradient(
    const std::function<double(const Eigen::MatrixXd&)>& f,
    const Eigen::MatrixXd& x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      g(i, j) = (f(xp) - f(xm)) / (2.0 * h);
    }
  return g;
}

inline double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double denom = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / denom;
}

/// Mean masked squared error via scalar loops.
inline double slow_masked_l2(const p2mt::IrregularTensor& t,
                             const p2mt::FactorModel& m) {
  double sse = 0.0;
  std::int64_t omega = 0;
  for (int k = 0; k < t.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    for (Eigen::Index i = 0; i < t.slices[ku].rows(); ++i)
      for (Eigen::Index j = 0; j < t.slices[ku].cols(); ++j) {
        if (t.masks[ku](i, j) == 0.0) continue;
        ++omega;
        double recon = 0.0;
        for (int r = 0; r < m.rank; ++r)
          recon += m.U[ku](i, r) * m.s[ku](r) * m.V(j, r);
        double e = recon - t.slices[ku](i, j);
        sse += e * e;
      }
  }
  return sse / static_cast<double>(omega);
}

inline double slow_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double slow_xent(double p, int y) {
  double pc = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
  return y ? -std::log(pc) : -std::log(1.0 - pc);
}

inline double slow_static_loss(const Eigen::VectorXd& w, double b,
                               const Eigen::VectorXd& s, int y) {
  double logit = b;
  for (Eigen::Index r = 0; r < s.size(); ++r) logit += w(r) * s(r);
  return slow_xent(slow_sigmoid(logit), y);
}

/// LSTM forward in plain loops; mirrors the recurrence definition, not the
/// library implementation.
inline std::vector<double> slow_lstm_probs(const p2mt::DynamicHead& head,
                                           const Eigen::MatrixXd& U) {
  const int hd = head.hidden;
  const auto R = U.cols();
  std::vector<double> h_prev(static_cast<std::size_t>(hd), 0.0);
  std::vector<double> c_prev(static_cast<std::size_t>(hd), 0.0);
  std::vector<double> probs;
  for (Eigen::Index t = 0; t < U.rows(); ++t) {
    std::vector<double> z(static_cast<std::size_t>(R + hd));
    for (Eigen::Index r = 0; r < R; ++r)
      z[static_cast<std::size_t>(r)] = U(t, r);
    for (int q = 0; q < hd; ++q)
      z[static_cast<std::size_t>(R + q)] = h_prev[static_cast<std::size_t>(q)];
    std::vector<double> h_now(static_cast<std::size_t>(hd));
    std::vector<double> c_now(static_cast<std::size_t>(hd));
    for (int q = 0; q < hd; ++q) {
      double ai = head.bi(q), af = head.bf(q), ao = head.bo(q), ag = head.bg(q);
      for (Eigen::Index c = 0; c < R + hd; ++c) {
        ai += head.Wi(q, c) * z[static_cast<std::size_t>(c)];
        af += head.Wf(q, c) * z[static_cast<std::size_t>(c)];
        ao += head.Wo(q, c) * z[static_cast<std::size_t>(c)];
        ag += head.Wg(q, c) * z[static_cast<std::size_t>(c)];
      }
      double gi = slow_sigmoid(ai), gf = slow_sigmoid(af),
             go = slow_sigmoid(ao), gg = std::tanh(ag);
      c_now[static_cast<std::size_t>(q)] =
          gf * c_prev[static_cast<std::size_t>(q)] + gi * gg;
      h_now[static_cast<std::size_t>(q)] =
          go * std::tanh(c_now[static_cast<std::size_t>(q)]);
    }
    double logit = head.b_out;
    for (int q = 0; q < hd; ++q)
      logit += head.w_out(q) * h_now[static_cast<std::size_t>(q)];
    probs.push_back(slow_sigmoid(logit));
    h_prev = h_now;
    c_prev = c_now;
  }
  return probs;
}

inline double slow_lstm_loss(const p2mt::DynamicHead& head,
                             const Eigen::MatrixXd& U,
                             const std::vector<int>& y) {
  auto probs = slow_lstm_probs(head, U);
  double loss = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t)
    loss += slow_xent(probs[t], y[t]);
  return loss / static_cast<double>(probs.size());
}

/// Average precision by recomputing precision and recall from scratch at
/// every distinct threshold, descending. Quadratic and obviously correct.
inline double brute_force_average_precision(const std::vector<double>& scores,
                                            const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double total_pos = 0;
  for (int y : labels) total_pos += y;
  double ap = 0.0, prev_recall = 0.0;
  for (double th : thresholds) {
    double tp = 0, predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= th) {
        predicted += 1;
        tp += labels[i];
      }
    double precision = tp / predicted;
    double recall = tp / total_pos;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// --- random instance builders ----------------------------------------------

inline p2mt::IrregularTensor random_tensor(p2mt::Rng& rng, int K, int J,
                                           int I_min, int I_max,
                                           double observe_prob = 0.7) {
  p2mt::IrregularTensor t;
  for (int j = 0; j < J; ++j) t.feature_names.push_back("f" + std::to_string(j));
  for (int k = 0; k < K; ++k) {
    int rows = I_min + static_cast<int>(rng.integer(
                           static_cast<std::uint64_t>(I_max - I_min + 1)));
    Eigen::MatrixXd x(rows, J), mask(rows, J);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < J; ++j) {
        mask(i, j) = rng.uniform() < observe_prob ? 1.0 : 0.0;
        x(i, j) = mask(i, j) != 0.0 ? rng.normal() : 0.0;
      }
    t.slices.push_back(std::move(x));
    t.masks.push_back(std::move(mask));
    t.slice_ids.push_back("s" + std::to_string(k));
  }
  // gradient scales assume at least one observation
  if (t.observed_count() == 0) t.masks[0](0, 0) = 1.0;
  return t;
}

inline p2mt::FactorModel random_model(p2mt::Rng& rng,
                                      const p2mt::IrregularTensor& t, int R) {
  p2mt::FactorModel m;
  m.rank = R;
  m.slice_ids = t.slice_ids;
  m.H.resize(R, R);
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b) m.H(a, b) = rng.normal();
  m.V.resize(t.num_features(), R);
  for (int j = 0; j < t.num_features(); ++j)
    for (int r = 0; r < R; ++r) m.V(j, r) = rng.normal();
  for (int k = 0; k < t.num_slices(); ++k) {
    Eigen::MatrixXd q(t.rows(k), R), u(t.rows(k), R);
    for (int i = 0; i < t.rows(k); ++i)
      for (int r = 0; r < R; ++r) {
        q(i, r) = rng.normal();
        u(i, r) = rng.normal();
      }
    m.Q.push_back(std::move(q));
    m.U.push_back(std::move(u));
    Eigen::VectorXd s(R);
    for (int r = 0; r < R; ++r) s(r) = 0.1 + std::abs(rng.normal());
    m.s.push_back(std::move(s));
  }
  return m;
}

inline p2mt::StaticHead random_static_head(p2mt::Rng& rng, int R,
                                           const std::string& name) {
  p2mt::StaticHead h;
  h.task_name = name;
  h.w.resize(R);
  for (int r = 0; r < R; ++r) h.w(r) = rng.normal();
  h.b = rng.normal();
  return h;
}

inline p2mt::DynamicHead random_dynamic_head(p2mt::Rng& rng, int R, int hidden,
                                             const std::string& name) {
  p2mt::DynamicHead h;
  h.task_name = name;
  h.hidden = hidden;
  auto mat = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = 0.5 * rng.normal();
    return m;
  };
  h.Wi = mat(hidden, R + hidden);
  h.Wf = mat(hidden, R + hidden);
  h.Wo = mat(hidden, R + hidden);
  h.Wg = mat(hidden, R + hidden);
  h.bi.resize(hidden);
  h.bf.resize(hidden);
  h.bo.resize(hidden);
  h.bg.resize(hidden);
  h.w_out.resize(hidden);
  for (int q = 0; q < hidden; ++q) {
    h.bi(q) = 0.3 * rng.normal();
    h.bf(q) = 0.3 * rng.normal();
    h.bo(q) = 0.3 * rng.normal();
    h.bg(q) = 0.3 * rng.normal();
    h.w_out(q) = rng.normal();
  }
  h.b_out = 0.3 * rng.normal();
  return h;
}

}  // namespace oracle

#endif
