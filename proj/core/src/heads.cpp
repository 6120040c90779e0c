#include "p2mt/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "p2mt/errors.hpp"

namespace p2mt {

namespace {
constexpr double kProbClamp = 1e-12;
}

double binary_cross_entropy(double p, int y) {
  double pc = std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
  return y ? -std::log(pc) : -std::log(1.0 - pc);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double static_forward(const StaticHead& h, const Eigen::VectorXd& s) {
  return sigmoid(h.w.dot(s) + h.b);
}

StaticGrads static_loss_and_grads(const StaticHead& h, const Eigen::VectorXd& s,
                                  int y) {
  StaticGrads g;
  double p = static_forward(h, s);
  g.loss = binary_cross_entropy(p, y);
  double delta = p - static_cast<double>(y);  // d loss / d logit
  g.grad_w = delta * s;
  g.grad_b = delta;
  g.grad_s = delta * h.w;
  return g;
}

namespace {

// per-timestep forward activations kept for backprop
struct LstmTrace {
  Eigen::MatrixXd z;       // (R+h) x T concatenated inputs
  Eigen::MatrixXd i, f, o, g, c, tanh_c, h;  // hidden x T
  Eigen::VectorXd p;       // T
};

LstmTrace lstm_forward(const DynamicHead& head, const Eigen::MatrixXd& U) {
  const auto T = U.rows();
  const auto R = U.cols();
  const int hd = head.hidden;
  LstmTrace tr;
  tr.z.resize(R + hd, T);
  tr.i.resize(hd, T);
  tr.f.resize(hd, T);
  tr.o.resize(hd, T);
  tr.g.resize(hd, T);
  tr.c.resize(hd, T);
  tr.tanh_c.resize(hd, T);
  tr.h.resize(hd, T);
  tr.p.resize(T);

  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(hd);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(hd);
  for (Eigen::Index t = 0; t < T; ++t) {
    tr.z.col(t).head(R) = U.row(t).transpose();
    tr.z.col(t).tail(hd) = h_prev;
    const Eigen::VectorXd z = tr.z.col(t);
    tr.i.col(t) = ((head.Wi * z + head.bi).array().unaryExpr(
        [](double v) { return sigmoid(v); }));
    tr.f.col(t) = ((head.Wf * z + head.bf).array().unaryExpr(
        [](double v) { return sigmoid(v); }));
    tr.o.col(t) = ((head.Wo * z + head.bo).array().unaryExpr(
        [](double v) { return sigmoid(v); }));
    tr.g.col(t) = (head.Wg * z + head.bg).array().tanh();
    tr.c.col(t) = tr.f.col(t).cwiseProduct(c_prev) +
                  tr.i.col(t).cwiseProduct(tr.g.col(t));
    tr.tanh_c.col(t) = tr.c.col(t).array().tanh();
    tr.h.col(t) = tr.o.col(t).cwiseProduct(tr.tanh_c.col(t));
    tr.p(t) = sigmoid(head.w_out.dot(tr.h.col(t)) + head.b_out);
    h_prev = tr.h.col(t);
    c_prev = tr.c.col(t);
  }
  return tr;
}

}  // namespace

Eigen::VectorXd dynamic_forward(const DynamicHead& h, const Eigen::MatrixXd& U) {
  return lstm_forward(h, U).p;
}

DynamicGrads dynamic_loss_and_grads(const DynamicHead& head,
                                    const Eigen::MatrixXd& U,
                                    const std::vector<int>& y) {
  const auto T = U.rows();
  const auto R = U.cols();
  const int hd = head.hidden;
  if (static_cast<Eigen::Index>(y.size()) != T)
    throw DataError("dynamic head: " + std::to_string(y.size()) +
                    " labels for " + std::to_string(T) + " timesteps");

  LstmTrace tr = lstm_forward(head, U);

  DynamicGrads g;
  g.gWi = Eigen::MatrixXd::Zero(hd, R + hd);
  g.gWf = Eigen::MatrixXd::Zero(hd, R + hd);
  g.gWo = Eigen::MatrixXd::Zero(hd, R + hd);
  g.gWg = Eigen::MatrixXd::Zero(hd, R + hd);
  g.gbi = Eigen::VectorXd::Zero(hd);
  g.gbf = Eigen::VectorXd::Zero(hd);
  g.gbo = Eigen::VectorXd::Zero(hd);
  g.gbg = Eigen::VectorXd::Zero(hd);
  g.g_w_out = Eigen::VectorXd::Zero(hd);
  g.grad_U = Eigen::MatrixXd::Zero(T, R);

  for (Eigen::Index t = 0; t < T; ++t)
    g.loss += binary_cross_entropy(tr.p(t), y[static_cast<std::size_t>(t)]);
  g.loss /= static_cast<double>(T);

  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hd);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(hd);
  const double inv_T = 1.0 / static_cast<double>(T);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    double dlogit =
        (tr.p(t) - static_cast<double>(y[static_cast<std::size_t>(t)])) * inv_T;
    g.g_w_out += dlogit * tr.h.col(t);
    g.g_b_out += dlogit;

    Eigen::VectorXd dh = dlogit * head.w_out + dh_next;
    Eigen::VectorXd dc =
        dh.cwiseProduct(tr.o.col(t))
            .cwiseProduct((1.0 - tr.tanh_c.col(t).array().square()).matrix()) +
        dc_next;

    Eigen::VectorXd do_ = dh.cwiseProduct(tr.tanh_c.col(t));
    Eigen::VectorXd di = dc.cwiseProduct(tr.g.col(t));
    Eigen::VectorXd dg = dc.cwiseProduct(tr.i.col(t));
    Eigen::VectorXd c_prev =
        t > 0 ? Eigen::VectorXd(tr.c.col(t - 1)) : Eigen::VectorXd::Zero(hd);
    Eigen::VectorXd df = dc.cwiseProduct(c_prev);

    // pre-activation gradients
    Eigen::VectorXd dai = di.cwiseProduct(
        tr.i.col(t).cwiseProduct((1.0 - tr.i.col(t).array()).matrix()));
    Eigen::VectorXd daf = df.cwiseProduct(
        tr.f.col(t).cwiseProduct((1.0 - tr.f.col(t).array()).matrix()));
    Eigen::VectorXd dao = do_.cwiseProduct(
        tr.o.col(t).cwiseProduct((1.0 - tr.o.col(t).array()).matrix()));
    Eigen::VectorXd dag =
        dg.cwiseProduct((1.0 - tr.g.col(t).array().square()).matrix());

    const Eigen::VectorXd z = tr.z.col(t);
    g.gWi += dai * z.transpose();
    g.gWf += daf * z.transpose();
    g.gWo += dao * z.transpose();
    g.gWg += dag * z.transpose();
    g.gbi += dai;
    g.gbf += daf;
    g.gbo += dao;
    g.gbg += dag;

    Eigen::VectorXd dz = head.Wi.transpose() * dai +
                         head.Wf.transpose() * daf +
                         head.Wo.transpose() * dao + head.Wg.transpose() * dag;
    g.grad_U.row(t) = dz.head(R).transpose();
    dh_next = dz.tail(hd);
    dc_next = dc.cwiseProduct(tr.f.col(t));
  }
  return g;
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("pr_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::int64_t total_pos = 0;
  for (int y : labels) total_pos += y;
  if (total_pos == 0) throw DataError("pr_auc: no positive labels, metric undefined");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  std::int64_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < n) {
    // one group per distinct score
    std::size_t j = i;
    std::int64_t group_tp = 0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      group_tp += labels[idx[j]];
      ++j;
    }
    tp += group_tp;
    seen += static_cast<std::int64_t>(j - i);
    double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += precision * static_cast<double>(group_tp) /
          static_cast<double>(total_pos);
    i = j;
  }
  return ap;
}

}  // namespace p2mt
