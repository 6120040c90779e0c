#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "p2mt/errors.hpp"
#include "p2mt/heads.hpp"
#include "p2mt/rng.hpp"

using namespace p2mt;

TEST_CASE("static_forward hand cases") {
  StaticHead h;
  h.w = Eigen::VectorXd::Zero(2);
  h.b = 0.0;
  CHECK(static_forward(h, Eigen::VectorXd::Ones(2)) == doctest::Approx(0.5));

  h.w = (Eigen::VectorXd(2) << 1, 0).finished();
  Eigen::VectorXd s = (Eigen::VectorXd(2) << 0, 1).finished();
  CHECK(static_forward(h, s) == doctest::Approx(0.5));

  StaticHead h2;
  h2.w = Eigen::VectorXd::Constant(1, 2.0);
  h2.b = -1.0;
  CHECK(static_forward(h2, Eigen::VectorXd::Ones(1)) ==
        doctest::Approx(0.7310585786300049));
}

TEST_CASE("static_loss_and_grads hand cases and finite differences") {
  StaticHead h;
  h.w = Eigen::VectorXd::Zero(2);
  h.b = 0.0;
  Eigen::VectorXd s = (Eigen::VectorXd(2) << 0.3, -0.7).finished();
  StaticGrads g = static_loss_and_grads(h, s, 1);
  CHECK(g.loss == doctest::Approx(std::log(2.0)));

  // near-perfect prediction: loss and gradients go to zero
  StaticHead sure;
  sure.w = Eigen::VectorXd::Constant(1, 40.0);
  sure.b = 0.0;
  StaticGrads g2 = static_loss_and_grads(sure, Eigen::VectorXd::Ones(1), 1);
  CHECK(g2.loss < 1e-9);
  CHECK(g2.grad_w.norm() < 1e-9);
  CHECK(std::abs(g2.grad_b) < 1e-9);

  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    int R = 1 + static_cast<int>(rng.integer(4));
    StaticHead rh = oracle::random_static_head(rng, R, "t");
    Eigen::VectorXd rs(R);
    for (int r = 0; r < R; ++r) rs(r) = rng.normal();
    int y = rng.uniform() < 0.5 ? 0 : 1;
    StaticGrads rg = static_loss_and_grads(rh, rs, y);

    auto f_w = [&](const Eigen::MatrixXd& wv) {
      return oracle::slow_static_loss(wv.col(0), rh.b, rs, y);
    };
    CHECK(oracle::rel_error(rg.grad_w, oracle::fd_gradient(f_w, rh.w)) < 1e-5);

    auto f_b = [&](const Eigen::MatrixXd& bv) {
      return oracle::slow_static_loss(rh.w, bv(0, 0), rs, y);
    };
    Eigen::MatrixXd b0 = Eigen::MatrixXd::Constant(1, 1, rh.b);
    CHECK(std::abs(rg.grad_b - oracle::fd_gradient(f_b, b0)(0, 0)) /
              std::max(std::abs(rg.grad_b), 1e-8) <
          1e-5);

    auto f_s = [&](const Eigen::MatrixXd& sv) {
      return oracle::slow_static_loss(rh.w, rh.b, sv.col(0), y);
    };
    CHECK(oracle::rel_error(rg.grad_s, oracle::fd_gradient(f_s, rs)) < 1e-5);
  }
}

namespace {

DynamicHead zero_head(int R, int hidden) {
  DynamicHead h;
  h.task_name = "d";
  h.hidden = hidden;
  h.Wi = Eigen::MatrixXd::Zero(hidden, R + hidden);
  h.Wf = h.Wi;
  h.Wo = h.Wi;
  h.Wg = h.Wi;
  h.bi = Eigen::VectorXd::Zero(hidden);
  h.bf = h.bi;
  h.bo = h.bi;
  h.bg = h.bi;
  h.w_out = Eigen::VectorXd::Zero(hidden);
  h.b_out = 0.0;
  return h;
}

}  // namespace

TEST_CASE("dynamic_forward with all-zero parameters emits 0.5 everywhere") {
  DynamicHead h = zero_head(3, 2);
  Eigen::MatrixXd U = Eigen::MatrixXd::Random(5, 3);
  Eigen::VectorXd p = dynamic_forward(h, U);
  REQUIRE(p.size() == 5);
  for (Eigen::Index t = 0; t < 5; ++t) CHECK(p(t) == doctest::Approx(0.5));
}

TEST_CASE("dynamic_forward single step matches a hand-unrolled cell") {
  // hidden 1, R = 1: every quantity is a scalar
  DynamicHead h = zero_head(1, 1);
  h.Wi << 0.7, 0.0;
  h.Wf << -0.3, 0.0;
  h.Wo << 0.5, 0.0;
  h.Wg << 1.1, 0.0;
  h.bi << 0.2;
  h.bf << -0.1;
  h.bo << 0.05;
  h.bg << 0.3;
  h.w_out << 1.4;
  h.b_out = -0.2;
  const double x = 0.6;
  Eigen::MatrixXd U = Eigen::MatrixXd::Constant(1, 1, x);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double gi = sig(0.7 * x + 0.2);
  double gg = std::tanh(1.1 * x + 0.3);
  double c = gi * gg;  // zero initial cell, forget path drops out
  double go = sig(0.5 * x + 0.05);
  double hh = go * std::tanh(c);
  double expect = sig(1.4 * hh - 0.2);

  Eigen::VectorXd p = dynamic_forward(h, U);
  CHECK(p(0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dynamic_forward ignores the input when w_out is zero") {
  Rng rng(22);
  DynamicHead h = oracle::random_dynamic_head(rng, 2, 3, "d");
  h.w_out.setZero();
  h.b_out = 0.8;
  Eigen::MatrixXd U1 = Eigen::MatrixXd::Random(4, 2);
  Eigen::MatrixXd U2 = Eigen::MatrixXd::Random(4, 2);
  Eigen::VectorXd p1 = dynamic_forward(h, U1);
  Eigen::VectorXd p2 = dynamic_forward(h, U2);
  for (Eigen::Index t = 0; t < 4; ++t) {
    CHECK(p1(t) == doctest::Approx(1.0 / (1.0 + std::exp(-0.8))));
    CHECK(p1(t) == p2(t));
  }
}

TEST_CASE("dynamic loss hand cases") {
  DynamicHead h = zero_head(2, 2);
  Eigen::MatrixXd U = Eigen::MatrixXd::Random(3, 2);
  DynamicGrads g = dynamic_loss_and_grads(h, U, {1, 1, 1});
  CHECK(g.loss == doctest::Approx(std::log(2.0)));

  CHECK_THROWS_AS(dynamic_loss_and_grads(h, U, {1, 1}), DataError);

  // matches the scalar-loop forward oracle
  Rng rng(23);
  DynamicHead rh = oracle::random_dynamic_head(rng, 3, 2, "d");
  Eigen::MatrixXd RU = Eigen::MatrixXd::Random(4, 3);
  std::vector<int> y = {1, 0, 0, 1};
  DynamicGrads rg = dynamic_loss_and_grads(rh, RU, y);
  CHECK(rg.loss == doctest::Approx(oracle::slow_lstm_loss(rh, RU, y)).epsilon(1e-12));
}

TEST_CASE("dynamic head BPTT matches finite differences everywhere") {
  Rng rng(24);
  for (int trial = 0; trial < 15; ++trial) {
    int R = 1 + static_cast<int>(rng.integer(3));
    int hd = 1 + static_cast<int>(rng.integer(3));
    int T = 1 + static_cast<int>(rng.integer(4));
    DynamicHead h = oracle::random_dynamic_head(rng, R, hd, "d");
    Eigen::MatrixXd U(T, R);
    for (int i = 0; i < T; ++i)
      for (int r = 0; r < R; ++r) U(i, r) = rng.normal();
    std::vector<int> y;
    for (int i = 0; i < T; ++i) y.push_back(rng.uniform() < 0.5 ? 0 : 1);

    DynamicGrads g = dynamic_loss_and_grads(h, U, y);

    auto check_param = [&](Eigen::MatrixXd DynamicHead::* mat,
                           const Eigen::MatrixXd& analytic) {
      auto f = [&](const Eigen::MatrixXd& v) {
        DynamicHead hh = h;
        hh.*mat = v;
        return oracle::slow_lstm_loss(hh, U, y);
      };
      CHECK(oracle::rel_error(analytic, oracle::fd_gradient(f, h.*mat)) < 1e-4);
    };
    check_param(&DynamicHead::Wi, g.gWi);
    check_param(&DynamicHead::Wf, g.gWf);
    check_param(&DynamicHead::Wo, g.gWo);
    check_param(&DynamicHead::Wg, g.gWg);

    auto check_bias = [&](Eigen::VectorXd DynamicHead::* vec,
                          const Eigen::VectorXd& analytic) {
      auto f = [&](const Eigen::MatrixXd& v) {
        DynamicHead hh = h;
        hh.*vec = v.col(0);
        return oracle::slow_lstm_loss(hh, U, y);
      };
      CHECK(oracle::rel_error(analytic, oracle::fd_gradient(f, h.*vec)) < 1e-4);
    };
    check_bias(&DynamicHead::bi, g.gbi);
    check_bias(&DynamicHead::bf, g.gbf);
    check_bias(&DynamicHead::bo, g.gbo);
    check_bias(&DynamicHead::bg, g.gbg);
    check_bias(&DynamicHead::w_out, g.g_w_out);

    auto f_bout = [&](const Eigen::MatrixXd& v) {
      DynamicHead hh = h;
      hh.b_out = v(0, 0);
      return oracle::slow_lstm_loss(hh, U, y);
    };
    Eigen::MatrixXd b0 = Eigen::MatrixXd::Constant(1, 1, h.b_out);
    CHECK(std::abs(g.g_b_out - oracle::fd_gradient(f_bout, b0)(0, 0)) /
              std::max(std::abs(g.g_b_out), 1e-8) <
          1e-4);

    auto f_U = [&](const Eigen::MatrixXd& v) {
      return oracle::slow_lstm_loss(h, v, y);
    };
    CHECK(g.grad_U.rows() == U.rows());
    CHECK(g.grad_U.cols() == U.cols());
    CHECK(oracle::rel_error(g.grad_U, oracle::fd_gradient(f_U, U)) < 1e-4);
  }
}

TEST_CASE("pr_auc hand cases") {
  CHECK(pr_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(pr_auc({0.9, 0.1}, {0, 1}) == doctest::Approx(0.5));
  CHECK(pr_auc({0.3, 0.6, 0.5}, {1, 1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(pr_auc({0.5, 0.3}, {0, 0}), DataError);
}

TEST_CASE("pr_auc is invariant under strictly increasing transforms") {
  Rng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.integer(8));
    std::vector<double> scores;
    std::vector<int> labels;
    bool has_pos = false;
    for (int i = 0; i < n; ++i) {
      scores.push_back(rng.uniform(-2.0, 2.0));
      labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
      has_pos = has_pos || labels.back() == 1;
    }
    if (!has_pos) labels[0] = 1;
    std::vector<double> warped;
    for (double v : scores) warped.push_back(std::exp(2.0 * v) + 3.0);
    CHECK(pr_auc(scores, labels) ==
          doctest::Approx(pr_auc(warped, labels)).epsilon(1e-12));
  }
}

TEST_CASE("pr_auc matches the brute-force threshold oracle with ties") {
  Rng rng(26);
  for (int trial = 0; trial < 300; ++trial) {
    int n = 1 + static_cast<int>(rng.integer(6));
    std::vector<double> scores;
    std::vector<int> labels;
    bool has_pos = false;
    for (int i = 0; i < n; ++i) {
      // coarse grid forces frequent ties
      scores.push_back(0.1 * static_cast<double>(rng.integer(5)));
      labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
      has_pos = has_pos || labels.back() == 1;
    }
    if (!has_pos) labels[static_cast<std::size_t>(rng.integer(
                      static_cast<std::uint64_t>(n)))] = 1;
    CHECK(pr_auc(scores, labels) ==
          doctest::Approx(oracle::brute_force_average_precision(scores, labels))
              .epsilon(1e-12));
  }
}
