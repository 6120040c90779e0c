#include "p2mt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "matrix_random.hpp"
#include "p2mt/errors.hpp"
#include "p2mt/rng.hpp"
#include "p2mt/synth.hpp"

namespace p2mt {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::multi_task: return "multi_task";
    case TrainMode::single_task: return "single_task";
    case TrainMode::unsupervised: return "unsupervised";
  }
  return "unsupervised";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "multi_task") return TrainMode::multi_task;
  if (name == "single_task") return TrainMode::single_task;
  if (name == "unsupervised") return TrainMode::unsupervised;
  throw ConfigError("unknown mode: " + name);
}

void TrainConfig::validate() const {
  if (rank < 1) throw ConfigError("rank must be at least 1");
  if (epochs_max < 1) throw ConfigError("epochs_max must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  penalties.validate();
  if (tol < 0) throw ConfigError("tol must be nonnegative");
  if (tol_window < 1) throw ConfigError("tol_window must be at least 1");
  if (hidden_size < 1) throw ConfigError("hidden_size must be at least 1");
  if (project_iters < 0) throw ConfigError("project_iters must be nonnegative");
  if (mode == TrainMode::single_task && task.empty())
    throw ConfigError("single_task mode needs a task name");
  if (sdw.enabled && sdw.window < 1)
    throw ConfigError("sdw window must be at least 1");
  if (sdw.enabled && sdw.temperature < 0)
    throw ConfigError("sdw temperature must be positive (or 0 for 1/sqrt(N))");
}

namespace {

void emit_warning(const TrainConfig& cfg, const std::string& msg) {
  if (cfg.warn)
    cfg.warn(msg);
  else
    std::cerr << "warning: " << msg << '\n';
}

// RNG stream tags
constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kHeadStream = 2;
constexpr std::uint64_t kEpochStream = 0x100;
constexpr std::uint64_t kHeadEpochStream = 0x20000;
constexpr std::uint64_t kProjectStream = 0x40000;

}  // namespace

FactorModel init_model(const IrregularTensor& t, const TrainConfig& cfg) {
  if (cfg.rank < 1) throw ConfigError("rank must be at least 1");
  const int R = cfg.rank;
  int min_rows = t.rows(0);
  for (int k = 1; k < t.num_slices(); ++k)
    min_rows = std::min(min_rows, t.rows(k));
  if (R > min_rows)
    emit_warning(cfg, "rank " + std::to_string(R) +
                          " exceeds the smallest slice row count " +
                          std::to_string(min_rows) + "; proceeding");
  if (R > t.num_features())
    emit_warning(cfg, "rank " + std::to_string(R) +
                          " exceeds the feature count " +
                          std::to_string(t.num_features()) + "; proceeding");

  Rng rng = Rng(cfg.seed).derive(kModelStream);
  FactorModel m;
  m.rank = R;
  m.slice_ids = t.slice_ids;
  for (int k = 0; k < t.num_slices(); ++k)
    m.Q.push_back(orthonormal_matrix(rng, t.rows(k), R));
  m.H = Eigen::MatrixXd::Identity(R, R) + gaussian_matrix(rng, R, R, 0.01);
  for (int k = 0; k < t.num_slices(); ++k) {
    Eigen::VectorXd s(R);
    for (int r = 0; r < R; ++r) s(r) = rng.uniform(0.1, 1.0);
    m.s.push_back(s);
  }
  m.V = gaussian_matrix(rng, t.num_features(), R, 0.1);
  m.couple_U_to_QH();
  return m;
}

namespace {

// Tasks selected by the training mode, each checked to have both classes
// present among the given slices.
struct TaskSelection {
  std::vector<std::string> statics;
  std::vector<std::string> dynamics;
};

TaskSelection select_tasks(const IrregularTensor& t, const LabelTable& labels,
                           const TrainConfig& cfg) {
  TaskSelection sel;
  if (cfg.mode == TrainMode::unsupervised) return sel;
  if (cfg.mode == TrainMode::single_task) {
    if (labels.static_labels.count(cfg.task))
      sel.statics.push_back(cfg.task);
    else if (labels.dynamic_labels.count(cfg.task))
      sel.dynamics.push_back(cfg.task);
    else
      throw ConfigError("task not found in labels: " + cfg.task);
  } else {
    sel.statics = labels.static_task_names();
    sel.dynamics = labels.dynamic_task_names();
  }
  // both classes must be represented among the training slices
  for (const auto& name : sel.statics) {
    int pos = 0, neg = 0;
    for (const auto& [id, y] : labels.static_labels.at(name))
      if (t.index_of(id) >= 0) (y ? pos : neg)++;
    if (pos == 0 || neg == 0)
      throw DataError("task " + name +
                      " needs at least one positive and one negative label");
  }
  for (const auto& name : sel.dynamics) {
    int pos = 0, neg = 0;
    for (const auto& [id, ys] : labels.dynamic_labels.at(name))
      if (t.index_of(id) >= 0)
        for (int y : ys) (y ? pos : neg)++;
    if (pos == 0 || neg == 0)
      throw DataError("task " + name +
                      " needs at least one positive and one negative label");
  }
  return sel;
}

}  // namespace

TaskSet init_heads(const IrregularTensor& t, const LabelTable& labels,
                   const TrainConfig& cfg) {
  TaskSelection sel = select_tasks(t, labels, cfg);
  TaskSet heads;
  Rng rng = Rng(cfg.seed).derive(kHeadStream);
  for (const auto& name : sel.statics) {
    StaticHead h;
    h.task_name = name;
    h.w = Eigen::VectorXd::Zero(cfg.rank);
    h.b = 0.0;
    heads.statics.push_back(std::move(h));
    heads.labels.static_labels[name] = labels.static_labels.at(name);
  }
  for (const auto& name : sel.dynamics) {
    DynamicHead h;
    h.task_name = name;
    h.hidden = cfg.hidden_size;
    const int hd = cfg.hidden_size, R = cfg.rank;
    h.Wi = gaussian_matrix(rng, hd, R + hd, 0.1);
    h.Wf = gaussian_matrix(rng, hd, R + hd, 0.1);
    h.Wo = gaussian_matrix(rng, hd, R + hd, 0.1);
    h.Wg = gaussian_matrix(rng, hd, R + hd, 0.1);
    h.bi = Eigen::VectorXd::Zero(hd);
    h.bf = Eigen::VectorXd::Zero(hd);
    h.bo = Eigen::VectorXd::Zero(hd);
    h.bg = Eigen::VectorXd::Zero(hd);
    h.w_out = Eigen::VectorXd::Zero(hd);
    h.b_out = 0.0;
    heads.dynamics.push_back(std::move(h));
    heads.labels.dynamic_labels[name] = labels.dynamic_labels.at(name);
  }
  return heads;
}

TrainerState init_trainer(const IrregularTensor& t, const LabelTable& labels,
                          const TrainConfig& cfg) {
  cfg.validate();
  t.validate();
  if (t.observed_count() == 0)
    throw DataError("tensor has no observed entries");
  validate_labels(t, labels.restricted_to(t.slice_ids));

  TrainerState st;
  st.model = init_model(t, cfg);
  st.heads = init_heads(t, labels, cfg);
  st.task_names.push_back("tensor");
  for (const auto& h : st.heads.statics) st.task_names.push_back(h.task_name);
  for (const auto& h : st.heads.dynamics) st.task_names.push_back(h.task_name);

  const int N = 1 + st.heads.num_tasks();
  if (cfg.sdw.enabled) {
    double temp = cfg.sdw.temperature > 0
                      ? cfg.sdw.temperature
                      : 1.0 / std::sqrt(static_cast<double>(N));
    st.sdw = std::make_unique<SdwState>(N, temp, cfg.sdw.window);
    st.weights.tensor = 1.0;
    st.weights.statics.assign(st.heads.statics.size(), 1.0);
    st.weights.dynamics.assign(st.heads.dynamics.size(), 1.0);
  } else {
    st.weights = TaskWeights::from_penalties(
        cfg.penalties, static_cast<int>(st.heads.statics.size()),
        static_cast<int>(st.heads.dynamics.size()));
  }
  return st;
}

namespace {

struct DynamicParamGrads {
  Eigen::MatrixXd Wi, Wf, Wo, Wg;
  Eigen::VectorXd bi, bf, bo, bg, w_out;
  double b_out = 0.0;
  bool any = false;

  void ensure(const DynamicHead& h) {
    if (any) return;
    Wi = Eigen::MatrixXd::Zero(h.Wi.rows(), h.Wi.cols());
    Wf = Wi; Wo = Wi; Wg = Wi;
    bi = Eigen::VectorXd::Zero(h.bi.size());
    bf = bi; bo = bi; bg = bi;
    w_out = Eigen::VectorXd::Zero(h.w_out.size());
    b_out = 0.0;
    any = true;
  }

  void add(const DynamicGrads& g) {
    Wi += g.gWi; Wf += g.gWf; Wo += g.gWo; Wg += g.gWg;
    bi += g.gbi; bf += g.gbf; bo += g.gbo; bg += g.gbg;
    w_out += g.g_w_out; b_out += g.g_b_out;
  }
};

void check_finite(const Eigen::MatrixXd& m, const char* step, int epoch) {
  if (!m.allFinite())
    throw DivergenceError(step, epoch,
                          std::string("non-finite value in ") + step +
                              " update at epoch " + std::to_string(epoch));
}

const std::vector<int>* dynamic_labels_for(const TaskSet& tasks,
                                           const std::string& task,
                                           const std::string& slice_id) {
  auto ti = tasks.labels.dynamic_labels.find(task);
  if (ti == tasks.labels.dynamic_labels.end()) return nullptr;
  auto si = ti->second.find(slice_id);
  return si == ti->second.end() ? nullptr : &si->second;
}

const int* static_label_for(const TaskSet& tasks, const std::string& task,
                            const std::string& slice_id) {
  auto ti = tasks.labels.static_labels.find(task);
  if (ti == tasks.labels.static_labels.end()) return nullptr;
  auto si = ti->second.find(slice_id);
  return si == ti->second.end() ? nullptr : &si->second;
}

}  // namespace

void epoch_step(TrainerState& st, const IrregularTensor& t,
                const TrainConfig& cfg) {
  const int epoch = st.epoch + 1;
  const PenaltyConfig& pen = cfg.penalties;
  const double lambda = pen.step_size;
  FactorModel& m = st.model;
  TaskSet& heads = st.heads;
  TaskSet* tasks = heads.num_tasks() > 0 ? &heads : nullptr;
  const TaskWeights& w = st.weights;
  const int K = t.num_slices();
  const auto n_static = heads.statics.size();
  const auto n_dynamic = heads.dynamics.size();

  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = Rng(cfg.seed).derive(kEpochStream + static_cast<std::uint64_t>(epoch));
  shuffle_rng.shuffle(order);

  double tensor_sse = 0.0;
  std::vector<double> static_loss(n_static, 0.0), dynamic_loss(n_dynamic, 0.0);
  std::vector<std::int64_t> static_n(n_static, 0), dynamic_n(n_dynamic, 0);

  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::vector<int> batch(
        order.begin() + static_cast<std::ptrdiff_t>(start),
        order.begin() + static_cast<std::ptrdiff_t>(std::min(
                            start + static_cast<std::size_t>(cfg.batch_size),
                            order.size())));

    // (1) U updates, then the dynamic head parameter step
    std::vector<DynamicParamGrads> dyn_grads(n_dynamic);
    for (int k : batch) {
      const auto ku = static_cast<std::size_t>(k);
      tensor_sse += t.masks[ku]
                        .cwiseProduct(reconstruct_slice(m, k) - t.slices[ku])
                        .squaredNorm();
      for (std::size_t ti = 0; ti < n_dynamic; ++ti) {
        const auto& head = heads.dynamics[ti];
        const auto* y = dynamic_labels_for(heads, head.task_name,
                                           t.slice_ids[ku]);
        if (!y) continue;
        if (w.dynamics[ti] != 0.0) {
          DynamicGrads dg = dynamic_loss_and_grads(head, m.U[ku], *y);
          dyn_grads[ti].ensure(head);
          dyn_grads[ti].add(dg);
          dynamic_loss[ti] += dg.loss;
        } else {
          Eigen::VectorXd p = dynamic_forward(head, m.U[ku]);
          double l = 0.0;
          for (Eigen::Index i = 0; i < p.size(); ++i)
            l += binary_cross_entropy(p(i), (*y)[static_cast<std::size_t>(i)]);
          dynamic_loss[ti] += l / static_cast<double>(p.size());
        }
        dynamic_n[ti]++;
      }
      m.U[ku] -= lambda * grad_U(t, m, k, tasks, w, pen.varrho1);
      check_finite(m.U[ku], "U", epoch);
    }
    for (std::size_t ti = 0; ti < n_dynamic; ++ti) {
      if (!dyn_grads[ti].any || w.dynamics[ti] == 0.0) continue;
      auto& h = heads.dynamics[ti];
      const double step = lambda * w.dynamics[ti];
      h.Wi -= step * dyn_grads[ti].Wi;
      h.Wf -= step * dyn_grads[ti].Wf;
      h.Wo -= step * dyn_grads[ti].Wo;
      h.Wg -= step * dyn_grads[ti].Wg;
      h.bi -= step * dyn_grads[ti].bi;
      h.bf -= step * dyn_grads[ti].bf;
      h.bo -= step * dyn_grads[ti].bo;
      h.bg -= step * dyn_grads[ti].bg;
      h.w_out -= step * dyn_grads[ti].w_out;
      h.b_out -= step * dyn_grads[ti].b_out;
      check_finite(h.Wi, "heads", epoch);
      check_finite(h.w_out, "heads", epoch);
    }

    // (2) Q updates
    for (int k : batch) {
      const auto ku = static_cast<std::size_t>(k);
      m.Q[ku] -= lambda * grad_Q(m, k, pen.varrho1, pen.varrho2);
      check_finite(m.Q[ku], "Q", epoch);
    }

    // (3) H update over the batch
    m.H -= lambda * grad_H(m, batch);
    check_finite(m.H, "H", epoch);

    // (4) projected S updates, then the static head parameter step
    std::vector<Eigen::VectorXd> stat_w_grads(n_static);
    std::vector<double> stat_b_grads(n_static, 0.0);
    std::vector<bool> stat_any(n_static, false);
    for (int k : batch) {
      const auto ku = static_cast<std::size_t>(k);
      for (std::size_t ti = 0; ti < n_static; ++ti) {
        const auto& head = heads.statics[ti];
        const int* y = static_label_for(heads, head.task_name, t.slice_ids[ku]);
        if (!y) continue;
        if (w.statics[ti] != 0.0) {
          StaticGrads sg = static_loss_and_grads(head, m.s[ku], *y);
          if (!stat_any[ti]) {
            stat_w_grads[ti] = Eigen::VectorXd::Zero(head.w.size());
            stat_any[ti] = true;
          }
          stat_w_grads[ti] += sg.grad_w;
          stat_b_grads[ti] += sg.grad_b;
          static_loss[ti] += sg.loss;
        } else {
          static_loss[ti] +=
              binary_cross_entropy(static_forward(head, m.s[ku]), *y);
        }
        static_n[ti]++;
      }
      m.s[ku] = nonneg_project(m.s[ku] - lambda * grad_S(t, m, k, tasks, w));
      check_finite(m.s[ku], "S", epoch);
    }
    for (std::size_t ti = 0; ti < n_static; ++ti) {
      if (!stat_any[ti] || w.statics[ti] == 0.0) continue;
      auto& h = heads.statics[ti];
      const double step = lambda * w.statics[ti];
      h.w -= step * stat_w_grads[ti];
      h.b -= step * stat_b_grads[ti];
      check_finite(h.w, "heads", epoch);
    }

    // (5) proximal V update over the batch
    m.V = soft_threshold(m.V - lambda * grad_V(t, m, w.tensor, batch),
                         lambda * pen.c2);
    check_finite(m.V, "V", epoch);
  }

  // per-task epoch losses, tensor first
  std::vector<double> losses;
  losses.push_back(tensor_sse / static_cast<double>(t.observed_count()));
  for (std::size_t ti = 0; ti < n_static; ++ti)
    losses.push_back(static_n[ti] ? static_loss[ti] / static_cast<double>(static_n[ti])
                                  : 0.0);
  for (std::size_t ti = 0; ti < n_dynamic; ++ti)
    losses.push_back(dynamic_n[ti] ? dynamic_loss[ti] / static_cast<double>(dynamic_n[ti])
                                   : 0.0);

  double total = w.tensor * losses[0];
  for (std::size_t ti = 0; ti < n_static; ++ti)
    total += w.statics[ti] * losses[1 + ti];
  for (std::size_t ti = 0; ti < n_dynamic; ++ti)
    total += w.dynamics[ti] * losses[1 + n_static + ti];
  if (!std::isfinite(total))
    throw DivergenceError("loss", epoch,
                          "non-finite loss at epoch " + std::to_string(epoch));

  st.epoch = epoch;
  st.last_losses = losses;
  st.total_loss_history.push_back(total);

  if (st.sdw) {
    st.sdw->record_epoch(losses);
    try {
      const auto& wv = st.sdw->update_weights(epoch + 1);
      st.weights.tensor = wv[0];
      for (std::size_t ti = 0; ti < n_static; ++ti)
        st.weights.statics[ti] = wv[1 + ti];
      for (std::size_t ti = 0; ti < n_dynamic; ++ti)
        st.weights.dynamics[ti] = wv[1 + n_static + ti];
    } catch (const DataError&) {
      // degenerate loss history; keep the current weights
    }
  }
}

FitResult fit(const IrregularTensor& t, const LabelTable& labels,
              const TrainConfig& cfg, const CheckpointSink& sink) {
  TrainerState st = init_trainer(t, labels, cfg);

  FitResult out;
  FactorModel last_model = st.model;
  TaskSet last_heads = st.heads;
  int converged_at = 0;
  int epochs_run = 0;

  for (int e = 1; e <= cfg.epochs_max; ++e) {
    const TaskWeights weights_used = st.weights;
    auto t0 = std::chrono::steady_clock::now();
    try {
      epoch_step(st, t, cfg);
    } catch (const DivergenceError& de) {
      out.diverged = true;
      out.divergence_info = de.what();
      break;
    }
    double wall_ms =
        cfg.deterministic
            ? 0.0
            : std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
    epochs_run = e;

    double fit_now = cfg.compute_fit_per_epoch ? fit_score(t, st.model) : 0.0;
    std::vector<double> weight_list;
    weight_list.push_back(weights_used.tensor);
    weight_list.insert(weight_list.end(), weights_used.statics.begin(),
                       weights_used.statics.end());
    weight_list.insert(weight_list.end(), weights_used.dynamics.begin(),
                       weights_used.dynamics.end());
    for (std::size_t i = 0; i < st.task_names.size(); ++i)
      out.log.push_back(LogRow{e, st.task_names[i], st.last_losses[i],
                               weight_list[i], fit_now, wall_ms});

    last_model = st.model;
    last_heads = st.heads;
    if (sink && e % 25 == 0 && e != cfg.epochs_max) sink(e, st.model, st.heads);

    // plateau detection on the moving average of the weighted total loss
    const int w = cfg.tol_window;
    const auto& hist = st.total_loss_history;
    if (cfg.tol > 0 && e >= w + 1) {
      double ma_now = 0.0, ma_prev = 0.0;
      for (int i = 0; i < w; ++i) {
        ma_now += hist[static_cast<std::size_t>(e - 1 - i)];
        ma_prev += hist[static_cast<std::size_t>(e - 2 - i)];
      }
      ma_now /= w;
      ma_prev /= w;
      double rel = std::abs(ma_now - ma_prev) /
                   std::max(std::abs(ma_prev), 1e-300);
      if (rel < cfg.tol) {
        converged_at = e;
        break;
      }
    }
  }

  out.model = out.diverged ? last_model : st.model;
  out.heads = out.diverged ? last_heads : st.heads;
  out.model.couple_U_to_QH();
  out.convergence_epoch = converged_at > 0 ? converged_at : epochs_run;
  out.train_fit = fit_score(t, out.model);
  if (sink) sink(epochs_run, out.model, out.heads);
  return out;
}

TaskSet fit_heads_only(const IrregularTensor& t, const FactorModel& model,
                       const LabelTable& labels, const TrainConfig& cfg) {
  cfg.validate();
  TaskSet heads = init_heads(t, labels, cfg);
  const int K = t.num_slices();

  for (int e = 1; e <= cfg.epochs_max; ++e) {
    std::vector<int> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(cfg.seed).derive(kHeadEpochStream + static_cast<std::uint64_t>(e));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto stop = std::min(start + static_cast<std::size_t>(cfg.batch_size),
                                 order.size());
      for (auto& head : heads.statics) {
        Eigen::VectorXd gw = Eigen::VectorXd::Zero(head.w.size());
        double gb = 0.0;
        bool any = false;
        for (std::size_t i = start; i < stop; ++i) {
          const auto ku = static_cast<std::size_t>(order[i]);
          const int* y = static_label_for(heads, head.task_name, t.slice_ids[ku]);
          if (!y) continue;
          StaticGrads sg = static_loss_and_grads(head, model.s[ku], *y);
          gw += sg.grad_w;
          gb += sg.grad_b;
          any = true;
        }
        if (any) {
          head.w -= cfg.penalties.step_size * gw;
          head.b -= cfg.penalties.step_size * gb;
        }
      }
      for (auto& head : heads.dynamics) {
        DynamicParamGrads acc;
        for (std::size_t i = start; i < stop; ++i) {
          const auto ku = static_cast<std::size_t>(order[i]);
          const auto* y =
              dynamic_labels_for(heads, head.task_name, t.slice_ids[ku]);
          if (!y) continue;
          DynamicGrads dg = dynamic_loss_and_grads(head, model.U[ku], *y);
          acc.ensure(head);
          acc.add(dg);
        }
        if (acc.any) {
          const double step = cfg.penalties.step_size;
          head.Wi -= step * acc.Wi;
          head.Wf -= step * acc.Wf;
          head.Wo -= step * acc.Wo;
          head.Wg -= step * acc.Wg;
          head.bi -= step * acc.bi;
          head.bf -= step * acc.bf;
          head.bo -= step * acc.bo;
          head.bg -= step * acc.bg;
          head.w_out -= step * acc.w_out;
          head.b_out -= step * acc.b_out;
        }
      }
    }
  }
  return heads;
}

FactorModel project_slices(const FactorModel& trained,
                           const IrregularTensor& t, const TrainConfig& cfg) {
  FactorModel out;
  out.rank = trained.rank;
  out.H = trained.H;
  out.V = trained.V;
  out.slice_ids = t.slice_ids;
  const double lambda = cfg.penalties.step_size;
  const TaskWeights no_tasks;  // defaults; tensor weight replaced per slice

  for (int k = 0; k < t.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    IrregularTensor one;
    one.feature_names = t.feature_names;
    one.slice_ids = {t.slice_ids[ku]};
    one.slices = {t.slices[ku]};
    one.masks = {t.masks[ku]};

    FactorModel local;
    local.rank = trained.rank;
    local.H = trained.H;
    local.V = trained.V;
    local.slice_ids = one.slice_ids;
    Rng rng = Rng(cfg.seed).derive(kProjectStream + static_cast<std::uint64_t>(k));
    local.Q.push_back(orthonormal_matrix(rng, t.rows(k), trained.rank));
    local.s.push_back(Eigen::VectorXd::Ones(trained.rank));
    local.couple_U_to_QH();

    const std::int64_t omega = one.observed_count();
    if (omega > 0) {
      TaskWeights w = no_tasks;
      // normalize the reconstruction term per slice so the step size keeps
      // the same meaning regardless of slice size
      w.tensor = static_cast<double>(omega) / 2.0;
      for (int it = 0; it < cfg.project_iters; ++it) {
        local.U[0] -= lambda * grad_U(one, local, 0, nullptr, w, cfg.penalties.varrho1);
        local.Q[0] -= lambda * grad_Q(local, 0, cfg.penalties.varrho1,
                                      cfg.penalties.varrho2);
        local.s[0] = nonneg_project(local.s[0] -
                                    lambda * grad_S(one, local, 0, nullptr, w));
      }
    }
    out.Q.push_back(local.Q[0]);
    out.s.push_back(local.s[0]);
  }
  out.couple_U_to_QH();
  return out;
}

EvalReport evaluate(const FactorModel& trained, const TaskSet& heads,
                    const IrregularTensor& test_tensor,
                    const LabelTable& test_labels, const TrainConfig& cfg) {
  if (test_tensor.num_slices() == 0) throw ConfigError("empty test set");
  test_tensor.validate();
  LabelTable labels = test_labels.restricted_to(test_tensor.slice_ids);
  validate_labels(test_tensor, labels);

  FactorModel proj = project_slices(trained, test_tensor, cfg);

  EvalReport rep;
  rep.test_fit = fit_score(test_tensor, proj);
  for (const auto& head : heads.statics) {
    auto it = labels.static_labels.find(head.task_name);
    std::vector<double> scores;
    std::vector<int> ys;
    if (it != labels.static_labels.end())
      for (int k = 0; k < test_tensor.num_slices(); ++k) {
        auto li = it->second.find(test_tensor.slice_ids[static_cast<std::size_t>(k)]);
        if (li == it->second.end()) continue;
        scores.push_back(
            static_forward(head, proj.s[static_cast<std::size_t>(k)]));
        ys.push_back(li->second);
      }
    try {
      if (ys.empty()) throw DataError("no labels");
      rep.pr_auc[head.task_name] = pr_auc(scores, ys);
    } catch (const DataError&) {
      rep.pr_auc[head.task_name] = std::nullopt;  // undefined, run continues
    }
  }
  for (const auto& head : heads.dynamics) {
    auto it = labels.dynamic_labels.find(head.task_name);
    std::vector<double> scores;
    std::vector<int> ys;
    if (it != labels.dynamic_labels.end())
      for (int k = 0; k < test_tensor.num_slices(); ++k) {
        auto li = it->second.find(test_tensor.slice_ids[static_cast<std::size_t>(k)]);
        if (li == it->second.end()) continue;
        Eigen::VectorXd p =
            dynamic_forward(head, proj.U[static_cast<std::size_t>(k)]);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          scores.push_back(p(i));
          ys.push_back(li->second[static_cast<std::size_t>(i)]);
        }
      }
    try {
      if (ys.empty()) throw DataError("no labels");
      rep.pr_auc[head.task_name] = pr_auc(scores, ys);
    } catch (const DataError&) {
      rep.pr_auc[head.task_name] = std::nullopt;
    }
  }
  return rep;
}

namespace {

ScalingFit least_squares_line(const std::vector<ScalingPoint>& pts) {
  ScalingFit f;
  f.points = pts;
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : pts) {
    sx += p.size;
    sy += p.per_epoch_ms;
    sxx += static_cast<double>(p.size) * p.size;
    sxy += p.size * p.per_epoch_ms;
  }
  const double denom = n * sxx - sx * sx;
  f.slope = denom != 0 ? (n * sxy - sx * sy) / denom : 0.0;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (const auto& p : pts) {
    double pred = f.intercept + f.slope * p.size;
    ss_res += (p.per_epoch_ms - pred) * (p.per_epoch_ms - pred);
    ss_tot += (p.per_epoch_ms - mean_y) * (p.per_epoch_ms - mean_y);
  }
  f.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[xs.size() / 2];
}

double time_one_config(int K, int J, const TrainConfig& base, int epochs,
                       int repeats) {
  SynthSpec spec;
  spec.K = K;
  spec.J = J;
  spec.R_true = std::min(base.rank, std::min(5, J));
  spec.I_min = 5;
  spec.I_max = 15;
  spec.noise_sd = 0.05;
  spec.seed = base.seed;
  SynthData data = synth_generate(spec);

  TrainConfig cfg = base;
  cfg.mode = TrainMode::unsupervised;
  cfg.epochs_max = epochs;
  cfg.tol = 0.0;  // fixed-epoch runs
  cfg.sdw.enabled = false;
  cfg.compute_fit_per_epoch = false;

  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    (void)fit(data.tensor, LabelTable{}, cfg);
    times.push_back(std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count());
  }
  return median_of(std::move(times)) / epochs;
}

}  // namespace

ScalingReport scaling_probe(const TrainConfig& base,
                            const std::vector<int>& slice_ladder,
                            const std::vector<int>& feature_ladder,
                            int epochs, int repeats) {
  ScalingReport rep;
  std::vector<ScalingPoint> pts;
  for (int K : slice_ladder)
    pts.push_back({K, time_one_config(K, 20, base, epochs, repeats)});
  rep.vs_slices = least_squares_line(pts);
  pts.clear();
  for (int J : feature_ladder)
    pts.push_back({J, time_one_config(200, J, base, epochs, repeats)});
  rep.vs_features = least_squares_line(pts);
  return rep;
}

std::vector<ComparisonCell> run_comparison(const IrregularTensor& t,
                                           const LabelTable& labels,
                                           const TrainConfig& base,
                                           const std::vector<int>& ranks,
                                           const std::vector<std::uint64_t>& seeds,
                                           double train_fraction) {
  struct Key {
    std::string method;
    int rank;
    std::string metric;
    std::string task;
    bool operator<(const Key& o) const {
      return std::tie(method, rank, metric, task) <
             std::tie(o.method, o.rank, o.metric, o.task);
    }
  };
  struct Agg {
    double sum = 0.0;
    int n = 0;
    std::string error;
  };
  std::map<Key, Agg> agg;

  std::vector<std::string> all_tasks;
  for (const auto& name : labels.static_task_names()) all_tasks.push_back(name);
  for (const auto& name : labels.dynamic_task_names()) all_tasks.push_back(name);

  std::vector<std::string> methods;
  methods.push_back("unsupervised");
  for (const auto& task : all_tasks) methods.push_back("single_task:" + task);
  methods.push_back("multi_task");

  for (std::uint64_t seed : seeds) {
    SplitResult split = split_tensor(t, labels, train_fraction, seed);
    for (int rank : ranks) {
      for (const auto& method : methods) {
        TrainConfig cfg = base;
        cfg.rank = rank;
        cfg.seed = seed;
        std::vector<std::string> tasks_scored;
        try {
          FitResult res;
          TaskSet eval_heads;
          if (method == "unsupervised") {
            cfg.mode = TrainMode::unsupervised;
            res = fit(split.train_tensor, LabelTable{}, cfg);
            TrainConfig head_cfg = cfg;
            head_cfg.mode = TrainMode::multi_task;
            eval_heads = fit_heads_only(split.train_tensor, res.model,
                                        split.train_labels, head_cfg);
            tasks_scored = all_tasks;
          } else if (method == "multi_task") {
            cfg.mode = TrainMode::multi_task;
            res = fit(split.train_tensor, split.train_labels, cfg);
            eval_heads = res.heads;
            tasks_scored = all_tasks;
          } else {
            cfg.mode = TrainMode::single_task;
            cfg.task = method.substr(std::string("single_task:").size());
            res = fit(split.train_tensor, split.train_labels, cfg);
            eval_heads = res.heads;
            tasks_scored = {cfg.task};
          }
          EvalReport rep = evaluate(res.model, eval_heads, split.test_tensor,
                                    split.test_labels, cfg);
          auto& fit_cell = agg[Key{method, rank, "fit", ""}];
          fit_cell.sum += rep.test_fit;
          fit_cell.n += 1;
          for (const auto& task : tasks_scored) {
            auto it = rep.pr_auc.find(task);
            if (it == rep.pr_auc.end() || !it->second) continue;
            auto& cell = agg[Key{method, rank, "pr_auc", task}];
            cell.sum += *it->second;
            cell.n += 1;
          }
        } catch (const std::exception& e) {
          // leave the other cells intact
          agg[Key{method, rank, "fit", ""}].error = e.what();
        }
      }
    }
  }

  std::vector<ComparisonCell> cells;
  for (const auto& [key, a] : agg) {
    ComparisonCell c;
    c.method = key.method;
    c.rank = key.rank;
    c.metric = key.metric;
    c.task = key.task;
    c.defined = a.n > 0;
    c.value = a.n > 0 ? a.sum / a.n : 0.0;
    c.error = a.error;
    cells.push_back(std::move(c));
  }
  return cells;
}

}  // namespace p2mt
