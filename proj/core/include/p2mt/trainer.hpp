#ifndef P2MT_TRAINER_HPP
#define P2MT_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "p2mt/heads.hpp"
#include "p2mt/model.hpp"
#include "p2mt/sdw.hpp"
#include "p2mt/tensor.hpp"

namespace p2mt {

enum class TrainMode { multi_task, single_task, unsupervised };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct SdwOptions {
  bool enabled = true;
  double temperature = 0.0;  // <= 0 selects 1/sqrt(N)
  int window = 5;
};

struct TrainConfig {
  int rank = 5;
  int epochs_max = 200;
  int batch_size = 1;
  PenaltyConfig penalties;
  SdwOptions sdw;
  double tol = 1e-4;    // relative change of the windowed mean total loss
  int tol_window = 10;  // epochs in the moving average
  std::uint64_t seed = 0;
  bool deterministic = false;
  TrainMode mode = TrainMode::multi_task;
  std::string task;  // selected task for single_task mode
  int hidden_size = 16;
  bool compute_fit_per_epoch = true;
  int project_iters = 300;  // test-time per-slice refits
  std::function<void(const std::string&)> warn;  // defaults to stderr

  void validate() const;
};

/// One training-log record; rows are emitted per (epoch, task) with the
/// tensor reconstruction listed as task "tensor".
struct LogRow {
  int epoch = 0;
  std::string task;
  double loss = 0.0;
  double weight = 0.0;
  double fit = 0.0;
  double wall_ms = 0.0;
};

struct FitResult {
  FactorModel model;  // U coupled to Q H
  TaskSet heads;
  std::vector<LogRow> log;
  int convergence_epoch = 0;  // epoch the tolerance was met, else epochs run
  double train_fit = 0.0;
  bool diverged = false;
  std::string divergence_info;
};

using CheckpointSink =
    std::function<void(int epoch, const FactorModel&, const TaskSet&)>;

/// Seeded factor initialization: orthonormal Q_k, H near identity, s_k
/// uniform positive, V Gaussian, U_k = Q_k H.
FactorModel init_model(const IrregularTensor& t, const TrainConfig& cfg);

/// Heads for the tasks selected by cfg.mode, bound to their labels. Static
/// heads start at zero; LSTM gate matrices start Gaussian.
TaskSet init_heads(const IrregularTensor& t, const LabelTable& labels,
                   const TrainConfig& cfg);

/// Mutable state threaded through epoch_step.
struct TrainerState {
  FactorModel model;
  TaskSet heads;
  std::unique_ptr<SdwState> sdw;
  TaskWeights weights;
  int epoch = 0;  // epochs completed
  std::vector<std::string> task_names;       // scheduler order, tensor first
  std::vector<double> last_losses;           // per task, last epoch
  std::vector<double> total_loss_history;    // weighted total per epoch
};

TrainerState init_trainer(const IrregularTensor& t, const LabelTable& labels,
                          const TrainConfig& cfg);

/// One full pass over seeded-shuffled mini-batches of slices, applying the
/// U, Q, H, S, V updates in order with the head parameter steps interleaved,
/// then recording per-task epoch losses and refreshing the scheduler
/// weights. Throws DivergenceError on a non-finite value.
void epoch_step(TrainerState& st, const IrregularTensor& t,
                const TrainConfig& cfg);

/// Run epoch_step until the windowed total loss plateaus or epochs_max is
/// reached; returns the exported model (U_k = Q_k H), trained heads, and the
/// per-epoch log. On divergence the last finite state is returned with
/// `diverged` set.
FitResult fit(const IrregularTensor& t, const LabelTable& labels,
              const TrainConfig& cfg, const CheckpointSink& sink = {});

/// Train only the head parameters against frozen factors (the post-hoc
/// baseline for unsupervised runs).
TaskSet fit_heads_only(const IrregularTensor& t, const FactorModel& model,
                       const LabelTable& labels, const TrainConfig& cfg);

/// Fit per-slice factors (Q_k, s_k, U_k) for unseen slices with V and H
/// frozen; used for test-time inference.
FactorModel project_slices(const FactorModel& trained,
                           const IrregularTensor& t, const TrainConfig& cfg);

struct EvalReport {
  double test_fit = 0.0;
  // nullopt when a task has no positive test label (metric undefined)
  std::map<std::string, std::optional<double>> pr_auc;
};

/// Project the test slices through the frozen model and score every task
/// present in `heads` against the test labels.
EvalReport evaluate(const FactorModel& trained, const TaskSet& heads,
                    const IrregularTensor& test_tensor,
                    const LabelTable& test_labels, const TrainConfig& cfg);

// --- scaling probe ----------------------------------------------------------

struct ScalingPoint {
  int size = 0;
  double per_epoch_ms = 0.0;
};

struct ScalingFit {
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct ScalingReport {
  ScalingFit vs_slices;
  ScalingFit vs_features;
};

/// Time fixed-epoch unsupervised runs along a slice-count ladder and a
/// feature-count ladder; reports per-epoch wall time and the least-squares
/// line of time against size.
ScalingReport scaling_probe(const TrainConfig& base,
                            const std::vector<int>& slice_ladder,
                            const std::vector<int>& feature_ladder,
                            int epochs = 5, int repeats = 3);

// --- method comparison --------------------------------------------------

struct ComparisonCell {
  std::string method;  // unsupervised | single_task:<name> | multi_task
  int rank = 0;
  std::string metric;  // fit | pr_auc
  std::string task;    // empty for fit
  double value = 0.0;  // mean over seeds
  bool defined = true;
  std::string error;   // per-cell failure, other cells stay intact
};

/// Run unsupervised (with post-hoc heads), one single_task fit per task, and
/// multi_task on the same split for every (rank, seed), and average metrics
/// over seeds.
std::vector<ComparisonCell> run_comparison(const IrregularTensor& t,
                                           const LabelTable& labels,
                                           const TrainConfig& base,
                                           const std::vector<int>& ranks,
                                           const std::vector<std::uint64_t>& seeds,
                                           double train_fraction);

}  // namespace p2mt

#endif
