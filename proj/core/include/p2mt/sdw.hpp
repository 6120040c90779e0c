#ifndef P2MT_SDW_HPP
#define P2MT_SDW_HPP

#include <optional>
#include <vector>

namespace p2mt {

/// Smoothed dynamic task weighting. Tracks per-task epoch losses and emits
/// per-epoch weights proportional to a softmax over window-averaged loss
/// descent rates, scaled so the weights sum to the task count. Task 0 is the
/// tensor reconstruction loss; the remaining tasks are the prediction heads.
class SdwState {
 public:
  /// temperature > 0 controls how uniform the weights stay; window >= 1 is
  /// the number of past descent rates averaged per task.
  SdwState(int num_tasks, double temperature, int window);

  int num_tasks() const { return num_tasks_; }
  double temperature() const { return temperature_; }
  int window() const { return window_; }

  /// Record the epoch-mean loss of every task for epoch t = epochs_recorded()+1.
  void record_epoch(const std::vector<double>& losses);
  int epochs_recorded() const { return static_cast<int>(history_.size()); }

  /// Loss ratio  Loss_n(t-1) / Loss_n(t-2).  Returns nullopt while fewer than
  /// two epochs are recorded; throws DataError when the denominator is zero.
  std::optional<double> descent_rate(int task, int t) const;

  /// Weights for epoch t: N * softmax over tasks of the mean of the last
  /// min(window, t-2) descent rates divided by the temperature. All ones for
  /// t <= 2 or whenever the history is insufficient. Stores and returns the
  /// result.
  const std::vector<double>& update_weights(int t);

  const std::vector<double>& weights() const { return weights_; }

 private:
  int num_tasks_;
  double temperature_;
  int window_;
  std::vector<std::vector<double>> history_;  // history_[epoch-1][task]
  std::vector<double> weights_;
};

}  // namespace p2mt

#endif
