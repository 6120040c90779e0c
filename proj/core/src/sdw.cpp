#include "p2mt/sdw.hpp"

#include <algorithm>
#include <cmath>

#include "p2mt/errors.hpp"

namespace p2mt {

SdwState::SdwState(int num_tasks, double temperature, int window)
    : num_tasks_(num_tasks), temperature_(temperature), window_(window) {
  if (num_tasks < 1) throw ConfigError("scheduler needs at least one task");
  if (!(temperature > 0)) throw ConfigError("scheduler temperature must be positive");
  if (window < 1) throw ConfigError("scheduler window must be at least 1");
  weights_.assign(static_cast<std::size_t>(num_tasks), 1.0);
}

void SdwState::record_epoch(const std::vector<double>& losses) {
  if (static_cast<int>(losses.size()) != num_tasks_)
    throw DataError("scheduler: loss vector length does not match task count");
  history_.push_back(losses);
}

std::optional<double> SdwState::descent_rate(int task, int t) const {
  if (t - 2 < 1 || t - 1 > epochs_recorded()) return std::nullopt;
  double prev = history_[static_cast<std::size_t>(t - 2)][static_cast<std::size_t>(task)];
  double prev2 = history_[static_cast<std::size_t>(t - 3)][static_cast<std::size_t>(task)];
  if (prev2 == 0.0)
    throw DataError("scheduler: zero loss at epoch " + std::to_string(t - 2) +
                    ", descent rate undefined");
  return prev / prev2;
}

const std::vector<double>& SdwState::update_weights(int t) {
  const std::size_t N = static_cast<std::size_t>(num_tasks_);
  const int avail = std::min(window_, t - 2);
  if (avail < 1) {
    weights_.assign(N, 1.0);
    return weights_;
  }
  std::vector<double> a(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    double sum = 0.0;
    for (int j = 1; j <= avail; ++j) {
      auto rate = descent_rate(static_cast<int>(n), t - j + 1);
      if (!rate) {  // insufficient history; keep uniform weights
        weights_.assign(N, 1.0);
        return weights_;
      }
      sum += *rate / temperature_;
    }
    a[n] = sum / static_cast<double>(avail);
  }
  double a_max = *std::max_element(a.begin(), a.end());
  double z = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    a[n] = std::exp(a[n] - a_max);
    z += a[n];
  }
  for (std::size_t n = 0; n < N; ++n)
    weights_[n] = static_cast<double>(num_tasks_) * a[n] / z;
  return weights_;
}

}  // namespace p2mt
