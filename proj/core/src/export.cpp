#include "p2mt/export.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "p2mt/errors.hpp"

namespace p2mt {

std::vector<int> assign_subgroups(const FactorModel& m) {
  std::vector<int> groups;
  for (const auto& s : m.s) {
    int best = 0;
    for (int r = 1; r < static_cast<int>(s.size()); ++r)
      if (s(r) > s(best)) best = r;  // strict: ties keep the lowest index
    groups.push_back(best);
  }
  return groups;
}

namespace {

// model slice index for every tensor slice, matched by id
std::vector<int> model_index_for_tensor(const FactorModel& m,
                                        const IrregularTensor& t) {
  std::vector<int> idx;
  for (const auto& id : t.slice_ids) {
    int mi = -1;
    for (int k = 0; k < m.num_slices(); ++k)
      if (m.slice_ids[static_cast<std::size_t>(k)] == id) {
        mi = k;
        break;
      }
    if (mi < 0) throw DataError("checkpoint has no slice with id " + id);
    idx.push_back(mi);
  }
  return idx;
}

}  // namespace

std::vector<PhenotypeRow> phenotype_table(
    const FactorModel& m, const IrregularTensor& t, int top_n,
    const std::function<void(const std::string&)>& warn) {
  if (top_n < 1) throw ConfigError("top_n must be at least 1");
  const int J = static_cast<int>(m.V.rows());
  const int R = m.rank;
  if (t.num_features() != J)
    throw DataError("tensor feature count does not match the checkpoint V");
  if (top_n > J) {
    std::string msg = "top_n " + std::to_string(top_n) + " clipped to " +
                      std::to_string(J) + " features";
    if (warn)
      warn(msg);
    else
      std::cerr << "warning: " << msg << '\n';
    top_n = J;
  }

  std::vector<int> model_idx = model_index_for_tensor(m, t);
  std::vector<int> groups = assign_subgroups(m);

  // observed per-feature mean over each subgroup
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(R),
                                        std::vector<double>(static_cast<std::size_t>(J), 0.0));
  std::vector<std::vector<std::int64_t>> counts(
      static_cast<std::size_t>(R), std::vector<std::int64_t>(static_cast<std::size_t>(J), 0));
  for (int k = 0; k < t.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto g = static_cast<std::size_t>(
        groups[static_cast<std::size_t>(model_idx[ku])]);
    for (Eigen::Index i = 0; i < t.slices[ku].rows(); ++i)
      for (Eigen::Index j = 0; j < t.slices[ku].cols(); ++j)
        if (t.masks[ku](i, j) != 0.0) {
          sums[g][static_cast<std::size_t>(j)] += t.slices[ku](i, j);
          counts[g][static_cast<std::size_t>(j)] += 1;
        }
  }

  std::vector<PhenotypeRow> rows;
  for (int r = 0; r < R; ++r) {
    std::vector<int> order(static_cast<std::size_t>(J));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(m.V(a, r)) > std::abs(m.V(b, r));
    });
    for (int n = 0; n < top_n; ++n) {
      const int j = order[static_cast<std::size_t>(n)];
      PhenotypeRow row;
      row.phenotype = r;
      row.feature = t.feature_names[static_cast<std::size_t>(j)];
      row.weight = m.V(j, r);
      const auto ru = static_cast<std::size_t>(r);
      const auto ju = static_cast<std::size_t>(j);
      if (counts[ru][ju] > 0)
        row.subgroup_mean = sums[ru][ju] / static_cast<double>(counts[ru][ju]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<TrajectoryRow> trajectory_table(const FactorModel& m,
                                            const IrregularTensor& t,
                                            const std::string& feature,
                                            int length) {
  int j = -1;
  for (int f = 0; f < t.num_features(); ++f)
    if (t.feature_names[static_cast<std::size_t>(f)] == feature) {
      j = f;
      break;
    }
  if (j < 0) throw DataError("unknown feature: " + feature);
  if (length < 1) throw ConfigError("length must be at least 1");

  std::vector<int> model_idx = model_index_for_tensor(m, t);
  std::vector<int> groups = assign_subgroups(m);

  const int R = m.rank;
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(R),
                                        std::vector<double>(static_cast<std::size_t>(length), 0.0));
  std::vector<std::vector<std::int64_t>> counts(
      static_cast<std::size_t>(R),
      std::vector<std::int64_t>(static_cast<std::size_t>(length), 0));
  std::vector<int> group_sizes(static_cast<std::size_t>(R), 0);

  bool any = false;
  for (int k = 0; k < t.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (t.rows(k) != length) continue;
    any = true;
    const auto g = static_cast<std::size_t>(
        groups[static_cast<std::size_t>(model_idx[ku])]);
    group_sizes[g] += 1;
    for (int i = 0; i < length; ++i)
      if (t.masks[ku](i, j) != 0.0) {
        sums[g][static_cast<std::size_t>(i)] += t.slices[ku](i, j);
        counts[g][static_cast<std::size_t>(i)] += 1;
      }
  }
  if (!any)
    throw DataError("no slice has exactly " + std::to_string(length) +
                    " rows");

  std::vector<TrajectoryRow> rows;
  for (int r = 0; r < R; ++r) {
    const auto ru = static_cast<std::size_t>(r);
    if (group_sizes[ru] == 0) continue;
    for (int i = 0; i < length; ++i) {
      TrajectoryRow row;
      row.phenotype = r;
      row.t = i;
      row.group_size = group_sizes[ru];
      const auto iu = static_cast<std::size_t>(i);
      if (counts[ru][iu] > 0)
        row.mean_value = sums[ru][iu] / static_cast<double>(counts[ru][iu]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace p2mt
