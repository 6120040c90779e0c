#ifndef P2MT_EXPORT_HPP
#define P2MT_EXPORT_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "p2mt/model.hpp"
#include "p2mt/tensor.hpp"

namespace p2mt {

/// Slice index -> phenotype with the largest s_k entry, ties broken by the
/// lowest phenotype index.
std::vector<int> assign_subgroups(const FactorModel& m);

struct PhenotypeRow {
  int phenotype = 0;          // 0-based column of V
  std::string feature;
  double weight = 0.0;        // signed V entry
  std::optional<double> subgroup_mean;  // absent when the subgroup is empty
};

/// For each phenotype r, the top_n features by |V[:, r]| together with the
/// mean observed value of that feature over the slices whose s_k is largest
/// in phenotype r. Slices are matched to the model by slice id.
std::vector<PhenotypeRow> phenotype_table(
    const FactorModel& m, const IrregularTensor& t, int top_n,
    const std::function<void(const std::string&)>& warn = {});

struct TrajectoryRow {
  int phenotype = 0;
  int t = 0;
  std::optional<double> mean_value;  // absent when nothing observed at t
  int group_size = 0;
};

/// Group the slices with exactly `length` rows by phenotype assignment and
/// emit the per-timestep mean observed value of one feature per group.
std::vector<TrajectoryRow> trajectory_table(const FactorModel& m,
                                            const IrregularTensor& t,
                                            const std::string& feature,
                                            int length);

}  // namespace p2mt

#endif
