#ifndef P2MT_TENSOR_HPP
#define P2MT_TENSOR_HPP

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace p2mt {

/// A collection of K dense slices sharing the feature mode (J columns) while
/// the row count I_k varies per slice. Entries with mask 0 are unobserved:
/// they are stored as 0 and never enter any loss or gradient.
struct IrregularTensor {
  std::vector<Eigen::MatrixXd> slices;  // I_k x J
  std::vector<Eigen::MatrixXd> masks;   // I_k x J, entries in {0,1}
  std::vector<std::string> feature_names;
  std::vector<std::string> slice_ids;

  int num_slices() const { return static_cast<int>(slices.size()); }
  int num_features() const { return static_cast<int>(feature_names.size()); }
  int rows(int k) const { return static_cast<int>(slices[k].rows()); }

  /// Total number of observed entries across all slices. Cached.
  std::int64_t observed_count() const;

  int index_of(const std::string& slice_id) const;  // -1 if absent

  /// Enforce the structural invariants; throws DataError on violation.
  void validate() const;

 private:
  mutable std::int64_t observed_cache_ = -1;
};

/// Binary outcome labels. Static tasks carry one label per slice; dynamic
/// tasks carry one label per row of a slice.
struct LabelTable {
  std::map<std::string, std::map<std::string, int>> static_labels;
  std::map<std::string, std::map<std::string, std::vector<int>>> dynamic_labels;

  bool empty() const { return static_labels.empty() && dynamic_labels.empty(); }
  std::vector<std::string> static_task_names() const;
  std::vector<std::string> dynamic_task_names() const;

  /// Keep only labels whose slice id appears in `ids`.
  LabelTable restricted_to(const std::vector<std::string>& ids) const;
};

/// Check that every label refers to an existing slice and that dynamic label
/// sequences match the slice row counts exactly.
void validate_labels(const IrregularTensor& t, const LabelTable& labels);

// --- file I/O -------------------------------------------------------------
//
// Tensor file: JSON Lines. First line {"features":[...]}; every further line
// {"id": str, "rows": [[...],...], "mask": [[0|1,...],...]} with mask
// optional (defaults to all observed).
IrregularTensor load_tensor(const std::string& path);
void save_tensor(const IrregularTensor& t, const std::string& path);

// Labels file: CSV with header slice_id,task,kind,t,label.
LabelTable load_labels(const std::string& path);
void save_labels(const LabelTable& labels, const std::string& path);

// --- splitting ------------------------------------------------------------

struct SplitResult {
  IrregularTensor train_tensor, test_tensor;
  LabelTable train_labels, test_labels;
};

/// Seeded shuffle partition of the slices; train side takes
/// ceil(train_fraction * K) slices. Deterministic for a fixed seed.
SplitResult split_tensor(const IrregularTensor& t, const LabelTable& labels,
                         double train_fraction, std::uint64_t seed);

}  // namespace p2mt

#endif
