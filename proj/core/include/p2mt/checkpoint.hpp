#ifndef P2MT_CHECKPOINT_HPP
#define P2MT_CHECKPOINT_HPP

#include <string>

#include "p2mt/heads.hpp"
#include "p2mt/model.hpp"

namespace p2mt {

struct Checkpoint {
  FactorModel model;  // U coupled to Q H on load
  TaskSet heads;      // labels left empty
};

/// Single JSON object {"R", "H", "V", "slices": [{"id", "Q", "s"}, ...],
/// "heads": {...}} with matrices row-major. U is not stored; it is the
/// coupling Q_k H by definition at export.
std::string checkpoint_to_json(const FactorModel& model, const TaskSet& heads);
void save_checkpoint(const std::string& path, const FactorModel& model,
                     const TaskSet& heads);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace p2mt

#endif
