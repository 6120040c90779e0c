#ifndef P2MT_ERRORS_HPP
#define P2MT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace p2mt {

/// Bad configuration: invalid option values, malformed config files,
/// inconsistent mode/task selections. CLI exit status 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or degenerate data: malformed input files, shape mismatches,
/// undefined metrics, empty observation sets. CLI exit status 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training produced a non-finite value. Carries the step and epoch in the
/// message; the trainer keeps the last finite state. CLI exit status 4.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& step, int epoch, const std::string& msg)
      : std::runtime_error(msg), step(step), epoch(epoch) {}
  std::string step;
  int epoch;
};

}  // namespace p2mt

#endif
