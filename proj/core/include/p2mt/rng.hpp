#ifndef P2MT_RNG_HPP
#define P2MT_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace p2mt {

/// Seeded random source with distributions implemented in-house so that
/// streams are reproducible across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double sd);

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t integer(std::uint64_t bound);

  /// Fisher-Yates shuffle with a fixed visit order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent substream; depends only on the original seed and the tag,
  /// not on how much this stream has been consumed.
  Rng derive(std::uint64_t tag) const;

 private:
  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace p2mt

#endif
