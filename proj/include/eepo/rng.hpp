#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace eepo {

/// Stream domains keep training, evaluation and initialization draws apart.
enum class StreamDomain : std::uint64_t {
  kRollout = 1,
  kEvaluation = 2,
  kInit = 3,
  kSuite = 4,
  kTest = 5,
};

/// A seeded random stream. Child streams are derived from a run seed plus a
/// coordinate tuple (iteration, task slot, trajectory index, ...) so that the
/// draws of one trajectory never depend on how many others were sampled first.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static RngStream child(std::uint64_t seed, StreamDomain domain,
                         std::initializer_list<std::uint64_t> coords);

  /// Uniform double in [0, 1) built from the top 53 bits of one draw.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace eepo
