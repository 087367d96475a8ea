#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace svq {

// Deterministic random source. All distributions are derived from the raw
// mt19937_64 stream by hand so that identical seeds give identical values
// on every build, independent of the standard library's distribution
// implementations. State round-trips through a string for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  float uniform(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // Box-Muller; the second value of each pair is discarded so the
  // generator carries no hidden distribution state.
  float normal(float mean = 0.0f, float stddev = 1.0f);

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)],
                v[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }

  // Independent stream derived from this one; advancing the child does not
  // advance the parent.
  Rng fork();

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace svq
