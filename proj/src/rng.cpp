#include "svq/rng.h"

#include <cmath>
#include <sstream>

#include "svq/check.h"

namespace svq {

float Rng::normal(float mean, float stddev) {
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * static_cast<float>(r * std::cos(2.0 * M_PI * u2));
}

int Rng::uniform_int(int n) {
  SVQ_CHECK(n > 0, "uniform_int: n must be positive, got ", n);
  // Rejection sampling to avoid modulo bias.
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

Rng Rng::fork() {
  uint64_t s = engine_();
  // splitmix64 step decorrelates the child from the raw draw.
  s += 0x9e3779b97f4a7c15ULL;
  s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
  s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
  s = s ^ (s >> 31);
  return Rng(s);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  SVQ_CHECK(!is.fail(), "Rng::set_state: malformed state string");
}

}  // namespace svq
