// Copyright 2026 The sdepf Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>

namespace sdepf {

namespace detail {

// SplitMix64 finalizer; used to derive substream keys and seed the engine.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

/// Deterministic random stream with cheap key-derived substreams.
///
/// The generator is xoshiro256++ seeded through SplitMix64, so creating a
/// stream costs a handful of multiplies; filters derive one fresh stream per
/// (step, particle) pair. Substreams depend only on the parent key and the
/// caller-chosen indices, never on the parent's draw position, which keeps
/// per-particle draws identical no matter how work is split across threads.
/// Normal variates use an explicit Box-Muller transform so the draw sequence
/// does not depend on the standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(detail::mix64(seed)) { seed_state(key_); }

  /// Independent stream derived from this stream's key and (a, b).
  RngStream child(std::uint64_t a, std::uint64_t b = 0) const {
    const std::uint64_t k = detail::mix64(key_ ^ detail::mix64(a + 0x9e3779b9ULL));
    return RngStream(k, detail::mix64(k ^ detail::mix64(b)));
  }

  /// Next raw 64-bit value (xoshiro256++).
  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl64(s_[3], 45);
    return result;
  }

  /// Uniform draw in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal draw (Box-Muller, pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * M_PI * uniform();
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  RngStream(std::uint64_t key, std::uint64_t engine_seed) : key_(key) { seed_state(engine_seed); }

  void seed_state(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& word : s_) word = z = detail::mix64(z);
  }

  std::uint64_t key_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sdepf
