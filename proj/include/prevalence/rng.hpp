// Copyright 2026 The prevalence toolkit authors
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

#ifndef PREVALENCE_RNG_HPP
#define PREVALENCE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

// Deterministic randomness used throughout the toolkit. Everything here is
// fully specified (no implementation-defined std::* distributions) so that
// sample files and simulation outputs are byte-identical across runs and
// platforms given the same seeds.

namespace prevalence::rng {

/// Stafford's mix13 finalizer (the splitmix64 output function).
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// FNV-1a over arbitrary bytes; used to key per-item randomness off content ids.
inline constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Splitmix64 counter generator. Small, fast, and fully portable.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform in (0,1]: 53-bit mantissa shifted into (0,1], never exactly 0.
  double next_unit_open_low() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform in [0,1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Combine a seed with labeled parts (run index, sample size, scheme, trial)
/// into an independent stream seed.
template <typename... Parts>
inline std::uint64_t derive_seed(std::uint64_t seed, Parts... parts) {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  ((h = mix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

/// Keyed per-item uniform in (0,1]. Derived from (seed, content_id) only, so
/// reservoir keys do not depend on stream position or sharding.
inline double item_uniform(std::uint64_t seed, std::string_view content_id) {
  std::uint64_t k = mix64(fnv1a64(content_id) ^ mix64(seed));
  return static_cast<double>((k >> 11) + 1) * 0x1.0p-53;
}

/// Standard normal via Box--Muller (cosine branch).
inline double next_normal(SplitMix64& g) {
  double u1 = g.next_unit_open_low();
  double u2 = g.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Gamma(shape >= 1) by Marsaglia--Tsang squeeze.
inline double next_gamma(SplitMix64& g, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = next_normal(g);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = g.next_unit_open_low();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

/// Beta(a,b) as Gamma(a)/(Gamma(a)+Gamma(b)); requires a,b >= 1.
inline double next_beta(SplitMix64& g, double a, double b) {
  double x = next_gamma(g, a);
  double y = next_gamma(g, b);
  return x / (x + y);
}

}  // namespace prevalence::rng

#endif  // PREVALENCE_RNG_HPP
