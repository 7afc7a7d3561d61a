#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The Unirex Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace unirex {

/// Seeded generator with platform-independent helper distributions.
///
/// The std:: distributions are implementation-defined, so draws made through
/// them differ across standard libraries; these helpers only depend on the
/// raw mt19937_64 stream, which is fully specified.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : engine_(seed)
  {}

  std::uint64_t next()
  {
    return engine_();
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound)
  {
    std::uint64_t const limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t       x     = engine_();
    while (x >= limit)
    {
      x = engine_();
    }
    return x % bound;
  }

  /// Uniform double in [0, 1).
  double uniform()
  {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal(double mean = 0.0, double stddev = 1.0)
  {
    // Box-Muller; discards the second variate to keep the stream simple.
    double u1 = uniform();
    while (u1 <= 0.0)
    {
      u1 = uniform();
    }
    double const u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T> &v)
  {
    for (std::size_t i = v.size(); i > 1; --i)
    {
      std::size_t const j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// `count` distinct values of [0, n), in sampled order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count)
  {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i)
    {
      pool[i] = i;
    }
    for (std::size_t i = 0; i < count; ++i)
    {
      std::size_t const j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
  }

private:
  std::mt19937_64 engine_;
};

/// Mixes a seed with a string key (FNV-1a followed by splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key)
{
  std::uint64_t h = 1469598103934665603ull;
  for (char c : key)
  {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ull;
  z               = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z               = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace unirex
