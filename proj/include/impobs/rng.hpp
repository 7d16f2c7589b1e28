#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

namespace impobs {

/// Counter-based generator: the n-th draw of stream (seed, stream) is a pure
/// function of (seed, stream, n). Output is identical on every platform, which
/// the byte-stable trace files rely on.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t draws() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Inverse-CDF draw from a probability vector. Trailing rounding mass goes to
/// the last index with positive probability.
inline int sample_index(std::span<const double> pmf, CounterRng& rng) {
  if (pmf.empty()) throw std::invalid_argument("sample_index: empty distribution");
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    if (pmf[i] <= 0.0) continue;
    acc += pmf[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  if (last_positive < 0) throw std::invalid_argument("sample_index: no positive mass");
  return last_positive;
}

enum class StreamPurpose : std::uint64_t {
  transitions = 1,
  delays = 2,
  masks = 3,
  rewards = 4,
  policy = 5,
};

/// One independent generator per purpose, so that swapping the impairment
/// model leaves the transition stream untouched.
struct RngStreams {
  CounterRng transitions;
  CounterRng delays;
  CounterRng masks;
  CounterRng rewards;
  CounterRng policy;

  static RngStreams for_run(std::uint64_t seed, std::uint64_t run = 0) {
    auto make = [&](StreamPurpose p) {
      return CounterRng(seed, (run << 8) | static_cast<std::uint64_t>(p));
    };
    return {make(StreamPurpose::transitions), make(StreamPurpose::delays),
            make(StreamPurpose::masks), make(StreamPurpose::rewards),
            make(StreamPurpose::policy)};
  }
};

}  // namespace impobs
