#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pnikit::rng {

/// Deterministic 64-bit generator (SplitMix64) with explicit distribution
/// mappings. Everything random in the pipeline flows from one root seed via
/// derive_seed, so any stage can be re-run in isolation and parallel workers
/// can draw independent, schedule-invariant streams.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_unit();

  /// Uniform integer in [0, bound). Unbiased (rejection sampling). bound > 0.
  std::uint64_t next_below(std::uint64_t bound);

  /// Standard normal via Box-Muller; pairs are cached, so the draw sequence
  /// is fixed by construction order alone.
  double next_gaussian();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable seed derivation: hash of (root, name). Equal inputs give equal
/// streams on every platform.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                          std::uint64_t index);

/// Fisher-Yates shuffle driven by the given generator.
template <typename T>
void shuffle(std::vector<T>& values, SplitMix64& gen) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(gen.next_below(i));
    std::swap(values[i - 1], values[j]);
  }
}

/// k distinct indices drawn uniformly from [0, pool_size). k <= pool_size.
std::vector<std::size_t> sample_without_replacement(std::size_t pool_size,
                                                    std::size_t k,
                                                    SplitMix64& gen);

}  // namespace pnikit::rng
