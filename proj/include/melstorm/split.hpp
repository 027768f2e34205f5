#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace melstorm {

struct SplitSpec {
  double train = 0.8;
  double val = 0.12;
  double test = 0.08;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Indices into the input, each list ascending.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Label-stratified split. Totals are round(train N), round(val N) and the
/// remainder; per-class counts take the floor of their proportional share
/// and the leftover seats go to the largest remainders (ties: lower label).
/// Membership inside a class follows a seeded shuffle. Requires N >= 10 and
/// rejects any empty split.
SplitIndices split_dataset(std::span<const int> labels, const SplitSpec& spec);

}  // namespace melstorm
