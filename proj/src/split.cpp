#include "melstorm/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "melstorm/error.hpp"
#include "melstorm/rng.hpp"

namespace melstorm {

void SplitSpec::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw Error("split: fractions must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw Error("split: fractions must sum to 1");
}

namespace {

// Apportions `total` seats over classes with quotas share * capacity[c],
// never exceeding capacity[c].
std::vector<std::size_t> apportion(const std::vector<double>& quota, const std::vector<std::size_t>& capacity,
                                   std::size_t total) {
  const std::size_t k = quota.size();
  std::vector<std::size_t> seats(k);
  std::size_t given = 0;
  for (std::size_t c = 0; c < k; ++c) {
    seats[c] = std::min(capacity[c], static_cast<std::size_t>(std::floor(quota[c])));
    given += seats[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quota[a] - std::floor(quota[a]) > quota[b] - std::floor(quota[b]);
  });
  while (given < total) {
    bool progressed = false;
    for (const std::size_t c : order) {
      if (given == total) break;
      if (seats[c] < capacity[c]) {
        ++seats[c];
        ++given;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  while (given > total) {
    for (auto it = order.rbegin(); it != order.rend() && given > total; ++it) {
      if (seats[*it] > 0) {
        --seats[*it];
        --given;
      }
    }
  }
  return seats;
}

}  // namespace

SplitIndices split_dataset(std::span<const int> labels, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = labels.size();
  if (n < 10) throw Error("split: need at least 10 items, got " + std::to_string(n));

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n)));
  if (n_train + n_val >= n) throw Error("split: test split would be empty");

  std::vector<std::size_t> size, remaining;
  std::vector<double> q_train, q_val;
  for (const auto& [label, members] : by_class) {
    size.push_back(members.size());
    q_train.push_back(spec.train * static_cast<double>(members.size()));
    q_val.push_back(spec.val * static_cast<double>(members.size()));
  }
  const auto train_seats = apportion(q_train, size, n_train);
  for (std::size_t c = 0; c < size.size(); ++c) remaining.push_back(size[c] - train_seats[c]);
  const auto val_seats = apportion(q_val, remaining, n_val);

  SplitIndices out;
  std::size_t c = 0;
  for (const auto& [label, members] : by_class) {
    std::vector<std::size_t> shuffled = members;
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(label), 0));
    rng.shuffle(shuffled);
    const std::size_t a = train_seats[c], b = a + val_seats[c];
    out.train.insert(out.train.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(a));
    out.val.insert(out.val.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(a),
                   shuffled.begin() + static_cast<std::ptrdiff_t>(b));
    out.test.insert(out.test.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(b), shuffled.end());
    ++c;
  }
  for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());
  if (out.train.empty() || out.val.empty() || out.test.empty()) {
    throw Error("split: an empty split (train " + std::to_string(out.train.size()) + ", val " +
                std::to_string(out.val.size()) + ", test " + std::to_string(out.test.size()) + ")");
  }
  return out;
}

}  // namespace melstorm
