#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "melstorm/attack.hpp"
#include "melstorm/train.hpp"

namespace melstorm {

/// {0.05 k : k = 1..20}.
std::vector<double> default_eps_grid();

struct SweepSpec {
  AttackConfig attack;  // attack.eps is replaced by each grid value
  std::vector<double> eps_grid = default_eps_grid();
  std::size_t sample_cap = 200;
  std::uint64_t seed = 0;

  /// Grid must be strictly increasing and non-negative. CW ignores the grid.
  void validate() const;
};

struct SweepRow {
  double eps = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_success = 0;
  double accuracy = 0.0;
  double success_rate = 0.0;
  double mean_linf = 0.0;
  double max_linf = 0.0;
  double mean_l2 = 0.0;
  double mean_l2_success = 0.0;  // NaN when nothing succeeded
};

struct SweepReport {
  std::string attack;
  std::uint64_t seed = 0;
  std::string model_fingerprint;
  std::vector<std::size_t> sample_indices;
  std::vector<SweepRow> rows;
};

/// Runs `body(i)` for i in [0, n) on up to `jobs` threads (0 = hardware
/// concurrency). Exceptions are rethrown on the caller.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

/// Attacks min(sample_cap, N) seeded test samples at every grid value (a
/// single row with eps 0 for CW). Rows are reduced in (eps, sample) order,
/// so the report does not depend on `jobs`.
SweepReport run_sweep(const Classifier& model, const Dataset& test, const SweepSpec& spec, std::size_t jobs = 0,
                      const std::string& model_fingerprint = {});

/// Aggregates per-sample outcomes into one row.
SweepRow summarize(double eps, const std::vector<AdversarialExample>& examples);

}  // namespace melstorm
