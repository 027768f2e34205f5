#include "melstorm/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "melstorm/error.hpp"
#include "melstorm/rng.hpp"

namespace melstorm {

std::vector<double> default_eps_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 20; ++k) grid.push_back(0.05 * k);
  return grid;
}

void SweepSpec::validate() const {
  attack.validate();
  if (sample_cap == 0) throw Error("sweep: sample_cap must be at least 1");
  if (attack.kind == AttackKind::cw) return;
  if (eps_grid.empty()) throw Error("sweep: eps grid is empty");
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] >= 0.0)) throw Error("sweep: eps grid values must be >= 0");
    if (i > 0 && !(eps_grid[i] > eps_grid[i - 1])) throw Error("sweep: eps grid must be strictly increasing");
  }
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

SweepRow summarize(double eps, const std::vector<AdversarialExample>& examples) {
  SweepRow row;
  row.eps = eps;
  row.n_samples = examples.size();
  std::size_t correct = 0;
  double linf = 0.0, l2 = 0.0, l2_success = 0.0;
  for (const auto& ex : examples) {
    correct += ex.adv_pred == ex.label;
    if (ex.success) {
      ++row.n_success;
      l2_success += ex.l2;
    }
    linf += ex.linf;
    l2 += ex.l2;
    row.max_linf = std::max(row.max_linf, ex.linf);
  }
  const double n = static_cast<double>(examples.size());
  row.accuracy = static_cast<double>(correct) / n;
  row.success_rate = static_cast<double>(row.n_success) / n;
  row.mean_linf = linf / n;
  row.mean_l2 = l2 / n;
  row.mean_l2_success =
      row.n_success ? l2_success / static_cast<double>(row.n_success) : std::numeric_limits<double>::quiet_NaN();
  return row;
}

SweepReport run_sweep(const Classifier& model, const Dataset& test, const SweepSpec& spec, std::size_t jobs,
                      const std::string& model_fingerprint) {
  spec.validate();
  if (test.empty()) throw Error("sweep: test set is empty");

  SweepReport report;
  report.attack = to_string(spec.attack.kind);
  report.seed = spec.seed;
  report.model_fingerprint = model_fingerprint;

  std::vector<std::size_t> picked(test.size());
  std::iota(picked.begin(), picked.end(), 0);
  if (spec.sample_cap < picked.size()) {
    Rng rng(spec.seed);
    rng.shuffle(picked);
    picked.resize(spec.sample_cap);
    std::sort(picked.begin(), picked.end());
  }
  report.sample_indices = picked;

  const std::vector<double> grid = spec.attack.kind == AttackKind::cw ? std::vector<double>{0.0} : spec.eps_grid;
  const std::size_t m = picked.size();
  std::vector<AdversarialExample> results(grid.size() * m);
  parallel_for(results.size(), jobs, [&](std::size_t task) {
    AttackConfig cfg = spec.attack;
    cfg.eps = grid[task / m];
    const std::size_t item = picked[task % m];
    auto ex = run_attack(model, feature_tensor(test.features[item]), test.labels[item], cfg);
    ex.original = Tensor();  // keep memory flat across large sweeps
    ex.adversarial = Tensor();
    results[task] = std::move(ex);
  });

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const std::vector<AdversarialExample> slice(results.begin() + static_cast<std::ptrdiff_t>(g * m),
                                                results.begin() + static_cast<std::ptrdiff_t>((g + 1) * m));
    report.rows.push_back(summarize(grid[g], slice));
  }
  return report;
}

}  // namespace melstorm
