#include "transcoder/train/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "transcoder/errors.hpp"

namespace transcoder::train {

std::vector<double> sampling_distribution(std::span<const std::size_t> sizes, double delta) {
  if (sizes.empty()) throw ConfigError("sampling_distribution needs at least one task");
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw ConfigError("smoothing factor delta must be positive, got " + std::to_string(delta));
  }
  std::vector<double> p(sizes.size());
  double total = 0.0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) throw ConfigError("task " + std::to_string(k) + " has an empty training set");
    p[k] = std::log(static_cast<double>(sizes[k])) + delta;
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::vector<std::size_t> apportion(std::span<const double> p, std::size_t budget) {
  const std::size_t n = p.size();
  if (n == 0) throw ConfigError("cannot apportion over zero tasks");
  if (budget < n) {
    throw ConfigError("batch budget " + std::to_string(budget) + " is smaller than the number of tasks (" +
                      std::to_string(n) + ")");
  }
  std::vector<std::size_t> counts(n);
  std::vector<double> remainder(n);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double quota = p[k] * static_cast<double>(budget);
    counts[k] = static_cast<std::size_t>(std::floor(quota));
    remainder[k] = quota - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < budget; i = (i + 1) % n) {
    ++counts[order[i]];
    ++assigned;
  }
  // Enforce the floor of one by taking from the largest shares.
  for (std::size_t k = 0; k < n; ++k) {
    while (counts[k] == 0) {
      const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      --counts[donor];
      ++counts[k];
    }
  }
  return counts;
}

SamplerState::SamplerState(std::vector<std::string> task_ids, std::vector<std::size_t> sizes, double delta,
                           std::uint64_t seed)
    : task_ids_(std::move(task_ids)),
      sizes_(std::move(sizes)),
      delta_(delta),
      probabilities_(sampling_distribution(sizes_, delta)),
      rng_(util::Rng::stream(seed, "task-sampler")) {
  if (task_ids_.size() != sizes_.size()) throw ConfigError("sampler: task id and size counts differ");
  double acc = 0.0;
  for (const auto p : probabilities_) cumulative_.push_back(acc += p);
  cumulative_.back() = 1.0;
}

std::size_t SamplerState::draw() {
  const double u = rng_.uniform();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                           static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
}

std::vector<EpochAllocation> plan_epoch(const SamplerState& sampler, std::size_t budget) {
  const auto counts = apportion(sampler.probabilities(), budget);
  std::vector<EpochAllocation> out;
  for (std::size_t k = 0; k < counts.size(); ++k) out.push_back({sampler.task_ids()[k], counts[k]});
  return out;
}

}  // namespace transcoder::train
