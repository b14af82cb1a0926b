#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "transcoder/util/rng.hpp"

namespace transcoder::train {

/// P(k) = (ln|D(k)| + delta) / sum_j (ln|D(j)| + delta).
/// Throws ConfigError for an empty list, a zero size or delta <= 0.
std::vector<double> sampling_distribution(std::span<const std::size_t> sizes, double delta);

/// Splits `budget` into integer shares proportional to `p`: every entry gets
/// at least one, the rest go by largest remainder (ties to the lower index).
/// Throws ConfigError when budget < p.size().
std::vector<std::size_t> apportion(std::span<const double> p, std::size_t budget);

class SamplerState {
 public:
  SamplerState(std::vector<std::string> task_ids, std::vector<std::size_t> sizes, double delta, std::uint64_t seed);

  [[nodiscard]] const std::vector<std::string>& task_ids() const noexcept { return task_ids_; }
  [[nodiscard]] const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  [[nodiscard]] const std::vector<double>& probabilities() const noexcept { return probabilities_; }
  [[nodiscard]] double delta() const noexcept { return delta_; }

  /// Index of a task drawn with probability P.
  std::size_t draw();

 private:
  std::vector<std::string> task_ids_;
  std::vector<std::size_t> sizes_;
  double delta_;
  std::vector<double> probabilities_;
  std::vector<double> cumulative_;
  util::Rng rng_;
};

struct EpochAllocation {
  std::string task_id;
  std::size_t n_batches = 0;
  friend bool operator==(const EpochAllocation&, const EpochAllocation&) = default;
};

/// Per-task batch counts for one epoch, in the sampler's task order.
std::vector<EpochAllocation> plan_epoch(const SamplerState& sampler, std::size_t budget);

}  // namespace transcoder::train
