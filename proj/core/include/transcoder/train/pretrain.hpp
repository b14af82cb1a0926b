#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "transcoder/model/backbone.hpp"
#include "transcoder/model/tokens.hpp"
#include "transcoder/train/plans.hpp"
#include "transcoder/train/report.hpp"

namespace transcoder::train {

struct PretrainResult {
  model::Backbone<float> backbone;
  TrainReport report;
};

/// Denoising pass: each program has a random `mask_rate` share of its tokens
/// (at least one) replaced by UNK and the model learns to reconstruct it.
/// The result carries provenance "base-pretrained".
PretrainResult pretrain_denoising(std::span<const std::vector<TokenId>> programs, const model::ModelConfig& config,
                                  const PretrainPlan& plan, std::uint64_t seed);

/// Moving average of the loss over `window` steps.
std::vector<double> smoothed_losses(const TrainReport& report, std::size_t window);

}  // namespace transcoder::train
