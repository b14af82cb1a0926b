#include "transcoder/train/pretrain.hpp"

#include <chrono>

#include "transcoder/autodiff/adam.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/model/transformer.hpp"
#include "transcoder/util/hash.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::train {

PretrainResult pretrain_denoising(std::span<const std::vector<TokenId>> programs, const model::ModelConfig& config,
                                  const PretrainPlan& plan, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  plan.validate();
  config.validate();
  if (programs.empty()) throw DataError("pretraining needs at least one program");
  for (const auto& p : programs) {
    if (p.empty()) throw DataError("pretraining program is empty");
    if (p.size() + 2 > config.max_target_len) throw DataError("pretraining program longer than max_target_len - 2");
  }

  auto backbone = model::Backbone<float>::init(config, seed);
  ad::Adam<float> opt({plan.learning_rate});
  for (const auto& p : backbone.parameters()) opt.add_parameter(p.tensor);

  TrainReport report;
  report.stage = "pretrain";
  report.seeds["run"] = seed;
  report.config_fingerprint = util::to_hex(util::fnv1a(
      nlohmann::ordered_json{{"stage", "pretrain"}, {"model", config.to_json()}, {"plan", plan.to_json()},
                             {"programs", programs.size()}}
          .dump()));
  report.info["programs"] = programs.size();

  auto batch_rng = util::Rng::stream(seed, "pretrain-batches");
  auto mask_rng = util::Rng::stream(seed, "pretrain-mask");
  auto dropout_rng = util::Rng::stream(seed, "pretrain-dropout");
  for (std::size_t step = 1; step <= plan.steps; ++step) {
    std::vector<std::vector<TokenId>> sources, targets;
    for (std::size_t b = 0; b < plan.batch_size; ++b) {
      const auto& program = programs[batch_rng.below(programs.size())];
      auto noisy = program;
      bool masked = false;
      for (auto& t : noisy) {
        if (mask_rng.bernoulli(plan.mask_rate)) {
          t = kUnkId;
          masked = true;
        }
      }
      if (!masked) noisy[mask_rng.below(noisy.size())] = kUnkId;
      std::vector<TokenId> target{kBosId};
      target.insert(target.end(), program.begin(), program.end());
      target.push_back(kEosId);
      sources.push_back(std::move(noisy));
      targets.push_back(std::move(target));
    }
    const auto batch = model::make_batch(sources, targets);
    ad::Tape<float> tape;
    double value = 0.0;
    try {
      const auto loss = model::sequence_loss<float>(tape, backbone, nullptr, batch, {true, &dropout_rng});
      value = loss.item();
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw TrainingAborted("pretraining aborted at step " + std::to_string(step) + ": " + e.what(), report);
    }
    opt.step();
    report.steps.push_back({1, "denoise", step, value});
  }
  backbone.set_provenance(model::kProvenancePretrained);
  report.info["backbone_hash"] = backbone.content_hash();
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.validate();
  return {std::move(backbone), std::move(report)};
}

std::vector<double> smoothed_losses(const TrainReport& report, std::size_t window) {
  if (window == 0) throw ConfigError("smoothing window must be positive");
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < report.steps.size(); ++i) {
    sum += report.steps[i].loss;
    if (i >= window) sum -= report.steps[i - window].loss;
    if (i + 1 >= window) out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

}  // namespace transcoder::train
