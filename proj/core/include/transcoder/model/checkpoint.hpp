#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/autodiff/tensor.hpp"
#include "transcoder/model/backbone.hpp"
#include "transcoder/model/config.hpp"
#include "transcoder/model/prefix.hpp"

namespace transcoder::model {

inline constexpr int kCheckpointFormatVersion = 1;

struct TensorRecord {
  std::string name;
  ad::Shape shape;
  std::vector<float> data;
};

/// On-disk form of a backbone snapshot or a prefix bank.
///
/// One JSON document:
///   {format_version, kind: "backbone"|"prefix", config: {...}, fingerprint,
///    seed, provenance, tensors: [{name, shape, dtype: "f32", data}], metadata?}
/// where `data` is base64 of little-endian binary32 values. serialize() is
/// canonical, so parse followed by serialize reproduces the input bytes.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string kind;
  ModelConfig config;
  std::uint64_t seed = 0;
  std::string provenance;
  std::vector<TensorRecord> tensors;
  nlohmann::json metadata;  // optional run information (fingerprints, seeds)

  /// Fingerprint of the config fields relevant to `kind`.
  [[nodiscard]] std::string fingerprint() const;

  [[nodiscard]] std::string serialize() const;
  static Checkpoint parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

inline constexpr const char* kKindBackbone = "backbone";
inline constexpr const char* kKindPrefix = "prefix";

template <typename T>
Checkpoint snapshot(const Backbone<T>& backbone);

/// Restores a backbone. With `expected`, the checkpoint must share its
/// backbone fingerprint (CompatibilityError otherwise) and the returned
/// backbone adopts `expected` (so run-level fields such as dropout follow it).
template <typename T>
Backbone<T> load_backbone(const Checkpoint& checkpoint, const ModelConfig* expected = nullptr);

template <typename T>
Checkpoint snapshot(const PrefixBank<T>& prefix);

/// Restores a prefix bank in whichever form it was saved. With `expected`,
/// the backbone layout and prefix length must match.
template <typename T>
PrefixBank<T> load_prefix(const Checkpoint& checkpoint, const ModelConfig* expected = nullptr);

/// Reads and writes whole files; used by every on-disk artifact.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace transcoder::model
