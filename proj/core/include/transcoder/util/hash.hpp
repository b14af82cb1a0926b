#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace transcoder::util {

/// Incremental 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) noexcept;
  void update(std::string_view text) noexcept;
  template <typename T>
  void update_values(std::span<const T> values) noexcept {
    update(std::as_bytes(values));
  }
  [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }
  [[nodiscard]] std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a(std::string_view text) noexcept;
std::string to_hex(std::uint64_t value);

}  // namespace transcoder::util
