#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace transcoder::util {

// RFC 4648 alphabet with '=' padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Little-endian IEEE-754 binary32 packing used by checkpoint tensors.
std::string encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::string_view text);

}  // namespace transcoder::util
