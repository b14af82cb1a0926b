#pragma once

#include <cstdint>

namespace transcoder {

using TokenId = std::int32_t;

// Reserved vocabulary ids shared by the data pipeline and the model.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;

}  // namespace transcoder
