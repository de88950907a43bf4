#pragma once

#include <cstdint>
#include <vector>

namespace copyhan {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// Reserved ids shared by every vocabulary.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kNumReserved = 4;

inline constexpr bool is_reserved(TokenId id) noexcept { return id >= 0 && id < kNumReserved; }

}  // namespace copyhan
