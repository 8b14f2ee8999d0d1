#pragma once

#include <cstdint>

namespace ksum {

inline constexpr const char* kVersion = "0.1.0";

using u64 = std::uint64_t;
using i64 = std::int64_t;
using u32 = std::uint32_t;
#if defined(__SIZEOF_INT128__)
using u128 = unsigned __int128;
using i128 = __int128;
#else
#error "ksum requires a compiler with __int128 support"
#endif

} // namespace ksum
