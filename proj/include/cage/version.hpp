#pragma once

namespace cage {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kToolTag = "cage/0.1.0";

}  // namespace cage
