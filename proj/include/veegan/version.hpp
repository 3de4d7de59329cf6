#pragma once

namespace veegan {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace veegan
