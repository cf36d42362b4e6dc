#pragma once

namespace microsim
{

inline constexpr const char* kVersion = "0.1.0";

}  // namespace microsim
