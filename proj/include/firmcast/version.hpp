#pragma once

namespace firmcast {

inline constexpr const char* kVersion = "0.1.0";

} // namespace firmcast
