#pragma once

namespace sandlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sandlab
