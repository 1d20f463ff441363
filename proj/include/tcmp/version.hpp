#pragma once

namespace tcmp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tcmp
