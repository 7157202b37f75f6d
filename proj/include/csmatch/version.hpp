#pragma once

namespace csmatch {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace csmatch
