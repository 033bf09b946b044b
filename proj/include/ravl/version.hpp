#pragma once

#include <string_view>

namespace ravl {

inline constexpr std::string_view kLibraryVersion = "0.1.0";

// Bumped whenever a CSV header or the manifest layout changes.
inline constexpr int kSchemaVersion = 1;

}  // namespace ravl
