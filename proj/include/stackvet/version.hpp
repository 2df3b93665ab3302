#pragma once

namespace stackvet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stackvet
