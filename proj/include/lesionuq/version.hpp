#pragma once

namespace lesionuq {

inline constexpr const char* kVersion = "0.1.0";

} // namespace lesionuq
