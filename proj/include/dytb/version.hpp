#pragma once

namespace dytb {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dytb
