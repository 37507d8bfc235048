#pragma once

namespace fbac {
inline constexpr const char* kVersion = "0.1.0";
}
