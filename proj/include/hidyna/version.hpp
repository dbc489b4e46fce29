#pragma once

namespace hidyna {
inline constexpr const char* kVersion = "0.1.0";
}
