#pragma once

namespace trapspec {
inline constexpr const char* version = "0.1.0";
}
