#pragma once

namespace palp {

inline constexpr const char* kEngineVersion = "palp-engine 1.0.0";

}  // namespace palp
