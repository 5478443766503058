#pragma once

namespace flowcls {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace flowcls
