#pragma once

namespace qdqn {

inline constexpr const char* kVersion = "qdqn 1.0.0";

}  // namespace qdqn
