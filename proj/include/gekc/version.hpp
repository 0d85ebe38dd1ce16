#pragma once

namespace gekc {

inline constexpr const char* kVersion = "gekc-0.1.0";
inline constexpr unsigned kCheckpointFormatVersion = 1;

}  // namespace gekc
