#pragma once

namespace threshy {

inline constexpr const char* kEngineVersion = "threshy-engine 1.0.0";

}  // namespace threshy
