#pragma once

#include <chrono>

namespace voxstream {

using Clock = std::chrono::steady_clock;

}  // namespace voxstream
