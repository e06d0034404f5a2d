#include "voxstream/voxel/frame.hpp"

#include <stdexcept>

namespace voxstream {

void Frame::validate() const {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (depth.size() != n) throw std::invalid_argument("frame: depth size mismatch");
  if (rgb.size() != 3 * n) throw std::invalid_argument("frame: color size mismatch");
}

void Frustum::validate() const {
  intrinsics.validate();
  pose.validate();
  if (!(near_m > 0.f && far_m > near_m)) throw std::invalid_argument("frustum: need 0 < near < far");
  if (!(margin_m >= 0.f)) throw std::invalid_argument("frustum: negative margin");
}

}  // namespace voxstream
