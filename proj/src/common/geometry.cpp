#include "voxstream/common/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace voxstream {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.f && fy > 0.f)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width == 0 || height == 0) throw std::invalid_argument("intrinsics: empty image");
  if (!(cx >= 0.f && cx < static_cast<float>(width) && cy >= 0.f && cy < static_cast<float>(height))) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

std::array<float, 12> Pose::to_array() const {
  std::array<float, 12> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[r * 3 + c] = rotation(r, c);
  for (int i = 0; i < 3; ++i) a[9 + i] = translation[i];
  return a;
}

Pose Pose::from_array(const std::array<float, 12>& a) {
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = a[r * 3 + c];
  for (int i = 0; i < 3; ++i) p.translation[i] = a[9 + i];
  return p;
}

Pose Pose::look_at(const Eigen::Vector3f& eye, const Eigen::Vector3f& target, const Eigen::Vector3f& world_up) {
  const Eigen::Vector3f forward = (target - eye).normalized();
  Eigen::Vector3f right = forward.cross(world_up);
  if (right.squaredNorm() < 1e-12f) right = forward.unitOrthogonal();
  right.normalize();
  // Image y points down, i.e. against the world up direction.
  const Eigen::Vector3f down = forward.cross(right);
  Pose p;
  p.rotation.col(0) = right;
  p.rotation.col(1) = down;
  p.rotation.col(2) = forward;
  p.translation = eye;
  return p;
}

void Pose::validate() const {
  if (std::abs(rotation.determinant() - 1.f) > 1e-5f) throw std::invalid_argument("pose: rotation is not proper");
  if (!translation.allFinite()) throw std::invalid_argument("pose: translation not finite");
}

}  // namespace voxstream
