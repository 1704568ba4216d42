#include "cvar/synth/camera.hpp"

#include <cmath>
#include <string>

#include "cvar/common/error.hpp"

namespace cvar::synth {

void CameraRig::validate(double tol) const {
  if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
      std::abs(R.determinant() - 1.0) > tol) {
    throw ConfigError("camera rotation is not orthonormal with det +1");
  }
  if (std::abs(K(1, 0)) > tol || std::abs(K(2, 0)) > tol || std::abs(K(2, 1)) > tol) {
    throw ConfigError("camera intrinsics are not upper-triangular");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) {
    throw ConfigError("camera focal lengths must be positive");
  }
}

Vec3 CameraRig::project(const Vec3& world) const {
  const Vec3 cam = to_camera(world);
  const Vec3 img = K * cam;
  return {img.x() / img.z(), img.y() / img.z(), cam.z()};
}

Vec3 CameraRig::unproject(double u, double v, double depth) const {
  const Vec3 ray = K.inverse() * Vec3(u, v, 1.0);
  const Vec3 cam = ray * (depth / ray.z());
  return R.transpose() * (cam - t);
}

Mat4 CameraRig::extrinsic() const {
  Mat4 e = Mat4::Identity();
  e.topLeftCorner<3, 3>() = R;
  e.topRightCorner<3, 1>() = t;
  return e;
}

Mat3 intrinsics(double focal, double cx, double cy) {
  Mat3 K = Mat3::Identity();
  K(0, 0) = focal;
  K(1, 1) = focal;
  K(0, 2) = cx;
  K(1, 2) = cy;
  return K;
}

CameraRig look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Mat3& K) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) throw ConfigError("look_at: view direction parallel to up vector");
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraRig rig;
  rig.K = K;
  rig.R.row(0) = right.transpose();
  rig.R.row(1) = down.transpose();
  rig.R.row(2) = forward.transpose();
  rig.t = -rig.R * eye;
  return rig;
}

CameraLink CameraLink::between(const CameraRig& from, const CameraRig& to) {
  CameraLink link;
  link.T_K = to.K * from.K.inverse();
  link.T_Rt = to.extrinsic() * from.extrinsic().inverse();
  return link;
}

CameraLink CameraLink::inverse() const {
  return {T_K.inverse(), T_Rt.inverse()};
}

CameraLink CameraLink::then(const CameraLink& next) const {
  return {next.T_K * T_K, next.T_Rt * T_Rt};
}

CameraRig derive_ego_camera(const CameraRig& exo, const CameraLink& link) {
  if (std::abs(link.T_K.determinant()) < 1e-12) {
    throw ConfigError("camera link T_K is not invertible");
  }
  CameraRig ego;
  ego.K = link.T_K * exo.K;
  const Mat4 e = link.T_Rt * exo.extrinsic();
  ego.R = e.topLeftCorner<3, 3>();
  ego.t = e.topRightCorner<3, 1>();
  ego.validate();
  return ego;
}

}  // namespace cvar::synth
