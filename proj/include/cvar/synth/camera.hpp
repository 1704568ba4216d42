#pragma once

#include <Eigen/Dense>

namespace cvar::synth {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Pinhole camera in the OpenCV convention: x right, y down, z forward.
// A world point X maps to pixel K (R X + t).
struct CameraRig {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  // Throws ConfigError unless R is a rotation and K a valid intrinsic matrix.
  void validate(double tol = 1e-6) const;

  Vec3 center() const { return -R.transpose() * t; }
  Vec3 to_camera(const Vec3& world) const { return R * world + t; }
  // (u, v, depth) with depth the camera-frame z.
  Vec3 project(const Vec3& world) const;
  Vec3 unproject(double u, double v, double depth) const;
  Mat4 extrinsic() const;
};

Mat3 intrinsics(double focal, double cx, double cy);
// Camera at `eye` looking at `target`, with world `up` mapped to image -y.
CameraRig look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Mat3& K);

// Linear transforms taking one camera to another: K' = T_K K and
// [R'|t'] = T_Rt [R|t] in homogeneous form.
struct CameraLink {
  Mat3 T_K = Mat3::Identity();
  Mat4 T_Rt = Mat4::Identity();

  static CameraLink between(const CameraRig& from, const CameraRig& to);
  CameraLink inverse() const;
  // Applying the result equals applying *this first, then `next`.
  CameraLink then(const CameraLink& next) const;
};

// Throws ConfigError when T_K is singular or the result is not a valid rig.
CameraRig derive_ego_camera(const CameraRig& exo, const CameraLink& link);

}  // namespace cvar::synth
