#include "cvar/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cvar/common/error.hpp"
#include "cvar/common/rng.hpp"

namespace cvar::synth {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double deg(double d) { return d * kPi / 180.0; }

enum Part { kHead, kChest, kPelvis, kLeftElbow, kRightElbow, kLeftHand, kRightHand, kLeftFoot, kRightFoot };

const std::array<Vec3, kBodyPoints> kPartColors = {
    Vec3(0.95, 0.78, 0.62), Vec3(0.85, 0.15, 0.15), Vec3(0.20, 0.25, 0.75),
    Vec3(0.90, 0.50, 0.10), Vec3(0.55, 0.20, 0.80), Vec3(1.00, 0.92, 0.10),
    Vec3(0.10, 0.90, 0.95), Vec3(0.15, 0.15, 0.15), Vec3(0.95, 0.95, 0.95)};

const std::array<double, kBodyPoints> kPartRadii = {0.14, 0.18, 0.15, 0.07, 0.07,
                                                    0.09, 0.09, 0.09, 0.09};

// Body-frame pose: x forward, y left, z up, relative to the root.
std::array<Vec3, kBodyPoints> rest_pose() {
  return {Vec3(0.0, 0.0, 1.65),  Vec3(0.0, 0.0, 1.35),   Vec3(0.0, 0.0, 0.95),
          Vec3(0.05, 0.24, 1.2), Vec3(0.05, -0.24, 1.2), Vec3(0.12, 0.26, 0.92),
          Vec3(0.12, -0.26, 0.92), Vec3(0.0, 0.13, 0.05), Vec3(0.0, -0.13, 0.05)};
}

double actor_speed(int label, Rng& rng) {
  return label == 7 ? rng.uniform(1.0, 1.4) : rng.uniform(0.0, 0.25);
}

std::array<Vec3, kBodyPoints> articulate(int label, double w, double amp) {
  auto p = rest_pose();
  const double s = std::sin(w), c = std::cos(w);
  const double up = 0.5 * (1.0 - c);  // 0 -> 1 -> 0 over a cycle
  switch (label) {
    case 0:  // wave
      p[kRightElbow] = Vec3(0.08, -0.32, 1.45);
      p[kRightHand] = Vec3(0.15, -0.35 - 0.2 * amp * s, 1.78);
      break;
    case 1: {  // clap
      const double gap = 0.05 + 0.22 * amp * 0.5 * (1.0 + c);
      p[kLeftHand] = Vec3(0.42, gap, 1.2);
      p[kRightHand] = Vec3(0.42, -gap, 1.2);
      p[kLeftElbow] = Vec3(0.2, 0.22, 1.15);
      p[kRightElbow] = Vec3(0.2, -0.22, 1.15);
      break;
    }
    case 2: {  // raise both hands overhead
      const double z = 0.92 + 1.0 * amp * up;
      p[kLeftHand] = Vec3(0.12, 0.28, z);
      p[kRightHand] = Vec3(0.12, -0.28, z);
      p[kLeftElbow] = Vec3(0.06, 0.26, 1.2 + 0.4 * amp * up);
      p[kRightElbow] = Vec3(0.06, -0.26, 1.2 + 0.4 * amp * up);
      break;
    }
    case 3: {  // alternate punches
      p[kRightHand] = Vec3(0.2 + 0.45 * amp * std::max(0.0, s), -0.15, 1.38);
      p[kLeftHand] = Vec3(0.2 + 0.45 * amp * std::max(0.0, -s), 0.15, 1.38);
      p[kRightElbow] = Vec3(0.1 + 0.2 * amp * std::max(0.0, s), -0.22, 1.3);
      p[kLeftElbow] = Vec3(0.1 + 0.2 * amp * std::max(0.0, -s), 0.22, 1.3);
      break;
    }
    case 4:  // right hand traces a circle in front
      p[kRightHand] = Vec3(0.45, -0.12 + 0.22 * amp * c, 1.25 + 0.22 * amp * s);
      p[kRightElbow] = Vec3(0.22, -0.22, 1.22);
      break;
    case 5: {  // squat with hands forward
      const double dz = -0.38 * amp * up;
      for (int k : {kHead, kChest, kPelvis, kLeftElbow, kRightElbow}) p[k].z() += dz;
      p[kLeftHand] = Vec3(0.38, 0.2, 1.12 + dz);
      p[kRightHand] = Vec3(0.38, -0.2, 1.12 + dz);
      break;
    }
    case 6: {  // kick with the right foot
      const double k = std::max(0.0, s);
      p[kRightFoot] = Vec3(0.55 * amp * k, -0.13, 0.05 + 0.45 * amp * k);
      p[kLeftHand] = Vec3(0.05, 0.32, 1.0);
      p[kRightHand] = Vec3(0.05, -0.32, 1.0);
      break;
    }
    case 7:  // walk: feet and arms swing in opposition
      p[kLeftFoot].x() += 0.28 * amp * s;
      p[kRightFoot].x() -= 0.28 * amp * s;
      p[kLeftFoot].z() += 0.08 * std::max(0.0, s);
      p[kRightFoot].z() += 0.08 * std::max(0.0, -s);
      p[kLeftHand].x() -= 0.22 * amp * s;
      p[kRightHand].x() += 0.22 * amp * s;
      break;
    default:
      throw ConfigError("articulation class " + std::to_string(label) + " out of range");
  }
  return p;
}

Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace

SceneSpec sample_scene(std::uint64_t seed, int label, int frames, const SceneBounds& b) {
  if (label < 0 || label >= kMaxArticulationClasses) {
    throw ConfigError("scene class id " + std::to_string(label) + " out of range");
  }
  if (frames <= 0) throw ConfigError("scene needs at least one frame");
  Rng rng(mix_seed(seed, 0x5ce7e));
  SceneSpec s;
  s.seed = seed;
  s.label = label;
  s.frames = frames;
  const double r = b.actor_spread * std::sqrt(rng.uniform());
  const double a = rng.uniform(0.0, 2.0 * kPi);
  s.start = Vec3(r * std::cos(a), r * std::sin(a), 0.0);
  s.heading = rng.uniform(0.0, 2.0 * kPi);
  s.speed = actor_speed(label, rng);
  s.amplitude = rng.uniform(0.8, 1.2);
  s.phase = rng.uniform(-0.4, 0.4);
  s.head_yaw_amplitude = deg(rng.uniform(0.0, 8.0));

  for (int i = 0; i < b.landmarks; ++i) {
    const double lr = rng.uniform(1.0, 4.0);
    const double la = rng.uniform(0.0, 2.0 * kPi);
    Splat l;
    l.position = s.start + Vec3(lr * std::cos(la), lr * std::sin(la), rng.uniform(0.2, 1.4));
    l.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    l.radius = rng.uniform(0.1, 0.2);
    s.landmarks.push_back(l);
  }

  s.ground_a = Vec3(rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6));
  s.ground_b = (s.ground_a.array() + rng.uniform(0.08, 0.16)).cwiseMin(1.0);
  s.tile = rng.uniform(0.35, 0.7);
  s.sky = Vec3(rng.uniform(0.55, 0.7), rng.uniform(0.7, 0.85), rng.uniform(0.85, 1.0));

  s.exo_distance = rng.uniform(b.exo_distance_min, b.exo_distance_max);
  s.exo_azimuth = rng.uniform(0.0, 2.0 * kPi);
  s.exo_elevation = deg(rng.uniform(b.exo_elevation_min_deg, b.exo_elevation_max_deg));
  s.exo_fov = deg(b.exo_fov_deg);
  s.ego_pitch = deg(rng.uniform(b.ego_pitch_min_deg, b.ego_pitch_max_deg));
  s.ego_fov = deg(b.ego_fov_deg);
  return s;
}

Vec3 actor_root(const SceneSpec& s, int frame) {
  const Vec3 dir(std::cos(s.heading), std::sin(s.heading), 0.0);
  return s.origin + s.start + dir * (s.speed * kFrameInterval * frame);
}

double actor_heading(const SceneSpec& s, int frame) {
  const double w = 2.0 * kPi * frame / s.frames + s.phase;
  return s.heading + s.head_yaw_amplitude * std::sin(1.7 * w);
}

std::array<Splat, kBodyPoints> actor_splats(const SceneSpec& s, int frame) {
  const double w = 2.0 * kPi * frame / s.frames + s.phase;
  const auto pose = articulate(s.label, w, s.amplitude);
  const Mat3 rot = yaw_rotation(s.heading);
  const Vec3 root = actor_root(s, frame);
  std::array<Splat, kBodyPoints> out;
  for (int k = 0; k < kBodyPoints; ++k) {
    out[k].position = root + rot * pose[k];
    out[k].color = kPartColors[k];
    out[k].radius = kPartRadii[k];
  }
  return out;
}

std::vector<Splat> world_landmarks(const SceneSpec& s) {
  auto out = s.landmarks;
  for (auto& l : out) l.position += s.origin;
  return out;
}

CameraRig exo_rig(const SceneSpec& s, int width, int height) {
  // Aim at the middle of the actor's path so it stays framed throughout.
  const Vec3 target = 0.5 * (actor_root(s, 0) + actor_root(s, s.frames - 1)) + Vec3(0, 0, 0.9);
  const double az = s.heading + s.exo_azimuth;
  const Vec3 offset(std::cos(az) * std::cos(s.exo_elevation), std::sin(az) * std::cos(s.exo_elevation),
                    std::sin(s.exo_elevation));
  const double focal = 0.5 * width / std::tan(0.5 * s.exo_fov);
  return look_at(target + offset * s.exo_distance, target, Vec3::UnitZ(),
                 intrinsics(focal, 0.5 * width, 0.5 * height));
}

CameraRig ego_rig(const SceneSpec& s, int frame, int width, int height) {
  const Vec3 head = actor_splats(s, frame)[0].position;
  const double yaw = actor_heading(s, frame);
  const Vec3 fwd(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 eye = head + 0.12 * fwd;
  const Vec3 dir = std::cos(s.ego_pitch) * fwd - std::sin(s.ego_pitch) * Vec3::UnitZ();
  const double focal = 0.5 * width / std::tan(0.5 * s.ego_fov);
  return look_at(eye, eye + dir, Vec3::UnitZ(), intrinsics(focal, 0.5 * width, 0.5 * height));
}

std::vector<CameraRig> exo_rigs(const SceneSpec& s, int width, int height) {
  return std::vector<CameraRig>(s.frames, exo_rig(s, width, height));
}

std::vector<CameraRig> ego_rigs(const SceneSpec& s, int width, int height) {
  std::vector<CameraRig> rigs;
  for (int f = 0; f < s.frames; ++f) rigs.push_back(ego_rig(s, f, width, height));
  return rigs;
}

SceneSpec translated(const SceneSpec& scene, const Vec3& offset) {
  SceneSpec s = scene;
  s.origin += offset;
  return s;
}

CameraRig translated(const CameraRig& rig, const Vec3& offset) {
  CameraRig r = rig;
  r.t = rig.t - rig.R * offset;
  return r;
}

}  // namespace cvar::synth
