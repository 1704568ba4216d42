#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cvar/synth/camera.hpp"

namespace cvar::synth {

inline constexpr int kDefaultClasses = 8;
inline constexpr int kMaxArticulationClasses = 8;
inline constexpr int kBodyPoints = 9;
inline constexpr double kFrameInterval = 0.125;  // seconds

struct Splat {
  Vec3 position;
  Vec3 color;
  double radius = 0.1;  // world units
};

// Ranges scene parameters are drawn from.
struct SceneBounds {
  double exo_distance_min = 4.0, exo_distance_max = 5.5;
  double exo_elevation_min_deg = 30.0, exo_elevation_max_deg = 60.0;
  double exo_fov_deg = 36.0;
  double ego_pitch_min_deg = 60.0, ego_pitch_max_deg = 75.0;
  double ego_fov_deg = 110.0;
  double actor_spread = 1.5;  // start position radius around the origin
  int landmarks = 6;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int label = 0;
  int frames = 8;
  Vec3 origin = Vec3::Zero();  // ground plane passes through origin, z up

  // Actor trajectory and articulation, relative to origin.
  Vec3 start = Vec3::Zero();
  double heading = 0.0;
  double speed = 0.0;
  double amplitude = 1.0;
  double phase = 0.0;
  double head_yaw_amplitude = 0.0;

  std::vector<Splat> landmarks;  // relative to origin

  Vec3 ground_a{0.4, 0.5, 0.3};
  Vec3 ground_b{0.6, 0.6, 0.5};
  double tile = 0.5;
  Vec3 sky{0.6, 0.75, 0.95};

  double exo_distance = 5.0;
  double exo_azimuth = 0.0;    // relative to actor heading
  double exo_elevation = 0.7;  // radians above horizontal
  double exo_fov = 0.8;
  double ego_pitch = 0.9;  // radians below horizontal
  double ego_fov = 1.7;
};

SceneSpec sample_scene(std::uint64_t seed, int label, int frames,
                       const SceneBounds& bounds = SceneBounds{});

// Root of the actor on the ground plane (world coordinates) at a frame.
Vec3 actor_root(const SceneSpec& scene, int frame);
double actor_heading(const SceneSpec& scene, int frame);
// Articulated body points in world coordinates; index 0 is the head.
std::array<Splat, kBodyPoints> actor_splats(const SceneSpec& scene, int frame);
std::vector<Splat> world_landmarks(const SceneSpec& scene);

// Static elevated camera looking at the actor.
CameraRig exo_rig(const SceneSpec& scene, int width, int height);
// Head-mounted camera; varies per frame with the actor.
CameraRig ego_rig(const SceneSpec& scene, int frame, int width, int height);
std::vector<CameraRig> exo_rigs(const SceneSpec& scene, int width, int height);
std::vector<CameraRig> ego_rigs(const SceneSpec& scene, int width, int height);

// Rigidly shifts every world-space quantity of the scene / camera by offset.
SceneSpec translated(const SceneSpec& scene, const Vec3& offset);
CameraRig translated(const CameraRig& rig, const Vec3& offset);

}  // namespace cvar::synth
