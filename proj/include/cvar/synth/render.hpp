#pragma once

#include <span>
#include <vector>

#include "cvar/synth/scene.hpp"
#include "cvar/synth/video.hpp"

namespace cvar::synth {

inline constexpr double kNearPlane = 0.25;
// Pixels; above sqrt(0.5) so every visible point covers at least one pixel center.
inline constexpr double kMinSplatRadius = 0.75;

struct RenderOptions {
  int height = 40;
  int width = 40;
  int patch = 8;           // spatial token extent P
  int temporal_patch = 2;  // temporal token extent K
};

struct RenderResult {
  VideoClip clip;
  // T x H x W camera-frame depth; 0 where the ray hits nothing.
  std::vector<float> depth;
  int actor_visible_frames = 0;
  bool degenerate = false;  // actor in view for fewer than half the frames
};

// Point-splat renderer over an analytic textured ground plane, z-buffered.
// Deterministic in (scene, rigs, options).
RenderResult render(const SceneSpec& scene, std::span<const CameraRig> rigs,
                    const RenderOptions& options, View view);

}  // namespace cvar::synth
