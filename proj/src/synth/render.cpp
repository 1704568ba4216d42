#include "cvar/synth/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvar/common/error.hpp"
#include "cvar/common/rng.hpp"

namespace cvar::synth {
namespace {

Vec3 ground_color(const SceneSpec& s, double x, double y) {
  const auto i = static_cast<std::int64_t>(std::floor((x - s.origin.x()) / s.tile));
  const auto j = static_cast<std::int64_t>(std::floor((y - s.origin.y()) / s.tile));
  const Vec3 base = ((i + j) & 1) ? s.ground_a : s.ground_b;
  const auto h = mix_seed(s.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
  const double jitter = (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5) * 0.08;
  return (base.array() + jitter).cwiseMax(0.0).cwiseMin(1.0);
}

struct FrameBuffer {
  int height, width;
  float* color;
  float* depth;

  void put(int y, int x, const Vec3& c, double z) {
    const auto p = static_cast<std::size_t>(y) * width + x;
    depth[p] = static_cast<float>(z);
    for (int k = 0; k < 3; ++k) color[p * 3 + k] = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
  }
  bool closer(int y, int x, double z) const {
    const float d = depth[static_cast<std::size_t>(y) * width + x];
    return d == 0.0f || z < d;
  }
};

void draw_background(const SceneSpec& s, const CameraRig& rig, FrameBuffer& fb) {
  const Mat3 kinv = rig.K.inverse();
  const Mat3 rt = rig.R.transpose();
  const Vec3 center = rig.center();
  const double plane_z = s.origin.z();
  for (int y = 0; y < fb.height; ++y) {
    for (int x = 0; x < fb.width; ++x) {
      const Vec3 ray_cam = kinv * Vec3(x + 0.5, y + 0.5, 1.0);  // z = 1
      const Vec3 ray = rt * ray_cam;
      if (ray.z() < -1e-12) {
        const double s_hit = (plane_z - center.z()) / ray.z();
        if (s_hit > 0.0) {
          const Vec3 hit = center + s_hit * ray;
          fb.put(y, x, ground_color(s, hit.x(), hit.y()), s_hit * ray_cam.z());
          continue;
        }
      }
      fb.put(y, x, s.sky, 0.0);
      fb.depth[static_cast<std::size_t>(y) * fb.width + x] = 0.0f;
    }
  }
}

// Returns true when the splat center projects inside the image.
bool draw_splat(const Splat& splat, const CameraRig& rig, FrameBuffer& fb) {
  const Vec3 cam = rig.to_camera(splat.position);
  if (cam.z() < kNearPlane) return false;
  const Vec3 img = rig.K * cam;
  const double u = img.x() / img.z(), v = img.y() / img.z();
  const double r = std::max(rig.K(0, 0) * splat.radius / cam.z(), kMinSplatRadius);
  const int x0 = std::max(0, static_cast<int>(std::floor(u - r)));
  const int x1 = std::min(fb.width - 1, static_cast<int>(std::ceil(u + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(v - r)));
  const int y1 = std::min(fb.height - 1, static_cast<int>(std::ceil(v + r)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - u, dy = y + 0.5 - v;
      if (dx * dx + dy * dy <= r * r && fb.closer(y, x, cam.z())) fb.put(y, x, splat.color, cam.z());
    }
  }
  return u >= 0.0 && u < fb.width && v >= 0.0 && v < fb.height;
}

}  // namespace

RenderResult render(const SceneSpec& scene, std::span<const CameraRig> rigs,
                    const RenderOptions& opt, View view) {
  if (opt.patch <= 0 || opt.height % opt.patch != 0 || opt.width % opt.patch != 0) {
    throw ConfigError("render: resolution " + std::to_string(opt.height) + "x" +
                      std::to_string(opt.width) + " not divisible by patch " + std::to_string(opt.patch));
  }
  if (opt.temporal_patch <= 0 || scene.frames % opt.temporal_patch != 0) {
    throw ConfigError("render: frame count not divisible by temporal patch");
  }
  if (rigs.size() != static_cast<std::size_t>(scene.frames)) {
    throw ConfigError("render: need one camera rig per frame");
  }
  RenderResult out;
  auto& clip = out.clip;
  clip.frames = scene.frames;
  clip.height = opt.height;
  clip.width = opt.width;
  clip.channels = 3;
  clip.view = view;
  clip.label = scene.label;
  clip.scene_id = scene.seed;
  clip.rigs.assign(rigs.begin(), rigs.end());
  clip.data.assign(clip.numel(), 0.0f);
  out.depth.assign(static_cast<std::size_t>(scene.frames) * opt.height * opt.width, 0.0f);

  const auto landmarks = world_landmarks(scene);
  const auto frame_px = static_cast<std::size_t>(opt.height) * opt.width;
  for (int f = 0; f < scene.frames; ++f) {
    FrameBuffer fb{opt.height, opt.width, clip.data.data() + f * frame_px * 3,
                   out.depth.data() + f * frame_px};
    draw_background(scene, rigs[f], fb);
    for (const auto& l : landmarks) draw_splat(l, rigs[f], fb);
    bool visible = false;
    for (const auto& part : actor_splats(scene, f)) visible = draw_splat(part, rigs[f], fb) || visible;
    if (visible) ++out.actor_visible_frames;
  }
  out.degenerate = 2 * out.actor_visible_frames < scene.frames;
  return out;
}

}  // namespace cvar::synth
