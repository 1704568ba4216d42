#include "cvar/synth/warp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cvar/common/error.hpp"

namespace cvar::synth {

void TokenGrid::validate(int height, int width) const {
  if (patch <= 0 || temporal_patch <= 0 || frames % temporal_patch != 0 || crop_height % patch != 0 ||
      crop_width % patch != 0) {
    throw ConfigError("token grid: crop/frames not divisible by patch extents");
  }
  if (crop_top < 0 || crop_left < 0 || crop_top + crop_height > height || crop_left + crop_width > width) {
    throw ConfigError("token grid: crop window outside " + std::to_string(height) + "x" +
                      std::to_string(width) + " frame");
  }
}

std::size_t CorrespondenceField::mapped() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.status == CellStatus::Mapped;
  return n;
}

std::size_t CorrespondenceField::in_view() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.status == CellStatus::Mapped || c.status == CellStatus::Occluded;
  return n;
}

CorrespondenceField ground_truth_warp(std::span<const float> exo_depth, std::span<const float> ego_depth,
                                      std::span<const CameraRig> exo_rigs,
                                      std::span<const CameraRig> ego_rigs, int height, int width,
                                      const TokenGrid& grid, double depth_tolerance) {
  grid.validate(height, width);
  const auto frame_px = static_cast<std::size_t>(height) * width;
  if (exo_depth.size() != frame_px * grid.frames || ego_depth.size() != frame_px * grid.frames) {
    throw ShapeError("ground_truth_warp: depth maps do not match the grid's frame count");
  }
  if (exo_rigs.size() != static_cast<std::size_t>(grid.frames) ||
      ego_rigs.size() != static_cast<std::size_t>(grid.frames)) {
    throw ShapeError("ground_truth_warp: need one rig per frame for each view");
  }
  CorrespondenceField field;
  field.grid = grid;
  field.cells.resize(grid.cells());
  for (int s = 0; s < grid.slots(); ++s) {
    const int f = s * grid.temporal_patch;
    const float* exo_d = exo_depth.data() + f * frame_px;
    const float* ego_d = ego_depth.data() + f * frame_px;
    for (int r = 0; r < grid.rows(); ++r) {
      for (int c = 0; c < grid.cols(); ++c) {
        auto& cell = field.cells[grid.index(s, r, c)];
        const int px = grid.crop_left + c * grid.patch + grid.patch / 2;
        const int py = grid.crop_top + r * grid.patch + grid.patch / 2;
        cell.src_u = px + 0.5;
        cell.src_v = py + 0.5;
        const double depth = exo_d[static_cast<std::size_t>(py) * width + px];
        if (depth <= 0.0) continue;  // NoSurface
        const Vec3 world = exo_rigs[f].unproject(cell.src_u, cell.src_v, depth);
        const Vec3 cam = ego_rigs[f].to_camera(world);
        cell.status = CellStatus::OutOfView;
        if (cam.z() <= 1e-9) continue;
        const Vec3 img = ego_rigs[f].K * cam;
        cell.dst_u = img.x() / img.z();
        cell.dst_v = img.y() / img.z();
        const double lx = cell.dst_u - grid.crop_left, ly = cell.dst_v - grid.crop_top;
        if (lx < 0.0 || ly < 0.0 || lx >= grid.crop_width || ly >= grid.crop_height) continue;
        const int qx = static_cast<int>(std::floor(cell.dst_u));
        const int qy = static_cast<int>(std::floor(cell.dst_v));
        const double seen = ego_d[static_cast<std::size_t>(qy) * width + qx];
        if (seen <= 0.0 || std::abs(seen - cam.z()) > depth_tolerance * cam.z()) {
          cell.status = CellStatus::Occluded;
          continue;
        }
        cell.status = CellStatus::Mapped;
        cell.target = grid.index(s, static_cast<int>(ly) / grid.patch, static_cast<int>(lx) / grid.patch);
      }
    }
  }
  return field;
}

double warp_color_error(const CorrespondenceField& field, const VideoClip& exo, const VideoClip& ego) {
  double total = 0.0;
  std::size_t n = 0;
  const auto& g = field.grid;
  for (int idx = 0; idx < g.cells(); ++idx) {
    const auto& cell = field.cells[idx];
    if (cell.status != CellStatus::Mapped) continue;
    const int f = (idx / (g.rows() * g.cols())) * g.temporal_patch;
    const int sx = static_cast<int>(std::floor(cell.src_u)), sy = static_cast<int>(std::floor(cell.src_v));
    const int dx = static_cast<int>(std::floor(cell.dst_u)), dy = static_cast<int>(std::floor(cell.dst_v));
    for (int k = 0; k < exo.channels; ++k) total += std::abs(exo.at(f, sy, sx, k) - ego.at(f, dy, dx, k));
    n += exo.channels;
  }
  return n ? total / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace cvar::synth
