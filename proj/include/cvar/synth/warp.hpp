#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cvar/synth/camera.hpp"
#include "cvar/synth/video.hpp"

namespace cvar::synth {

// Token grid of a (T/K) x (H/P) x (W/P) tokenization over a crop window of
// the rendered frames. Cells are ordered slot-major, then row, then column.
struct TokenGrid {
  int frames = 8;
  int temporal_patch = 2;
  int patch = 8;
  int crop_top = 0;
  int crop_left = 0;
  int crop_height = 32;
  int crop_width = 32;

  int slots() const { return frames / temporal_patch; }
  int rows() const { return crop_height / patch; }
  int cols() const { return crop_width / patch; }
  int cells() const { return slots() * rows() * cols(); }
  int index(int slot, int row, int col) const { return (slot * rows() + row) * cols() + col; }
  void validate(int height, int width) const;
};

enum class CellStatus : std::uint8_t { Mapped, Occluded, OutOfView, NoSurface };

struct CellMatch {
  CellStatus status = CellStatus::NoSurface;
  int target = -1;  // ego cell index when Mapped
  double src_u = 0, src_v = 0;  // exo cell center (pixels)
  double dst_u = 0, dst_v = 0;  // reprojection into the ego frame
};

// Discrete exo -> ego cell correspondence induced by the two cameras.
struct CorrespondenceField {
  TokenGrid grid;
  std::vector<CellMatch> cells;

  std::size_t mapped() const;
  std::size_t in_view() const;  // Mapped + Occluded
  double mapped_fraction() const { return cells.empty() ? 0.0 : double(mapped()) / cells.size(); }
};

// For every exo cell: unproject its center pixel with the exo depth,
// reproject into the ego frame of the same slot, and accept the match when
// the ego depth there agrees within depth_tolerance (relative).
CorrespondenceField ground_truth_warp(std::span<const float> exo_depth,
                                      std::span<const float> ego_depth,
                                      std::span<const CameraRig> exo_rigs,
                                      std::span<const CameraRig> ego_rigs, int height, int width,
                                      const TokenGrid& grid, double depth_tolerance = 0.02);

// Mean absolute color difference between each mapped exo cell center and
// the ego pixel it reprojects to. NaN when nothing is mapped.
double warp_color_error(const CorrespondenceField& field, const VideoClip& exo, const VideoClip& ego);

}  // namespace cvar::synth
