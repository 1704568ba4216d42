#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvar/synth/render.hpp"
#include "cvar/synth/scene.hpp"
#include "cvar/synth/video.hpp"

namespace cvar::synth {

inline constexpr const char* kDatasetFormat = "cvar-ds/1";

struct DatasetConfig {
  std::string name = "cvar-synth";
  int classes = kDefaultClasses;
  int clips_per_class = 25;      // per view, train split
  int val_clips_per_class = 25;  // per view, val split (always paired)
  bool paired = false;           // train split pairing
  std::uint64_t seed = 1;
  int frames = 8;
  int size = 40;  // rendered H = W
  int patch = 8;
  int temporal_patch = 2;
  SceneBounds bounds;

  void validate() const;
  RenderOptions render_options() const { return {size, size, patch, temporal_patch}; }
};

struct ClipRecord {
  std::uint64_t scene_seed = 0;
  View view = View::Exo;
  int label = 0;
  int regenerations = 0;
  std::string file;
  std::string depth_file;
  std::vector<CameraRig> rigs;
};

struct SplitManifest {
  std::string name;
  bool paired = false;
  std::vector<ClipRecord> exo;
  std::vector<ClipRecord> ego;  // aligned with exo when paired
};

struct DatasetManifest {
  std::string format = kDatasetFormat;
  DatasetConfig config;
  std::vector<SplitManifest> splits;
  int regenerations = 0;

  const SplitManifest& split(const std::string& name) const;
};

// One scene rendered from one or both views, regenerating with derived
// seeds while either view is degenerate.
struct SceneRender {
  SceneSpec scene;
  RenderResult exo;
  RenderResult ego;
  int regenerations = 0;
};
SceneRender render_scene(std::uint64_t requested_seed, int label, const DatasetConfig& config);

// Writes <out>/<split>/<scene_seed>_<view>.f32 (+ .depth.f32) and
// <out>/manifest.json. Throws IoError if <out> already holds a dataset and
// force is false, or if it cannot be written.
DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out,
                                 bool force = false);

DatasetManifest read_manifest(const std::filesystem::path& root);

struct LoadedSplit {
  std::vector<VideoClip> exo;
  std::vector<VideoClip> ego;
};

struct Dataset {
  std::filesystem::path root;
  DatasetManifest manifest;
  LoadedSplit train;
  LoadedSplit val;

  std::vector<float> load_depth(const std::string& split, View view, std::size_t index) const;
};

Dataset load_dataset(const std::filesystem::path& root);

}  // namespace cvar::synth
