#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cvar/synth/camera.hpp"

namespace cvar::synth {

enum class View { Exo, Ego };

std::string_view view_name(View view);
View parse_view(std::string_view name);

// T x H x W x C frame volume with values in [0, 1].
struct VideoClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;
  View view = View::Exo;
  int label = 0;
  std::uint64_t scene_id = 0;
  std::vector<CameraRig> rigs;  // one per frame

  std::size_t numel() const {
    return static_cast<std::size_t>(frames) * height * width * channels;
  }
  float at(int t, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c];
  }
};

}  // namespace cvar::synth
