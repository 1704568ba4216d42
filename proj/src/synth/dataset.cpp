#include "cvar/synth/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"
#include "cvar/common/rng.hpp"
#include "json.hpp"

namespace cvar::synth {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kMaxRegenerations = 64;

std::string clip_stem(std::uint64_t seed, View view) {
  return std::to_string(seed) + "_" + std::string(view_name(view));
}

json rig_to_json(const CameraRig& rig) {
  json K = json::array(), R = json::array(), t = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      K.push_back(rig.K(r, c));
      R.push_back(rig.R(r, c));
    }
    t.push_back(rig.t(r));
  }
  return json{{"K", K}, {"R", R}, {"t", t}};
}

CameraRig rig_from_json(const json& j) {
  CameraRig rig;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      rig.K(r, c) = j.at("K").at(r * 3 + c).get<double>();
      rig.R(r, c) = j.at("R").at(r * 3 + c).get<double>();
    }
    rig.t(r) = j.at("t").at(r).get<double>();
  }
  return rig;
}

json config_to_json(const DatasetConfig& c) {
  const auto& b = c.bounds;
  return json{{"name", c.name},
              {"classes", c.classes},
              {"clips_per_class", c.clips_per_class},
              {"val_clips_per_class", c.val_clips_per_class},
              {"paired", c.paired},
              {"seed", c.seed},
              {"frames", c.frames},
              {"size", c.size},
              {"patch", c.patch},
              {"temporal_patch", c.temporal_patch},
              {"bounds",
               {{"exo_distance", {b.exo_distance_min, b.exo_distance_max}},
                {"exo_elevation_deg", {b.exo_elevation_min_deg, b.exo_elevation_max_deg}},
                {"exo_fov_deg", b.exo_fov_deg},
                {"ego_pitch_deg", {b.ego_pitch_min_deg, b.ego_pitch_max_deg}},
                {"ego_fov_deg", b.ego_fov_deg},
                {"actor_spread", b.actor_spread},
                {"landmarks", b.landmarks}}}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.name = j.at("name").get<std::string>();
  c.classes = j.at("classes").get<int>();
  c.clips_per_class = j.at("clips_per_class").get<int>();
  c.val_clips_per_class = j.at("val_clips_per_class").get<int>();
  c.paired = j.at("paired").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.frames = j.at("frames").get<int>();
  c.size = j.at("size").get<int>();
  c.patch = j.at("patch").get<int>();
  c.temporal_patch = j.at("temporal_patch").get<int>();
  const auto& b = j.at("bounds");
  c.bounds.exo_distance_min = b.at("exo_distance").at(0).get<double>();
  c.bounds.exo_distance_max = b.at("exo_distance").at(1).get<double>();
  c.bounds.exo_elevation_min_deg = b.at("exo_elevation_deg").at(0).get<double>();
  c.bounds.exo_elevation_max_deg = b.at("exo_elevation_deg").at(1).get<double>();
  c.bounds.exo_fov_deg = b.at("exo_fov_deg").get<double>();
  c.bounds.ego_pitch_min_deg = b.at("ego_pitch_deg").at(0).get<double>();
  c.bounds.ego_pitch_max_deg = b.at("ego_pitch_deg").at(1).get<double>();
  c.bounds.ego_fov_deg = b.at("ego_fov_deg").get<double>();
  c.bounds.actor_spread = b.at("actor_spread").get<double>();
  c.bounds.landmarks = b.at("landmarks").get<int>();
  return c;
}

json record_to_json(const ClipRecord& r) {
  json rigs = json::array();
  for (const auto& rig : r.rigs) rigs.push_back(rig_to_json(rig));
  return json{{"scene_seed", r.scene_seed},       {"view", view_name(r.view)},
              {"label", r.label},                 {"file", r.file},
              {"depth_file", r.depth_file},       {"regenerations", r.regenerations},
              {"rigs", rigs}};
}

ClipRecord record_from_json(const json& j) {
  ClipRecord r;
  r.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  r.view = parse_view(j.at("view").get<std::string>());
  r.label = j.at("label").get<int>();
  r.file = j.at("file").get<std::string>();
  r.depth_file = j.at("depth_file").get<std::string>();
  r.regenerations = j.at("regenerations").get<int>();
  for (const auto& rig : j.at("rigs")) r.rigs.push_back(rig_from_json(rig));
  return r;
}

std::uint64_t requested_seed(std::uint64_t base, const std::string& split, View view, bool paired,
                             int label, int index) {
  const std::uint64_t split_tag = split == "train" ? 1 : 2;
  const std::uint64_t view_tag = paired ? 0 : (view == View::Exo ? 1 : 2);
  return mix_seed(base, split_tag, view_tag, static_cast<std::uint64_t>(label),
                  static_cast<std::uint64_t>(index));
}

ClipRecord write_view(const fs::path& dir, const std::string& split, const SceneRender& sr, View view) {
  const auto& rr = view == View::Exo ? sr.exo : sr.ego;
  ClipRecord rec;
  rec.scene_seed = sr.scene.seed;
  rec.view = view;
  rec.label = sr.scene.label;
  rec.regenerations = sr.regenerations;
  rec.file = split + "/" + clip_stem(rec.scene_seed, view) + ".f32";
  rec.depth_file = split + "/" + clip_stem(rec.scene_seed, view) + ".depth.f32";
  rec.rigs = rr.clip.rigs;
  io::write_f32(dir / rec.file, rr.clip.data);
  io::write_f32(dir / rec.depth_file, rr.depth);
  return rec;
}

}  // namespace

std::string_view view_name(View view) {
  return view == View::Exo ? "exo" : "ego";
}

View parse_view(std::string_view name) {
  if (name == "exo") return View::Exo;
  if (name == "ego") return View::Ego;
  throw ConfigError("unknown view tag '" + std::string(name) + "'");
}

void DatasetConfig::validate() const {
  if (classes <= 0 || classes > kMaxArticulationClasses) {
    throw ConfigError("dataset classes must be in [1, " + std::to_string(kMaxArticulationClasses) + "]");
  }
  if (clips_per_class <= 0 || val_clips_per_class < 0) throw ConfigError("dataset clip counts must be positive");
  if (frames <= 0 || temporal_patch <= 0 || frames % temporal_patch != 0) {
    throw ConfigError("dataset frames must be divisible by the temporal patch");
  }
  if (patch <= 0 || size % patch != 0) throw ConfigError("dataset size must be divisible by the patch");
  if (name.empty()) throw ConfigError("dataset name must not be empty");
}

const SplitManifest& DatasetManifest::split(const std::string& name) const {
  for (const auto& s : splits)
    if (s.name == name) return s;
  throw ConfigError("dataset has no split '" + name + "'");
}

SceneRender render_scene(std::uint64_t requested, int label, const DatasetConfig& config) {
  const auto opt = config.render_options();
  for (int attempt = 0; attempt <= kMaxRegenerations; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? requested : mix_seed(requested, attempt);
    SceneRender sr;
    sr.scene = sample_scene(seed, label, config.frames, config.bounds);
    sr.regenerations = attempt;
    const auto exo = exo_rigs(sr.scene, opt.width, opt.height);
    const auto ego = ego_rigs(sr.scene, opt.width, opt.height);
    sr.exo = render(sr.scene, exo, opt, View::Exo);
    sr.ego = render(sr.scene, ego, opt, View::Ego);
    if (!sr.exo.degenerate && !sr.ego.degenerate) return sr;
  }
  throw NumericError("scene generation kept producing degenerate clips for seed " + std::to_string(requested));
}

DatasetManifest generate_dataset(const DatasetConfig& config, const fs::path& out, bool force) {
  config.validate();
  std::error_code ec;
  if (fs::exists(out / "manifest.json")) {
    if (!force) {
      throw IoError("dataset already exists at " + out.string() + " (use --force to overwrite)");
    }
    fs::remove_all(out, ec);
  }
  DatasetManifest manifest;
  manifest.config = config;
  const std::vector<std::pair<std::string, int>> plan = {{"train", config.clips_per_class},
                                                         {"val", config.val_clips_per_class}};
  for (const auto& [name, per_class] : plan) {
    fs::create_directories(out / name, ec);
    if (ec) throw IoError("cannot create " + (out / name).string() + ": " + ec.message());
    SplitManifest split;
    split.name = name;
    split.paired = name == "val" || config.paired;
    for (int label = 0; label < config.classes; ++label) {
      for (int i = 0; i < per_class; ++i) {
        if (split.paired) {
          const auto sr = render_scene(requested_seed(config.seed, name, View::Exo, true, label, i), label, config);
          split.exo.push_back(write_view(out, name, sr, View::Exo));
          split.ego.push_back(write_view(out, name, sr, View::Ego));
          manifest.regenerations += sr.regenerations;
          continue;
        }
        for (View view : {View::Exo, View::Ego}) {
          const auto sr = render_scene(requested_seed(config.seed, name, view, false, label, i), label, config);
          auto& dst = view == View::Exo ? split.exo : split.ego;
          dst.push_back(write_view(out, name, sr, view));
          manifest.regenerations += sr.regenerations;
        }
      }
    }
    if (!split.paired) {
      std::set<std::uint64_t> exo_scenes;
      for (const auto& r : split.exo) exo_scenes.insert(r.scene_seed);
      for (const auto& r : split.ego) {
        if (exo_scenes.count(r.scene_seed)) {
          throw NumericError("unpaired split drew the same scene for both views");
        }
      }
    }
    manifest.splits.push_back(std::move(split));
  }

  json j;
  j["format"] = manifest.format;
  j["name"] = config.name;
  j["shape"] = {{"frames", config.frames}, {"height", config.size}, {"width", config.size}, {"channels", 3}};
  j["dtype"] = "float32-le";
  j["layout"] = "THWC";
  j["config"] = config_to_json(config);
  j["regenerations"] = manifest.regenerations;
  json splits = json::object();
  for (const auto& s : manifest.splits) {
    json clips = json::array();
    for (const auto* group : {&s.exo, &s.ego})
      for (const auto& r : *group) clips.push_back(record_to_json(r));
    splits[s.name] = {{"paired", s.paired}, {"clips", clips}};
  }
  j["splits"] = splits;
  std::ofstream f(out / "manifest.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (out / "manifest.json").string());
  f << j.dump(1) << '\n';
  if (!f) throw IoError("cannot write " + (out / "manifest.json").string());
  return manifest;
}

DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw IoError("no manifest.json under " + root.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  DatasetManifest m;
  try {
    m.format = j.at("format").get<std::string>();
    if (m.format != kDatasetFormat) {
      throw FormatError("unsupported dataset format '" + m.format + "', expected " + kDatasetFormat);
    }
    m.config = config_from_json(j.at("config"));
    m.regenerations = j.at("regenerations").get<int>();
    for (const auto& [name, body] : j.at("splits").items()) {
      SplitManifest s;
      s.name = name;
      s.paired = body.at("paired").get<bool>();
      for (const auto& c : body.at("clips")) {
        auto rec = record_from_json(c);
        (rec.view == View::Exo ? s.exo : s.ego).push_back(std::move(rec));
      }
      m.splits.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  return m;
}

namespace {

VideoClip load_clip(const fs::path& root, const DatasetConfig& c, const ClipRecord& r) {
  VideoClip clip;
  clip.frames = c.frames;
  clip.height = c.size;
  clip.width = c.size;
  clip.channels = 3;
  clip.view = r.view;
  clip.label = r.label;
  clip.scene_id = r.scene_seed;
  clip.rigs = r.rigs;
  clip.data = io::read_f32(root / r.file, clip.numel());
  return clip;
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.root = root;
  ds.manifest = read_manifest(root);
  const auto& c = ds.manifest.config;
  for (const auto& s : ds.manifest.splits) {
    LoadedSplit* dst = s.name == "train" ? &ds.train : s.name == "val" ? &ds.val : nullptr;
    if (!dst) continue;
    for (const auto& r : s.exo) dst->exo.push_back(load_clip(root, c, r));
    for (const auto& r : s.ego) dst->ego.push_back(load_clip(root, c, r));
  }
  return ds;
}

std::vector<float> Dataset::load_depth(const std::string& split, View view, std::size_t index) const {
  const auto& s = manifest.split(split);
  const auto& recs = view == View::Exo ? s.exo : s.ego;
  const auto& c = manifest.config;
  return io::read_f32(root / recs.at(index).depth_file,
                      static_cast<std::size_t>(c.frames) * c.size * c.size);
}

}  // namespace cvar::synth
