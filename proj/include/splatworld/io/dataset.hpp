#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "splatworld/env/world.hpp"
#include "splatworld/io/config.hpp"
#include "splatworld/io/pfm.hpp"
#include "splatworld/io/png.hpp"

namespace splatworld::io {

// On-disk dataset layout:
//   <dir>/manifest.json   index of all samples (paths relative to <dir>)
//   <dir>/cameras.json    the shared camera rig, index 0 = front camera
//   <dir>/config.json     generation config snapshot
//   <dir>/ep###/k##_c##_{rgb.png, depth.pfm, id.pfm}
// RGB is 8-bit PNG; depth and per-pixel object ids are lossless PFM. The
// semantic target is reconstructed from ids via env::semantic_code.

struct ViewPaths {
  std::string rgb, depth, object_id;
};

struct SampleRecord {
  int episode = 0;
  int keyframe = 0;
  std::string task;
  std::vector<ViewPaths> views;
  DiscreteAction action;
  Vec4<double> proprioception = Vec4<double>::Zero();
};

struct DatasetManifest {
  int format_version = 1;
  int image_width = 0, image_height = 0;
  int camera_count = 0;
  std::vector<std::string> tasks;
  Bounds3 workspace;
  std::vector<SampleRecord> samples;
};

inline constexpr int kManifestVersion = 1;

namespace detail {

inline nlohmann::json camera_to_json(const Camera& cam) {
  std::vector<double> rot(cam.rot.data(), cam.rot.data() + 9);  // column-major
  return nlohmann::json{{"fx", cam.fx},       {"fy", cam.fy},
                        {"cx", cam.cx},       {"cy", cam.cy},
                        {"rot", rot},         {"trans", {cam.trans[0], cam.trans[1], cam.trans[2]}},
                        {"width", cam.width}, {"height", cam.height},
                        {"near", cam.near},   {"far", cam.far}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  cam.fx = j.at("fx");
  cam.fy = j.at("fy");
  cam.cx = j.at("cx");
  cam.cy = j.at("cy");
  auto rot = j.at("rot").get<std::vector<double>>();
  if (rot.size() != 9) throw IoError("camera: rotation must have 9 entries");
  for (int i = 0; i < 9; ++i) cam.rot.data()[i] = rot[i];
  auto trans = j.at("trans").get<std::vector<double>>();
  if (trans.size() != 3) throw IoError("camera: translation must have 3 entries");
  for (int i = 0; i < 3; ++i) cam.trans[i] = trans[i];
  cam.width = j.at("width");
  cam.height = j.at("height");
  cam.near = j.at("near");
  cam.far = j.at("far");
  validate(cam);
  return cam;
}

inline nlohmann::json record_to_json(const SampleRecord& r) {
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : r.views)
    views.push_back({{"rgb", v.rgb}, {"depth", v.depth}, {"object_id", v.object_id}});
  return nlohmann::json{
      {"episode", r.episode},
      {"keyframe", r.keyframe},
      {"task", r.task},
      {"views", views},
      {"action",
       {{"translation", r.action.translation_bin},
        {"rotation", {r.action.rotation_bins[0], r.action.rotation_bins[1], r.action.rotation_bins[2]}},
        {"openness", r.action.openness},
        {"collision", r.action.collision}}},
      {"proprioception",
       {r.proprioception[0], r.proprioception[1], r.proprioception[2], r.proprioception[3]}},
  };
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
  SampleRecord r;
  r.episode = j.at("episode");
  r.keyframe = j.at("keyframe");
  r.task = j.at("task");
  for (const auto& v : j.at("views"))
    r.views.push_back({v.at("rgb"), v.at("depth"), v.at("object_id")});
  const auto& a = j.at("action");
  r.action.translation_bin = a.at("translation");
  for (int i = 0; i < 3; ++i) r.action.rotation_bins[i] = a.at("rotation").at(i);
  r.action.openness = a.at("openness");
  r.action.collision = a.at("collision");
  for (int i = 0; i < 4; ++i) r.proprioception[i] = j.at("proprioception").at(i);
  return r;
}

}  // namespace detail

inline void save_cameras(const std::vector<Camera>& cams, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const Camera& cam : cams) j.push_back(detail::camera_to_json(cam));
  std::ofstream f(path);
  if (!f) throw IoError("save_cameras: cannot open " + path);
  f << j.dump(1) << "\n";
}

inline std::vector<Camera> load_cameras(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_cameras: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_cameras: malformed JSON in " + path + ": " + e.what());
  }
  std::vector<Camera> cams;
  for (const auto& c : j) cams.push_back(detail::camera_from_json(c));
  return cams;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& r : m.samples) samples.push_back(detail::record_to_json(r));
  nlohmann::json j{
      {"format_version", m.format_version},
      {"image_width", m.image_width},
      {"image_height", m.image_height},
      {"camera_count", m.camera_count},
      {"tasks", m.tasks},
      {"workspace_min", {m.workspace.min[0], m.workspace.min[1], m.workspace.min[2]}},
      {"workspace_max", {m.workspace.max[0], m.workspace.max[1], m.workspace.max[2]}},
      {"samples", samples},
  };
  std::ofstream f(path);
  if (!f) throw IoError("save_manifest: cannot open " + path);
  f << j.dump(1) << "\n";
}

inline DatasetManifest load_manifest(const std::string& dir) {
  const std::string path = dir + "/manifest.json";
  std::ifstream f(path);
  if (!f) throw IoError("load_manifest: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_manifest: malformed JSON in " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.format_version = j.at("format_version");
  if (m.format_version != kManifestVersion)
    throw IoError("load_manifest: format version " + std::to_string(m.format_version) +
                  " unsupported (reader expects " + std::to_string(kManifestVersion) + ")");
  m.image_width = j.at("image_width");
  m.image_height = j.at("image_height");
  m.camera_count = j.at("camera_count");
  m.tasks = j.at("tasks").get<std::vector<std::string>>();
  for (int i = 0; i < 3; ++i) {
    m.workspace.min[i] = j.at("workspace_min").at(i);
    m.workspace.max[i] = j.at("workspace_max").at(i);
  }
  for (const auto& s : j.at("samples")) m.samples.push_back(detail::record_from_json(s));
  return m;
}

// One camera's ground truth for one keyframe, decoded back to training space.
struct View {
  ImageD rgb;       // HxWx3 in [0,1]
  ImageD depth;     // HxW meters
  ImageD semantic;  // HxWx3 codes
};

inline View load_view(const std::string& dir, const SampleRecord& record, int cam_index) {
  if (cam_index < 0 || cam_index >= int(record.views.size()))
    throw InvalidParameterError("load_view: camera index out of range");
  const ViewPaths& p = record.views[cam_index];
  View view;
  const Image<uint8_t> rgb8 = read_png(dir + "/" + p.rgb);
  view.rgb = ImageD(rgb8.width, rgb8.height, 3);
  for (size_t i = 0; i < rgb8.data.size(); ++i) view.rgb.data[i] = rgb8.data[i] / 255.0;
  view.depth = read_pfm(dir + "/" + p.depth).cast<double>();
  const ImageD ids = read_pfm(dir + "/" + p.object_id).cast<double>();
  view.semantic = ImageD(ids.width, ids.height, 3);
  for (int y = 0; y < ids.height; ++y)
    for (int x = 0; x < ids.width; ++x) {
      const int id = int(std::lround(ids.at(x, y)[0]));
      const Vec3<double> code = id < 0 ? Vec3<double>::Zero() : env::semantic_code(id);
      for (int c = 0; c < 3; ++c) view.semantic.at(x, y)[c] = code[c];
    }
  return view;
}

// Renders every keyframe of every scripted episode from the full rig and
// writes the layout above. Deterministic in the config.
inline DatasetManifest gen_dataset(const RunConfig& config, const std::string& dir) {
  validate(config);
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const auto rig =
      env::make_camera_rig(config.supervision_cameras, config.image_width, config.image_height);
  save_cameras(rig, dir + "/cameras.json");
  {
    std::ofstream f(dir + "/config.json");
    if (!f) throw IoError("gen_dataset: cannot open " + dir + "/config.json");
    f << to_json(config).dump(1) << "\n";
  }

  DatasetManifest manifest;
  manifest.image_width = config.image_width;
  manifest.image_height = config.image_height;
  manifest.camera_count = int(rig.size());
  manifest.tasks = config.tasks;
  manifest.workspace = env::default_workspace();

  int episode_index = 0;
  for (const std::string& task_str : config.tasks) {
    const env::Task task = env::task_from_name(task_str);
    for (int e = 0; e < config.episodes_per_task; ++e, ++episode_index) {
      const auto episode = env::script_episode(task, config.seed * 1000003 + uint64_t(e),
                                               config.voxel_resolution, config.rotation_bins);
      char epdir[32];
      std::snprintf(epdir, sizeof(epdir), "ep%03d", episode_index);
      fs::create_directories(fs::path(dir) / epdir);
      for (size_t k = 0; k < episode.keyframes.size(); ++k) {
        SampleRecord rec;
        rec.episode = episode_index;
        rec.keyframe = int(k);
        rec.task = task_str;
        rec.action = episode.keyframes[k].action;
        rec.proprioception = episode.keyframes[k].proprioception;
        for (size_t c = 0; c < rig.size(); ++c) {
          const auto img = env::raycast_render(episode.keyframes[k].state, rig[c]);
          char stem[48];
          std::snprintf(stem, sizeof(stem), "%s/k%02d_c%02d", epdir, int(k), int(c));
          ViewPaths paths{std::string(stem) + "_rgb.png", std::string(stem) + "_depth.pfm",
                          std::string(stem) + "_id.pfm"};
          write_png(to_rgb8(img.rgb), dir + "/" + paths.rgb);
          write_pfm(img.depth.cast<float>(), dir + "/" + paths.depth);
          write_pfm(img.object_id.cast<float>(), dir + "/" + paths.object_id);
          rec.views.push_back(paths);
        }
        manifest.samples.push_back(rec);
      }
    }
  }
  save_manifest(manifest, dir + "/manifest.json");
  return manifest;
}

}  // namespace splatworld::io
