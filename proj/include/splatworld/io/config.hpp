#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "splatworld/common.hpp"
#include "splatworld/nn/optimizer.hpp"

namespace splatworld::io {

// All run hyperparameters. Defaults match the reference training recipe;
// the desk-scale knobs (voxel resolution, feature width, episode counts)
// default to sizes a single core can train.
struct RunConfig {
  long iterations = 100000;
  int batch_size = 2;
  double learning_rate = 0.0005;
  double weight_decay = 1e-6;
  double lambda_geo = 0.01;
  double lambda_sem = 0.0001;
  double lambda_dyna = 0.001;
  long warmup_iters = 3000;
  int image_width = 128;
  int image_height = 128;
  int gaussian_cap = 16384;
  std::string optimizer = "lamb";
  int rotation_bins = 72;
  int voxel_resolution = 20;
  int feature_width = 64;
  int supervision_cameras = 20;
  int episodes_per_task = 20;
  std::vector<std::string> tasks = {"push_to_target", "stack_blocks", "pick_place"};
  uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
};

inline void validate(const RunConfig& c) {
  if (c.iterations < 1 || c.batch_size < 1 || c.warmup_iters < 0)
    throw InvalidParameterError("config: iteration/batch counts must be positive");
  if (!(c.learning_rate > 0) || c.weight_decay < 0)
    throw InvalidParameterError("config: bad learning rate or weight decay");
  if (c.lambda_geo < 0 || c.lambda_sem < 0 || c.lambda_dyna < 0)
    throw InvalidParameterError("config: loss weights must be non-negative");
  if (c.image_width < 1 || c.image_height < 1 || c.gaussian_cap < 1 || c.rotation_bins < 1 ||
      c.voxel_resolution < 1 || c.feature_width < 1 || c.supervision_cameras < 1 ||
      c.episodes_per_task < 1 || c.threads < 1)
    throw InvalidParameterError("config: sizes must be positive");
  opt_algo_from_name(c.optimizer);  // throws on unknown tags
  if (c.tasks.empty()) throw InvalidParameterError("config: need at least one task");
}

inline nlohmann::json to_json(const RunConfig& c) {
  return nlohmann::json{
      {"iterations", c.iterations},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"lambda_geo", c.lambda_geo},
      {"lambda_sem", c.lambda_sem},
      {"lambda_dyna", c.lambda_dyna},
      {"warmup_iters", c.warmup_iters},
      {"image_width", c.image_width},
      {"image_height", c.image_height},
      {"gaussian_cap", c.gaussian_cap},
      {"optimizer", c.optimizer},
      {"rotation_bins", c.rotation_bins},
      {"voxel_resolution", c.voxel_resolution},
      {"feature_width", c.feature_width},
      {"supervision_cameras", c.supervision_cameras},
      {"episodes_per_task", c.episodes_per_task},
      {"tasks", c.tasks},
      {"seed", c.seed},
      {"threads", c.threads},
      {"out_dir", c.out_dir},
  };
}

// Starts from defaults and overrides the keys present; unknown keys are
// rejected so config typos fail loudly.
inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  const nlohmann::json known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      throw InvalidParameterError("config: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("iterations", c.iterations);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("weight_decay", c.weight_decay);
  get("lambda_geo", c.lambda_geo);
  get("lambda_sem", c.lambda_sem);
  get("lambda_dyna", c.lambda_dyna);
  get("warmup_iters", c.warmup_iters);
  get("image_width", c.image_width);
  get("image_height", c.image_height);
  get("gaussian_cap", c.gaussian_cap);
  get("optimizer", c.optimizer);
  get("rotation_bins", c.rotation_bins);
  get("voxel_resolution", c.voxel_resolution);
  get("feature_width", c.feature_width);
  get("supervision_cameras", c.supervision_cameras);
  get("episodes_per_task", c.episodes_per_task);
  get("tasks", c.tasks);
  get("seed", c.seed);
  get("threads", c.threads);
  get("out_dir", c.out_dir);
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_config: malformed JSON in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace splatworld::io
