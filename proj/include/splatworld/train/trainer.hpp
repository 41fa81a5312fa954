#pragma once

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "splatworld/io/checkpoint.hpp"
#include "splatworld/io/dataset.hpp"
#include "splatworld/nn/optimizer.hpp"
#include "splatworld/wm/step.hpp"

namespace splatworld {

// ---------------------------------------------------------------------------
// Free-Gaussian scene fitting (no networks): optimizes raw per-primitive
// parameters against multi-view images of a single keyframe.

struct FitView {
  Camera cam;
  ImageD rgb;       // HxWx3 in [0,1]
  ImageD semantic;  // HxWx3 feature targets
  ImageD depth;     // HxW, used only for point initialization
};

struct FitOptions {
  int gaussians = 2048;
  long iterations = 5000;
  uint64_t seed = 0;
  double learning_rate = 0.01;
  double lambda_sem = 0.01;
  int threads = 1;
  long log_every = 0;                                   // 0 = silent
  std::function<void(long, double)> on_log = nullptr;   // (iteration, loss)
  Vec3<double> background = Vec3<double>::Zero();
};

struct FitResult {
  DynamicScene<float> scene;
  std::vector<double> heldout_psnr;
  double mean_heldout_psnr = 0.0;
  double final_train_loss = 0.0;
};

namespace detail {

// Raw (pre-activation) parameterization of a free Gaussian set, stored as
// named flat tensors so the shared optimizer can drive it.
struct RawScene {
  VecX<float> position, sh, rotation, log_scale, opacity_logit, semantic;

  template <class F> void visit(F&& f) {
    f(std::string("position"), position);
    f(std::string("sh"), sh);
    f(std::string("rotation"), rotation);
    f(std::string("log_scale"), log_scale);
    f(std::string("opacity_logit"), opacity_logit);
    f(std::string("semantic"), semantic);
  }

  int count() const { return int(position.size() / 3); }

  DynamicScene<float> realize(const Vec3<double>& background) const {
    const int n = count();
    DynamicScene<float> scene;
    scene.background_color = background.cast<float>();
    scene.primitives.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
      auto& g = scene.primitives[size_t(i)];
      g.position = position.segment<3>(3 * i);
      g.sh_coeffs = sh.segment<12>(12 * i);
      Vec4<float> u = rotation.segment<4>(4 * i);
      g.rotation = u / u.norm();
      for (int k = 0; k < 3; ++k) g.scale[k] = std::exp(log_scale[3 * i + k]);
      g.opacity = 1.0f / (1.0f + std::exp(-opacity_logit[i]));
      g.semantic = semantic.segment<3>(3 * i);
    }
    return scene;
  }

  // Chain rule from per-primitive gradients back to the raw tensors.
  RawScene backward(const DynamicScene<float>& scene, const SceneGrads<float>& sg) const {
    const int n = count();
    RawScene g;
    g.position = VecX<float>::Zero(3 * n);
    g.sh = VecX<float>::Zero(12 * n);
    g.rotation = VecX<float>::Zero(4 * n);
    g.log_scale = VecX<float>::Zero(3 * n);
    g.opacity_logit = VecX<float>::Zero(n);
    g.semantic = VecX<float>::Zero(3 * n);
    for (int i = 0; i < n; ++i) {
      g.position.segment<3>(3 * i) = sg.position[size_t(i)];
      g.sh.segment<12>(12 * i) = sg.sh_coeffs[size_t(i)];
      const Vec4<float> u = rotation.segment<4>(4 * i);
      const float un = u.norm();
      const Vec4<float> q = u / un;
      g.rotation.segment<4>(4 * i) =
          (sg.rotation[size_t(i)] - q * q.dot(sg.rotation[size_t(i)])) / un;
      for (int k = 0; k < 3; ++k)
        g.log_scale[3 * i + k] = sg.scale[size_t(i)][k] * scene.primitives[size_t(i)].scale[k];
      const float o = scene.primitives[size_t(i)].opacity;
      g.opacity_logit[i] = sg.opacity[size_t(i)] * o * (1.0f - o);
      g.semantic.segment<3>(3 * i) = sg.semantic[size_t(i)];
    }
    return g;
  }
};

}  // namespace detail

inline FitResult fit_scene(const std::vector<FitView>& train, const std::vector<FitView>& heldout,
                           const FitOptions& opt) {
  if (train.empty()) throw InvalidParameterError("fit_scene: need at least one training view");
  if (opt.gaussians < 1 || opt.iterations < 1)
    throw InvalidParameterError("fit_scene: gaussians and iterations must be positive");

  // Initialize positions/colors from depth-lifted surface points, cycling
  // through the training views.
  Rng rng(opt.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::vector<Vec3<double>> points;
  std::vector<Vec3<double>> colors;
  for (const FitView& v : train)
    for (int y = 0; y < v.depth.height; ++y)
      for (int x = 0; x < v.depth.width; ++x) {
        const double z = v.depth.at(x, y)[0];
        if (z <= 0.0) continue;
        points.push_back(v.cam.unproject(x + 0.5, y + 0.5, z));
        colors.push_back(Vec3<double>(v.rgb.at(x, y)[0], v.rgb.at(x, y)[1], v.rgb.at(x, y)[2]));
      }
  if (points.empty()) throw EmptySceneError("fit_scene: no depth points to initialize from");

  const int n = opt.gaussians;
  detail::RawScene raw;
  raw.position = VecX<float>::Zero(3 * n);
  raw.sh = VecX<float>::Zero(12 * n);
  raw.rotation = VecX<float>::Zero(4 * n);
  raw.log_scale = VecX<float>::Constant(3 * n, std::log(0.015f));
  raw.opacity_logit = VecX<float>::Constant(n, 0.0f);
  raw.semantic = VecX<float>::Zero(3 * n);
  std::uniform_int_distribution<size_t> pick(0, points.size() - 1);
  std::normal_distribution<double> jitter(0.0, 0.003);
  for (int i = 0; i < n; ++i) {
    const size_t s = pick(rng);
    for (int k = 0; k < 3; ++k) raw.position[3 * i + k] = float(points[s][k] + jitter(rng));
    for (int c = 0; c < 3; ++c)
      raw.sh[12 * i + 4 * c] = float((colors[s][c] - 0.5) / kSh0);
    raw.rotation[4 * i] = 1.0f;
  }

  OptimizerState<float> state;
  state.algorithm = OptAlgo::adam;
  state.learning_rate = float(opt.learning_rate);
  // Relative step sizes follow the usual splatting practice: positions and
  // shapes move slowly, appearance and opacity move fast.
  const std::map<std::string, float> lr_scale = {
      {"position", 0.02f}, {"sh", 0.25f},          {"rotation", 0.1f},
      {"log_scale", 0.5f}, {"opacity_logit", 5.0f}, {"semantic", 1.0f}};

  RasterSettings<float> settings;
  settings.background_color = opt.background.cast<float>();

  double last_loss = 0.0;
  for (long it = 0; it < opt.iterations; ++it) {
    const FitView& view = train[size_t(it) % train.size()];
    const DynamicScene<float> scene = raw.realize(opt.background);
    const ImageBundle<float> bundle = render(scene, view.cam, settings, opt.threads);

    std::vector<float> gt_rgb(view.rgb.data.begin(), view.rgb.data.end());
    std::vector<float> gt_sem(view.semantic.data.begin(), view.semantic.data.end());
    const float geo = loss_geo(bundle.rgb, gt_rgb);
    const float sem = loss_sem(bundle.feature, gt_sem);
    last_loss = double(geo) + opt.lambda_sem * double(sem);

    ImageBundle<float> grad(bundle.width, bundle.height);
    grad.rgb = loss_geo_backward(bundle.rgb, gt_rgb, 1.0f);
    grad.feature = loss_sem_backward(bundle.feature, gt_sem, float(opt.lambda_sem));
    const SceneGrads<float> sg = render_backward(scene, view.cam, settings, grad, opt.threads);
    detail::RawScene grads = raw.backward(scene, sg);

    state.begin_step();
    raw.visit([&](const std::string& name, VecX<float>& p) {
      VecX<float> g;
      grads.visit([&](const std::string& gn, VecX<float>& gv) {
        if (gn == name) g = gv;
      });
      optimizer_step(state, name, Eigen::Ref<VecX<float>>(p), g, lr_scale.at(name));
    });
    // Keep shapes in a renderable range (projected update).
    for (Eigen::Index i = 0; i < raw.log_scale.size(); ++i)
      raw.log_scale[i] = std::clamp(raw.log_scale[i], -9.2f, -0.7f);

    if (opt.log_every > 0 && opt.on_log && (it % opt.log_every == 0 || it + 1 == opt.iterations))
      opt.on_log(it, last_loss);
  }

  FitResult result;
  result.scene = raw.realize(opt.background);
  result.final_train_loss = last_loss;
  for (const FitView& v : heldout) {
    const ImageBundle<float> bundle = render(result.scene, v.cam, settings, opt.threads);
    std::vector<float> gt(v.rgb.data.begin(), v.rgb.data.end());
    result.heldout_psnr.push_back(double(psnr(bundle.rgb, gt)));
  }
  if (!result.heldout_psnr.empty()) {
    for (double p : result.heldout_psnr) result.mean_heldout_psnr += p;
    result.mean_heldout_psnr /= double(result.heldout_psnr.size());
  }
  return result;
}

// ---------------------------------------------------------------------------
// World-model training over a generated dataset.

// A consecutive keyframe pair within one episode.
struct TransitionRef {
  int now = 0;   // index into manifest.samples
  int next = 0;
  int task_id = 0;
};

inline std::vector<TransitionRef> build_transitions(const io::DatasetManifest& m) {
  std::vector<TransitionRef> out;
  for (size_t i = 0; i + 1 < m.samples.size(); ++i) {
    if (m.samples[i].episode != m.samples[i + 1].episode) continue;
    TransitionRef t;
    t.now = int(i);
    t.next = int(i + 1);
    const auto it = std::find(m.tasks.begin(), m.tasks.end(), m.samples[i].task);
    if (it == m.tasks.end()) throw IoError("dataset: sample task missing from manifest tasks");
    t.task_id = int(it - m.tasks.begin());
    out.push_back(t);
  }
  if (out.empty()) throw IoError("dataset: no consecutive keyframe pairs found");
  return out;
}

// Loads one transition from disk. cam_indices selects the supervision subset;
// index 0 (the front camera) is always prepended for voxelization.
inline TransitionSample load_transition(const std::string& dir, const io::DatasetManifest& m,
                                        const std::vector<Camera>& rig, const TransitionRef& ref,
                                        const std::vector<int>& cam_indices) {
  std::vector<int> cams = {0};
  for (int c : cam_indices)
    if (c != 0) cams.push_back(c);

  const io::SampleRecord& now = m.samples[size_t(ref.now)];
  const io::SampleRecord& next = m.samples[size_t(ref.next)];
  TransitionSample s;
  s.action = now.action;
  s.task_id = ref.task_id;

  const io::View front = io::load_view(dir, now, 0);
  s.obs.rgb = front.rgb;
  s.obs.depth = front.depth;
  s.obs.proprioception = now.proprioception;

  for (int c : cams) {
    s.cameras.push_back(rig[size_t(c)]);
    const io::View v = (c == 0) ? front : io::load_view(dir, now, c);
    s.gt_rgb.push_back(v.rgb);
    s.gt_semantic.push_back(v.semantic);
    s.gt_future_rgb.push_back(io::load_view(dir, next, c).rgb);
  }
  return s;
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw IoError("checkpoint: malformed RNG state");
}

// Parameter tensors <-> checkpoint, via the canonical visitation order.
inline io::Checkpoint snapshot(WorldModelParams<float>& params,
                               const OptimizerState<float>& opt, const io::RunConfig& config,
                               uint64_t iteration, const std::string& rng_state) {
  io::Checkpoint cp;
  cp.iteration = iteration;
  cp.config_json = io::to_json(config).dump();
  cp.rng_state = rng_state;
  cp.optimizer = opt;
  visit_params(params, [&](const std::string& name, auto view) {
    cp.tensors[name] = VecX<float>(view);
  });
  return cp;
}

inline WorldModelParams<float> restore_params(const io::Checkpoint& cp) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cp.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed embedded config: ") + e.what());
  }
  const io::RunConfig config = io::config_from_json(j);
  Rng rng(config.seed);
  WorldModelParams<float> params = make_world_model<float>(
      rng, config.voxel_resolution, config.feature_width, config.rotation_bins,
      int(config.tasks.size()), config.gaussian_cap, env::default_workspace());
  visit_params(params, [&](const std::string& name, auto view) {
    const auto it = cp.tensors.find(name);
    if (it == cp.tensors.end()) throw IoError("checkpoint: missing tensor " + name);
    if (it->second.size() != view.size())
      throw IoError("checkpoint: tensor " + name + " has wrong size");
    view = it->second;
  });
  return params;
}

struct TrainWorldOptions {
  io::RunConfig config;
  std::string dataset_dir;
  std::string out_dir;
  long checkpoint_every = 2000;
  int cameras_per_step = 3;  // supervision cameras per sample (front included)
  bool act_only = false;     // behavior cloning only: skip all rendering terms
  long log_every = 1;
  std::ostream* log = nullptr;
};

struct TrainWorldResult {
  std::string final_checkpoint;
  double final_total = 0.0;
  long iterations = 0;
};

// Joint world-model training: LAMB with a cosine learning-rate schedule,
// deformation predictor frozen for the warm-up window, per-iteration
// structured log lines, periodic self-describing checkpoints.
inline TrainWorldResult train_world(const TrainWorldOptions& opt) {
  const io::RunConfig& cfg = opt.config;
  validate(cfg);
  std::filesystem::create_directories(opt.out_dir);

  const io::DatasetManifest manifest = io::load_manifest(opt.dataset_dir);
  const std::vector<Camera> rig = io::load_cameras(opt.dataset_dir + "/cameras.json");
  const std::vector<TransitionRef> transitions = build_transitions(manifest);

  Rng rng(cfg.seed);
  WorldModelParams<float> params = make_world_model<float>(
      rng, cfg.voxel_resolution, cfg.feature_width, cfg.rotation_bins, int(cfg.tasks.size()),
      cfg.gaussian_cap, env::default_workspace());

  OptimizerState<float> state;
  state.algorithm = opt_algo_from_name(cfg.optimizer);
  state.learning_rate = float(cfg.learning_rate);
  state.weight_decay = float(cfg.weight_decay);

  LossWeights weights;
  weights.lambda_geo = cfg.lambda_geo;
  weights.lambda_sem = cfg.lambda_sem;
  weights.lambda_dyna = cfg.lambda_dyna;
  weights.warmup_iters = cfg.warmup_iters;

  RasterSettings<float> settings;
  settings.background_color = env::kBackgroundColor.cast<float>();

  Rng data_rng(cfg.seed ^ 0xda7a5eedULL);
  const int ncams = std::min<int>(std::max(1, opt.cameras_per_step), int(rig.size()));

  TrainWorldResult result;
  for (long it = 0; it < cfg.iterations; ++it) {
    WorldModelGrads<float> grads(params);
    double total = 0, act = 0, geo = 0, sem = 0, dyna = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TransitionRef& ref =
          transitions[std::uniform_int_distribution<size_t>(0, transitions.size() - 1)(data_rng)];
      std::vector<int> cams;
      for (int c = 1; c < ncams; ++c)
        cams.push_back(std::uniform_int_distribution<int>(1, int(rig.size()) - 1)(data_rng));
      const TransitionSample sample =
          load_transition(opt.dataset_dir, manifest, rig, ref, cams);

      if (opt.act_only) {
        const VoxelGrid grid =
            voxelize(sample.obs, sample.cameras[0], params.bounds, params.voxel_resolution);
        EncodeCache<float> ecache;
        const FeatureVolume<float> vol = encode_full(grid, params, &ecache);
        DecodeCache<float> dcache;
        const ActionLogits<float> logits = decode_action_full(
            vol, sample.obs.proprioception, sample.task_id, params, &dcache);
        const float a = loss_act(logits, sample.action);
        std::vector<VecX<float>> fg(vol.features.size(), VecX<float>::Zero(cfg.feature_width));
        decode_backward(params, dcache, loss_act_backward(logits, sample.action, 1.0f), grads,
                        fg);
        encode_backward(params, ecache, fg, grads);
        act += a;
        total += a;
        continue;
      }

      const StepReport<float> report = world_model_step(
          params, sample, weights, it, settings, grads, cfg.seed + uint64_t(it), cfg.threads);
      total += report.loss.total;
      act += report.loss.act;
      geo += report.loss.geo;
      sem += report.loss.sem;
      dyna += report.loss.dyna;
    }
    const float inv_batch = 1.0f / float(cfg.batch_size);
    total *= inv_batch;
    act *= inv_batch;
    geo *= inv_batch;
    sem *= inv_batch;
    dyna *= inv_batch;

    // Cosine schedule over the full run.
    const float lr_scale =
        float(0.5 * (1.0 + std::cos(M_PI * double(it) / double(cfg.iterations))));
    const bool deform_frozen = it < cfg.warmup_iters;

    double grad_sq = 0, deform_grad_sq = 0;
    visit_grads(grads, [&](const std::string& name, auto view) {
      const double sq = double(view.squaredNorm()) * double(inv_batch) * double(inv_batch);
      grad_sq += sq;
      if (name.rfind("deform", 0) == 0) deform_grad_sq += sq;
    });
    if (deform_frozen) {
      grad_sq -= deform_grad_sq;
      deform_grad_sq = 0;  // frozen: no gradient reaches the predictor
    }

    state.begin_step();
    std::string skipped;
    visit_params(params, [&](const std::string& name, auto pview) {
      if (deform_frozen && name.rfind("deform", 0) == 0) return;
      visit_grads(grads, [&](const std::string& gname, auto gview) {
        if (gname != name) return;
        VecX<float> g = gview * inv_batch;
        if (auto err =
                optimizer_step(state, name, Eigen::Ref<VecX<float>>(pview), g, lr_scale))
          skipped = *err;
      });
    });

    if (opt.log && opt.log_every > 0 && (it % opt.log_every == 0 || it + 1 == cfg.iterations)) {
      (*opt.log) << "iter=" << it << " total=" << total << " act=" << act << " geo=" << geo
                 << " sem=" << sem << " dyna=" << dyna << " lr=" << cfg.learning_rate * lr_scale
                 << " grad_norm=" << std::sqrt(grad_sq)
                 << " deform_grad_norm=" << std::sqrt(deform_grad_sq);
      if (!skipped.empty()) (*opt.log) << " skipped=\"" << skipped << "\"";
      (*opt.log) << "\n";
      opt.log->flush();
    }

    if ((opt.checkpoint_every > 0 && (it + 1) % opt.checkpoint_every == 0) ||
        it + 1 == cfg.iterations) {
      // The embedded config describes the training recipe, not where its
      // artifacts live; dropping the output path keeps checkpoints from
      // identical runs byte-identical.
      io::RunConfig snap_cfg = cfg;
      snap_cfg.out_dir = "out";
      const io::Checkpoint cp =
          snapshot(params, state, snap_cfg, uint64_t(it + 1), serialize_rng(data_rng));
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_%06ld.spwm", it + 1);
      io::save_checkpoint(cp, opt.out_dir + "/" + name);
      if (it + 1 == cfg.iterations) {
        io::save_checkpoint(cp, opt.out_dir + "/checkpoint_final.spwm");
        result.final_checkpoint = opt.out_dir + "/checkpoint_final.spwm";
      }
    }
    result.final_total = total;
  }
  result.iterations = cfg.iterations;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation: future-frame quality vs. the zero-deformation baseline, plus
// per-head behavior-cloning accuracy.

struct EvalResult {
  double future_psnr = 0.0;    // with the learned deformation
  double baseline_psnr = 0.0;  // zero deformation (current scene vs. future gt)
  double translation_accuracy = 0.0;
  double rotation_accuracy = 0.0;  // averaged over the three axes
  double openness_accuracy = 0.0;
  double collision_accuracy = 0.0;
  int transitions = 0;
};

template <class S> int argmax(const Eigen::Ref<const VecX<S>>& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return int(best);
}

inline EvalResult evaluate(const WorldModelParams<float>& params, const std::string& dataset_dir,
                           const std::vector<int>& eval_cams = {0}, int max_transitions = 0,
                           int threads = 1) {
  const io::DatasetManifest manifest = io::load_manifest(dataset_dir);
  const std::vector<Camera> rig = io::load_cameras(dataset_dir + "/cameras.json");
  std::vector<TransitionRef> transitions = build_transitions(manifest);
  if (max_transitions > 0 && int(transitions.size()) > max_transitions)
    transitions.resize(size_t(max_transitions));

  RasterSettings<float> settings;
  settings.background_color = env::kBackgroundColor.cast<float>();

  EvalResult r;
  double rot_correct = 0;
  long views = 0;
  for (const TransitionRef& ref : transitions) {
    const TransitionSample s = load_transition(dataset_dir, manifest, rig, ref, eval_cams);
    const auto roll =
        rollout_future(s.obs, s.action, s.cameras, params, settings, 0, threads);

    for (size_t c = 0; c < s.cameras.size(); ++c) {
      const std::vector<float> gt(s.gt_future_rgb[c].data.begin(),
                                  s.gt_future_rgb[c].data.end());
      r.future_psnr += double(psnr(roll.future_views[c].rgb, gt));
      r.baseline_psnr += double(psnr(roll.current_views[c].rgb, gt));
      ++views;
    }

    const VoxelGrid grid =
        voxelize(s.obs, s.cameras[0], params.bounds, params.voxel_resolution);
    const FeatureVolume<float> vol = encode(grid, params);
    const auto logits = decode_action(vol, s.obs.proprioception, s.task_id, params);
    r.translation_accuracy += argmax<float>(logits.translation) == s.action.translation_bin;
    for (int a = 0; a < 3; ++a)
      rot_correct += argmax<float>(logits.rotation.col(a)) == s.action.rotation_bins[a];
    r.openness_accuracy += argmax<float>(logits.openness) == s.action.openness;
    r.collision_accuracy += argmax<float>(logits.collision) == s.action.collision;
    ++r.transitions;
  }
  if (r.transitions > 0) {
    r.future_psnr /= double(views);
    r.baseline_psnr /= double(views);
    r.translation_accuracy /= r.transitions;
    r.rotation_accuracy = rot_correct / (3.0 * r.transitions);
    r.openness_accuracy /= r.transitions;
    r.collision_accuracy /= r.transitions;
  }
  return r;
}

}  // namespace splatworld
