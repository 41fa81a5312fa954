#pragma once

#include <vector>

#include "splatworld/train/losses.hpp"
#include "splatworld/wm/model.hpp"

namespace splatworld {

// One supervised transition: a front-camera observation at time t, multi-view
// ground truth at t and t+1, and the expert action taken in between.
// cameras[0] is the front camera (the one that produced the observation).
struct TransitionSample {
  Observation obs;
  std::vector<Camera> cameras;
  std::vector<ImageD> gt_rgb;         // per camera, frame t
  std::vector<ImageD> gt_semantic;    // per camera, frame t
  std::vector<ImageD> gt_future_rgb;  // per camera, frame t+1
  DiscreteAction action;
  int task_id = 0;
};

inline void validate(const TransitionSample& s) {
  validate(s.obs);
  if (s.cameras.empty()) throw ShapeError("transition sample: need at least one camera");
  if (s.gt_rgb.size() != s.cameras.size() || s.gt_semantic.size() != s.cameras.size() ||
      s.gt_future_rgb.size() != s.cameras.size())
    throw ShapeError("transition sample: ground truth count does not match cameras");
}

template <class S> struct StepReport {
  LossReport<S> loss;
  int gaussians = 0;
  long dropped_points = 0;
};

namespace detail {

template <class S> std::vector<S> to_vec(const ImageD& img) {
  std::vector<S> v(img.data.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = S(img.data[i]);
  return v;
}

}  // namespace detail

// One-step imagination: lift the observation, regress the scene, apply the
// action, and render both the current and the predicted next frame from
// every camera. cameras[0] is the observing camera.
template <class S> struct RolloutResult {
  DynamicScene<S> current, future;
  std::vector<ImageBundle<S>> current_views, future_views;
};

template <class S>
RolloutResult<S> rollout_future(const Observation& obs, const DiscreteAction& action,
                                const std::vector<Camera>& cams,
                                const WorldModelParams<S>& params,
                                const RasterSettings<S>& settings, uint64_t subsample_seed = 0,
                                int threads = 1) {
  if (cams.empty()) throw InvalidParameterError("rollout_future: need at least one camera");
  const VoxelGrid grid = voxelize(obs, cams[0], params.bounds, params.voxel_resolution);
  const FeatureVolume<S> vol = encode(grid, params);
  RegressCache<S> rcache;
  RolloutResult<S> out;
  out.current = regress_gaussians_full(vol, params, subsample_seed, &rcache);
  const auto deltas = predict_deformation_full(out.current, vol, rcache.picked, action, params,
                                               static_cast<DeformCache<S>*>(nullptr));
  out.future = propagate(out.current, deltas);
  for (const Camera& cam : cams) {
    out.current_views.push_back(render(out.current, cam, settings, threads));
    out.future_views.push_back(render(out.future, cam, settings, threads));
  }
  return out;
}

// Full forward and reverse pass of one training step. Losses on frame t
// (behavior cloning, photometric, semantic) always contribute gradients; the
// dynamics term is evaluated but kept out of the gradient path while
// iteration < weights.warmup_iters. Gradients accumulate into `grads`.
template <class S>
StepReport<S> world_model_step(const WorldModelParams<S>& params, const TransitionSample& sample,
                               const LossWeights& weights, long iteration,
                               const RasterSettings<S>& settings, WorldModelGrads<S>& grads,
                               uint64_t subsample_seed = 0, int threads = 1) {
  validate(sample);
  validate(weights);

  // Forward: lift, encode, regress, decode.
  const VoxelGrid grid =
      voxelize(sample.obs, sample.cameras[0], params.bounds, params.voxel_resolution);
  EncodeCache<S> ecache;
  const FeatureVolume<S> vol = encode_full(grid, params, &ecache);
  RegressCache<S> rcache;
  const DynamicScene<S> scene = regress_gaussians_full(vol, params, subsample_seed, &rcache);
  DecodeCache<S> dcache;
  const ActionLogits<S> logits =
      decode_action_full(vol, sample.obs.proprioception, sample.task_id, params, &dcache);
  const S act = loss_act(logits, sample.action);

  const size_t ncams = sample.cameras.size();
  const S per_cam = S(1) / S(ncams);
  const size_t n = scene.primitives.size();
  SceneGrads<S> scene_grads(n);
  std::vector<VecX<S>> feature_grads(vol.features.size(),
                                     VecX<S>::Zero(params.feature_width));

  // Frame-t photometric and semantic terms, camera-averaged; each camera's
  // image gradients are pushed through the renderer immediately.
  S geo = S(0), sem = S(0);
  for (size_t c = 0; c < ncams; ++c) {
    const ImageBundle<S> bundle = render(scene, sample.cameras[c], settings, threads);
    const std::vector<S> gt_rgb = detail::to_vec<S>(sample.gt_rgb[c]);
    const std::vector<S> gt_sem = detail::to_vec<S>(sample.gt_semantic[c]);
    geo += per_cam * loss_geo(bundle.rgb, gt_rgb);
    sem += per_cam * loss_sem(bundle.feature, gt_sem);
    ImageBundle<S> grad(bundle.width, bundle.height);
    grad.rgb = loss_geo_backward(bundle.rgb, gt_rgb, S(weights.lambda_geo) * per_cam);
    grad.feature = loss_sem_backward(bundle.feature, gt_sem, S(weights.lambda_sem) * per_cam);
    const SceneGrads<S> sg = render_backward(scene, sample.cameras[c], settings, grad, threads);
    for (size_t i = 0; i < n; ++i) {
      scene_grads.position[i] += sg.position[i];
      scene_grads.sh_coeffs[i] += sg.sh_coeffs[i];
      scene_grads.rotation[i] += sg.rotation[i];
      scene_grads.scale[i] += sg.scale[i];
      scene_grads.opacity[i] += sg.opacity[i];
      scene_grads.semantic[i] += sg.semantic[i];
    }
  }

  // Dynamics term on the propagated scene at t+1.
  DeformCache<S> fcache;
  const std::vector<DeformationDelta<S>> deltas =
      predict_deformation_full(scene, vol, rcache.picked, sample.action, params, &fcache);
  const DynamicScene<S> future = propagate(scene, deltas);
  const bool dyna_in_graph = iteration >= weights.warmup_iters;
  S dyna = S(0);
  SceneGrads<S> future_grads(n);
  for (size_t c = 0; c < ncams; ++c) {
    const ImageBundle<S> bundle = render(future, sample.cameras[c], settings, threads);
    const std::vector<S> gt = detail::to_vec<S>(sample.gt_future_rgb[c]);
    dyna += per_cam * loss_dyna(bundle.rgb, gt);
    if (!dyna_in_graph) continue;
    ImageBundle<S> grad(bundle.width, bundle.height);
    grad.rgb = loss_geo_backward(bundle.rgb, gt, S(weights.lambda_dyna) * per_cam);
    const SceneGrads<S> fg = render_backward(future, sample.cameras[c], settings, grad, threads);
    for (size_t i = 0; i < n; ++i) {
      future_grads.position[i] += fg.position[i];
      future_grads.sh_coeffs[i] += fg.sh_coeffs[i];
      future_grads.rotation[i] += fg.rotation[i];
      future_grads.scale[i] += fg.scale[i];
      future_grads.opacity[i] += fg.opacity[i];
      future_grads.semantic[i] += fg.semantic[i];
    }
  }
  if (dyna_in_graph) {
    std::vector<DeformationDelta<S>> delta_grads(n);
    propagate_backward(scene, deltas, future_grads, scene_grads, delta_grads);
    deform_backward(params, fcache, delta_grads, grads, scene_grads, feature_grads);
  }

  // Remaining reverse passes back to the parameters.
  decode_backward(params, dcache, loss_act_backward(logits, sample.action, S(1)), grads,
                  feature_grads);
  regress_backward(vol, params, rcache, scene, scene_grads, grads, feature_grads);
  encode_backward(params, ecache, feature_grads, grads);

  StepReport<S> report;
  report.loss = total_loss(act, geo, sem, dyna, weights, iteration);
  report.gaussians = int(n);
  report.dropped_points = grid.dropped_points;
  return report;
}

}  // namespace splatworld
