#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "splatworld/core/gaussian.hpp"
#include "splatworld/nn/mlp.hpp"
#include "splatworld/raster/rasterizer.hpp"
#include "splatworld/wm/action.hpp"
#include "splatworld/wm/voxel.hpp"

namespace splatworld {

// Per-occupied-voxel features with their grid coordinates.
template <class S> struct FeatureVolume {
  std::vector<int> voxels;         // flat indices, aligned with features
  std::vector<VecX<S>> features;   // width d each
  int resolution = 0;
  Bounds3 bounds;

  Vec3<double> voxel_center(int i) const {
    VoxelGrid g;
    g.resolution = resolution;
    g.bounds = bounds;
    return g.voxel_center(voxels[size_t(i)]);
  }
};

// Every learnable tensor of the world model: pointwise voxel encoder,
// Gaussian regressor heads, action-conditioned deformation predictor, and
// the pooled-feature action decoder.
template <class S> struct WorldModelParams {
  int voxel_resolution = 20;
  int feature_width = 64;
  int rotation_bins = 72;
  int task_count = 3;
  int max_gaussians = 16384;
  Bounds3 bounds;

  Mlp<S> encoder;  // 34 (10 channels + 24 posenc) -> d
  Mlp<S> offset_head, color_head, rotation_head, scale_head, opacity_head, semantic_head;
  Mlp<S> deform;   // (8 action + 3 pos + 4 rot + d) -> 7, residual trunk
  S deform_gain = S(0.01);  // meters per unit of raw position delta
  Mlp<S> decoder_trunk;     // (2d + 4 proprio + tasks) -> hidden
  Mlp<S> head_translation, head_rotation, head_openness, head_collision;
};

inline constexpr int kPosencFrequencies = 4;
inline constexpr int kEncoderInput = 10 + 3 * 2 * kPosencFrequencies;
inline constexpr int kActionEmbed = 8;

template <class S>
WorldModelParams<S> make_world_model(Rng& rng, int voxel_resolution, int feature_width,
                                     int rotation_bins, int task_count, int max_gaussians,
                                     const Bounds3& bounds) {
  validate(bounds);
  WorldModelParams<S> p;
  p.voxel_resolution = voxel_resolution;
  p.feature_width = feature_width;
  p.rotation_bins = rotation_bins;
  p.task_count = task_count;
  p.max_gaussians = max_gaussians;
  p.bounds = bounds;
  const int d = feature_width;

  p.encoder = make_mlp<S>(rng, {kEncoderInput, d, d}, {Activation::relu, Activation::identity});
  p.offset_head = make_mlp<S>(rng, {d, 3}, {Activation::identity});
  p.color_head = make_mlp<S>(rng, {d, 12}, {Activation::identity});
  p.rotation_head = make_mlp<S>(rng, {d, 4}, {Activation::identity});
  p.scale_head = make_mlp<S>(rng, {d, 3}, {Activation::identity});
  // Bias the scale head so a fresh model emits half-voxel Gaussians instead
  // of workspace-sized ones.
  const double pitch = (bounds.extent() / voxel_resolution).mean();
  p.scale_head.layers.back().bias.setConstant(S(std::log(0.5 * pitch)));
  p.opacity_head = make_mlp<S>(rng, {d, 1}, {Activation::identity});
  p.semantic_head = make_mlp<S>(rng, {d, 3}, {Activation::identity});

  p.deform = make_mlp<S>(rng, {kActionEmbed + 7 + d, d, d, 7},
                         {Activation::tanh, Activation::tanh, Activation::identity}, {{0, 1}});
  p.deform.layers.back().weights.setZero();  // warm start: exact zero deltas

  const int trunk_in = 2 * d + 4 + task_count;
  const int hidden = 128;
  p.decoder_trunk = make_mlp<S>(rng, {trunk_in, hidden, hidden},
                                {Activation::relu, Activation::relu});
  const int v3 = voxel_resolution * voxel_resolution * voxel_resolution;
  p.head_translation = make_mlp<S>(rng, {hidden, v3}, {Activation::identity});
  p.head_rotation = make_mlp<S>(rng, {hidden, 3 * rotation_bins}, {Activation::identity});
  p.head_openness = make_mlp<S>(rng, {hidden, 2}, {Activation::identity});
  p.head_collision = make_mlp<S>(rng, {hidden, 2}, {Activation::identity});
  return p;
}

// Gradient buffers, one per parameter tensor.
template <class S> struct WorldModelGrads {
  MlpGrads<S> encoder, offset_head, color_head, rotation_head, scale_head, opacity_head,
      semantic_head, deform, decoder_trunk, head_translation, head_rotation, head_openness,
      head_collision;
  S deform_gain = S(0);

  WorldModelGrads() = default;
  explicit WorldModelGrads(const WorldModelParams<S>& p)
      : encoder(p.encoder), offset_head(p.offset_head), color_head(p.color_head),
        rotation_head(p.rotation_head), scale_head(p.scale_head), opacity_head(p.opacity_head),
        semantic_head(p.semantic_head), deform(p.deform), decoder_trunk(p.decoder_trunk),
        head_translation(p.head_translation), head_rotation(p.head_rotation),
        head_openness(p.head_openness), head_collision(p.head_collision) {}

  void set_zero() {
    for (MlpGrads<S>* g : {&encoder, &offset_head, &color_head, &rotation_head, &scale_head,
                           &opacity_head, &semantic_head, &deform, &decoder_trunk,
                           &head_translation, &head_rotation, &head_openness, &head_collision})
      g->set_zero();
    deform_gain = S(0);
  }
};

namespace detail {

template <class S, class F>
void visit_mlp(const std::string& prefix, Mlp<S>& net, F&& f) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    f(prefix + ".l" + std::to_string(l) + ".weight",
      Eigen::Map<VecX<S>>(layer.weights.data(), layer.weights.size()));
    f(prefix + ".l" + std::to_string(l) + ".bias",
      Eigen::Map<VecX<S>>(layer.bias.data(), layer.bias.size()));
  }
}

template <class S, class F>
void visit_mlp_grads(const std::string& prefix, MlpGrads<S>& g, F&& f) {
  for (size_t l = 0; l < g.d_weights.size(); ++l) {
    f(prefix + ".l" + std::to_string(l) + ".weight",
      Eigen::Map<VecX<S>>(g.d_weights[l].data(), g.d_weights[l].size()));
    f(prefix + ".l" + std::to_string(l) + ".bias",
      Eigen::Map<VecX<S>>(g.d_bias[l].data(), g.d_bias[l].size()));
  }
}

}  // namespace detail

// Enumerates every named parameter tensor in a fixed order. The deformation
// predictor's tensors are exactly those whose names start with "deform".
template <class S, class F> void visit_params(WorldModelParams<S>& p, F&& f) {
  detail::visit_mlp("encoder", p.encoder, f);
  detail::visit_mlp("regressor.offset", p.offset_head, f);
  detail::visit_mlp("regressor.color", p.color_head, f);
  detail::visit_mlp("regressor.rotation", p.rotation_head, f);
  detail::visit_mlp("regressor.scale", p.scale_head, f);
  detail::visit_mlp("regressor.opacity", p.opacity_head, f);
  detail::visit_mlp("regressor.semantic", p.semantic_head, f);
  detail::visit_mlp("deform.net", p.deform, f);
  f(std::string("deform.gain"), Eigen::Map<VecX<S>>(&p.deform_gain, 1));
  detail::visit_mlp("decoder.trunk", p.decoder_trunk, f);
  detail::visit_mlp("decoder.translation", p.head_translation, f);
  detail::visit_mlp("decoder.rotation", p.head_rotation, f);
  detail::visit_mlp("decoder.openness", p.head_openness, f);
  detail::visit_mlp("decoder.collision", p.head_collision, f);
}

template <class S, class F> void visit_grads(WorldModelGrads<S>& g, F&& f) {
  detail::visit_mlp_grads("encoder", g.encoder, f);
  detail::visit_mlp_grads("regressor.offset", g.offset_head, f);
  detail::visit_mlp_grads("regressor.color", g.color_head, f);
  detail::visit_mlp_grads("regressor.rotation", g.rotation_head, f);
  detail::visit_mlp_grads("regressor.scale", g.scale_head, f);
  detail::visit_mlp_grads("regressor.opacity", g.opacity_head, f);
  detail::visit_mlp_grads("regressor.semantic", g.semantic_head, f);
  detail::visit_mlp_grads("deform.net", g.deform, f);
  f(std::string("deform.gain"), Eigen::Map<VecX<S>>(&g.deform_gain, 1));
  detail::visit_mlp_grads("decoder.trunk", g.decoder_trunk, f);
  detail::visit_mlp_grads("decoder.translation", g.head_translation, f);
  detail::visit_mlp_grads("decoder.rotation", g.head_rotation, f);
  detail::visit_mlp_grads("decoder.openness", g.head_openness, f);
  detail::visit_mlp_grads("decoder.collision", g.head_collision, f);
}

// ---------------------------------------------------------------------------
// Encoder

namespace detail {

template <class S> VecX<S> encoder_input(const Eigen::Matrix<double, 10, 1>& channels) {
  VecX<S> x(kEncoderInput);
  for (int i = 0; i < 10; ++i) x[i] = S(channels[i]);
  int k = 10;
  for (int c = 0; c < 3; ++c) {
    const double coord = channels[3 + c];
    for (int f = 0; f < kPosencFrequencies; ++f) {
      const double w = std::pow(2.0, f) * M_PI * coord;
      x[k++] = S(std::sin(w));
      x[k++] = S(std::cos(w));
    }
  }
  return x;
}

}  // namespace detail

template <class S> struct EncodeCache {
  std::vector<VecX<S>> inputs;
  std::vector<MlpCache<S>> caches;
};

template <class S>
FeatureVolume<S> encode_full(const VoxelGrid& grid, const WorldModelParams<S>& params,
                             EncodeCache<S>* cache) {
  FeatureVolume<S> vol;
  vol.voxels = grid.voxels;
  vol.resolution = grid.resolution;
  vol.bounds = grid.bounds;
  vol.features.reserve(grid.voxels.size());
  if (cache) {
    cache->inputs.reserve(grid.voxels.size());
    cache->caches.reserve(grid.voxels.size());
  }
  for (size_t i = 0; i < grid.voxels.size(); ++i) {
    VecX<S> x = detail::encoder_input<S>(grid.channels[i]);
    auto [y, c] = mlp_forward(params.encoder, x);
    vol.features.push_back(std::move(y));
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->caches.push_back(std::move(c));
    }
  }
  return vol;
}

template <class S>
FeatureVolume<S> encode(const VoxelGrid& grid, const WorldModelParams<S>& params) {
  return encode_full(grid, params, static_cast<EncodeCache<S>*>(nullptr));
}

template <class S>
void encode_backward(const WorldModelParams<S>& params, const EncodeCache<S>& cache,
                     const std::vector<VecX<S>>& feature_grads, WorldModelGrads<S>& grads) {
  if (feature_grads.size() != cache.caches.size())
    throw ShapeError("encode_backward: gradient count mismatch");
  for (size_t i = 0; i < cache.caches.size(); ++i)
    mlp_backward(params.encoder, cache.caches[i], feature_grads[i], grads.encoder);
}

// ---------------------------------------------------------------------------
// Gaussian regressor

template <class S> struct RegressCache {
  std::vector<int> picked;  // indices into the feature volume
  std::vector<MlpCache<S>> offset, color, rotation, scale, opacity, semantic;
};

template <class S>
DynamicScene<S> regress_gaussians_full(const FeatureVolume<S>& vol,
                                       const WorldModelParams<S>& params, uint64_t seed,
                                       RegressCache<S>* cache) {
  if (vol.features.empty()) throw EmptySceneError("regress_gaussians: empty feature volume");
  std::vector<int> picked(vol.features.size());
  std::iota(picked.begin(), picked.end(), 0);
  if (int(picked.size()) > params.max_gaussians) {
    // Seeded partial Fisher-Yates, then restored to volume order.
    Rng rng(seed ^ 0x5eedc0de);
    for (int i = 0; i < params.max_gaussians; ++i) {
      std::uniform_int_distribution<int> u(i, int(picked.size()) - 1);
      std::swap(picked[size_t(i)], picked[size_t(u(rng))]);
    }
    picked.resize(size_t(params.max_gaussians));
    std::sort(picked.begin(), picked.end());
  }

  const Vec3<double> pitch = vol.bounds.extent() / vol.resolution;
  const Vec3<double> scale_hi = 0.5 * vol.bounds.extent();

  DynamicScene<S> scene;
  scene.primitives.reserve(picked.size());
  if (cache) cache->picked = picked;
  for (int vi : picked) {
    const VecX<S>& f = vol.features[size_t(vi)];
    auto run = [&](const Mlp<S>& head, std::vector<MlpCache<S>>* store) {
      auto [y, c] = mlp_forward(head, f);
      if (store) store->push_back(std::move(c));
      return y;
    };
    const VecX<S> o = run(params.offset_head, cache ? &cache->offset : nullptr);
    const VecX<S> col = run(params.color_head, cache ? &cache->color : nullptr);
    const VecX<S> rq = run(params.rotation_head, cache ? &cache->rotation : nullptr);
    const VecX<S> sc = run(params.scale_head, cache ? &cache->scale : nullptr);
    const VecX<S> op = run(params.opacity_head, cache ? &cache->opacity : nullptr);
    const VecX<S> sem = run(params.semantic_head, cache ? &cache->semantic : nullptr);

    GaussianPrimitive<S> g;
    const Vec3<double> center = vol.voxel_center(vi);
    for (int k = 0; k < 3; ++k)
      g.position[k] = S(center[k]) + S(pitch[k]) * std::tanh(o[k]);
    for (int k = 0; k < 12; ++k) g.sh_coeffs[k] = col[k];
    Vec4<S> u(S(1) + rq[0], rq[1], rq[2], rq[3]);
    const S un = u.norm();
    if (!(un > S(1e-12)))
      throw DegenerateRotationError("regress_gaussians: rotation head output cancels identity");
    g.rotation = u / un;
    for (int k = 0; k < 3; ++k)
      g.scale[k] = std::min(S(scale_hi[k]), std::max(S(1e-4), std::exp(sc[k])));
    g.opacity = S(1) / (S(1) + std::exp(-op[0]));
    g.semantic = Vec3<S>(sem[0], sem[1], sem[2]);
    scene.primitives.push_back(g);
  }
  return scene;
}

template <class S>
DynamicScene<S> regress_gaussians(const FeatureVolume<S>& vol, const WorldModelParams<S>& params,
                                  uint64_t seed = 0) {
  return regress_gaussians_full(vol, params, seed, static_cast<RegressCache<S>*>(nullptr));
}

// Routes gradients on the regressed primitives back through the activation
// layer and the six heads, accumulating per-voxel feature gradients.
template <class S>
void regress_backward(const FeatureVolume<S>& vol, const WorldModelParams<S>& params,
                      const RegressCache<S>& cache, const DynamicScene<S>& scene,
                      const SceneGrads<S>& sg, WorldModelGrads<S>& grads,
                      std::vector<VecX<S>>& feature_grads) {
  const Vec3<double> pitch = vol.bounds.extent() / vol.resolution;
  const Vec3<double> scale_hi = 0.5 * vol.bounds.extent();
  for (size_t i = 0; i < cache.picked.size(); ++i) {
    const int vi = cache.picked[i];
    const auto& g = scene.primitives[i];
    VecX<S>& fg = feature_grads[size_t(vi)];

    // offset: position = center + pitch * tanh(raw)
    VecX<S> d_off(3);
    for (int k = 0; k < 3; ++k) {
      const S t = std::tanh(cache.offset[i].out.back()[k]);
      d_off[k] = sg.position[i][k] * S(pitch[k]) * (S(1) - t * t);
    }
    fg += mlp_backward(params.offset_head, cache.offset[i], d_off, grads.offset_head);

    // color / semantic: identity heads
    VecX<S> d_col = sg.sh_coeffs[i];
    fg += mlp_backward(params.color_head, cache.color[i], d_col, grads.color_head);
    VecX<S> d_sem(3);
    for (int k = 0; k < 3; ++k) d_sem[k] = sg.semantic[i][k];
    fg += mlp_backward(params.semantic_head, cache.semantic[i], d_sem, grads.semantic_head);

    // rotation: q = u / |u|, u = e0 + raw
    {
      const VecX<S>& raw = cache.rotation[i].out.back();
      Vec4<S> u(S(1) + raw[0], raw[1], raw[2], raw[3]);
      const S un = u.norm();
      const Vec4<S> q = u / un;
      Vec4<S> gq = sg.rotation[i];
      Vec4<S> gu = (gq - q * q.dot(gq)) / un;
      VecX<S> d_rot(4);
      for (int k = 0; k < 4; ++k) d_rot[k] = gu[k];
      fg += mlp_backward(params.rotation_head, cache.rotation[i], d_rot, grads.rotation_head);
    }

    // scale: s = clamp(exp(raw)); zero gradient where the clamp is active
    {
      const VecX<S>& raw = cache.scale[i].out.back();
      VecX<S> d_sc(3);
      for (int k = 0; k < 3; ++k) {
        const S e = std::exp(raw[k]);
        const bool clamped = e <= S(1e-4) || e >= S(scale_hi[k]);
        d_sc[k] = clamped ? S(0) : sg.scale[i][k] * e;
      }
      fg += mlp_backward(params.scale_head, cache.scale[i], d_sc, grads.scale_head);
    }

    // opacity: sigmoid
    {
      VecX<S> d_op(1);
      d_op[0] = sg.opacity[i] * g.opacity * (S(1) - g.opacity);
      fg += mlp_backward(params.opacity_head, cache.opacity[i], d_op, grads.opacity_head);
    }
  }
}

// ---------------------------------------------------------------------------
// Deformation predictor

template <class S>
VecX<S> embed_action(const DiscreteAction& action, const WorldModelParams<S>& params) {
  validate(action,
           params.voxel_resolution * params.voxel_resolution * params.voxel_resolution,
           params.rotation_bins);
  const Vec3<double> target =
      unbin_translation(action.translation_bin, params.bounds, params.voxel_resolution);
  const Vec3<double> extent = params.bounds.extent();
  VecX<S> e(kActionEmbed);
  for (int k = 0; k < 3; ++k) e[k] = S((target[k] - params.bounds.min[k]) / extent[k]);
  for (int a = 0; a < 3; ++a)
    e[3 + a] = S(unbin_rotation(action.rotation_bins[a], params.rotation_bins) / M_PI);
  e[6] = S(action.openness);
  e[7] = S(action.collision);
  return e;
}

template <class S> struct DeformCache {
  VecX<S> embed;
  std::vector<MlpCache<S>> caches;
  std::vector<int> picked;  // voxel index per gaussian (for feature grads)
};

template <class S>
std::vector<DeformationDelta<S>> predict_deformation_full(
    const DynamicScene<S>& scene, const FeatureVolume<S>& vol,
    const std::vector<int>& picked, const DiscreteAction& action,
    const WorldModelParams<S>& params, DeformCache<S>* cache) {
  if (scene.primitives.size() != picked.size())
    throw ShapeError("predict_deformation: scene/volume are not aligned");
  const VecX<S> e = embed_action(action, params);
  const int d = params.feature_width;
  std::vector<DeformationDelta<S>> deltas(scene.primitives.size());
  if (cache) {
    cache->embed = e;
    cache->picked = picked;
    cache->caches.reserve(scene.primitives.size());
  }
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& g = scene.primitives[i];
    const VecX<S>& f = vol.features[size_t(picked[i])];
    VecX<S> x(kActionEmbed + 7 + d);
    x.head(kActionEmbed) = e;
    for (int k = 0; k < 3; ++k) x[kActionEmbed + k] = g.position[k];
    for (int k = 0; k < 4; ++k) x[kActionEmbed + 3 + k] = g.rotation[k];
    x.tail(d) = f;
    auto [y, c] = mlp_forward(params.deform, x);
    for (int k = 0; k < 3; ++k) deltas[i].d_position[k] = params.deform_gain * y[k];
    for (int k = 0; k < 4; ++k) deltas[i].d_rotation[k] = y[3 + k];
    if (cache) cache->caches.push_back(std::move(c));
  }
  return deltas;
}

template <class S>
std::vector<DeformationDelta<S>> predict_deformation(const DynamicScene<S>& scene,
                                                     const FeatureVolume<S>& vol,
                                                     const DiscreteAction& action,
                                                     const WorldModelParams<S>& params) {
  if (scene.primitives.size() != vol.features.size())
    throw ShapeError("predict_deformation: scene/volume are not aligned");
  std::vector<int> picked(scene.primitives.size());
  std::iota(picked.begin(), picked.end(), 0);
  return predict_deformation_full(scene, vol, picked, action, params,
                                  static_cast<DeformCache<S>*>(nullptr));
}

// Gradients on the predicted deltas flow into the deformation network, its
// gain, and back into the per-gaussian inputs (position, rotation, feature).
template <class S>
void deform_backward(const WorldModelParams<S>& params, const DeformCache<S>& cache,
                     const std::vector<DeformationDelta<S>>& delta_grads,
                     WorldModelGrads<S>& grads, SceneGrads<S>& scene_grads,
                     std::vector<VecX<S>>& feature_grads) {
  const int d = params.feature_width;
  for (size_t i = 0; i < cache.caches.size(); ++i) {
    VecX<S> gy(7);
    for (int k = 0; k < 3; ++k) {
      const S raw = cache.caches[i].out.back()[k];
      grads.deform_gain += delta_grads[i].d_position[k] * raw;
      gy[k] = delta_grads[i].d_position[k] * params.deform_gain;
    }
    for (int k = 0; k < 4; ++k) gy[3 + k] = delta_grads[i].d_rotation[k];
    VecX<S> gx = mlp_backward(params.deform, cache.caches[i], gy, grads.deform);
    for (int k = 0; k < 3; ++k) scene_grads.position[i][k] += gx[kActionEmbed + k];
    for (int k = 0; k < 4; ++k) scene_grads.rotation[i][k] += gx[kActionEmbed + 3 + k];
    feature_grads[size_t(cache.picked[i])] += gx.tail(d);
  }
}

// Gradients through propagate(): position adds pass straight through; the
// rotation renormalization projects out the radial component.
template <class S>
void propagate_backward(const DynamicScene<S>& scene,
                        const std::vector<DeformationDelta<S>>& deltas,
                        const SceneGrads<S>& future, SceneGrads<S>& source,
                        std::vector<DeformationDelta<S>>& delta_grads) {
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    source.position[i] += future.position[i];
    delta_grads[i].d_position += future.position[i];
    const Vec4<S> u = scene.primitives[i].rotation + deltas[i].d_rotation;
    const S un = u.norm();
    const Vec4<S> q = u / un;
    const Vec4<S> gu = (future.rotation[i] - q * q.dot(future.rotation[i])) / un;
    source.rotation[i] += gu;
    delta_grads[i].d_rotation += gu;
    source.sh_coeffs[i] += future.sh_coeffs[i];
    source.scale[i] += future.scale[i];
    source.opacity[i] += future.opacity[i];
    source.semantic[i] += future.semantic[i];
  }
}

// ---------------------------------------------------------------------------
// Action decoder

template <class S> struct DecodeCache {
  VecX<S> input;
  std::vector<int> argmax;  // winner per max-pool component
  size_t count = 0;
  MlpCache<S> trunk, translation, rotation, openness, collision;
};

template <class S>
ActionLogits<S> decode_action_full(const FeatureVolume<S>& vol, const Vec4<double>& proprio,
                                   int task_id, const WorldModelParams<S>& params,
                                   DecodeCache<S>* cache) {
  if (vol.features.empty()) throw EmptySceneError("decode_action: empty feature volume");
  if (task_id < 0 || task_id >= params.task_count)
    throw InvalidParameterError("decode_action: task id out of range");
  const int d = params.feature_width;
  VecX<S> mean = VecX<S>::Zero(d);
  VecX<S> mx = vol.features[0];
  std::vector<int> argmax(size_t(d), 0);
  for (size_t i = 0; i < vol.features.size(); ++i) {
    mean += vol.features[i];
    if (i > 0)
      for (int k = 0; k < d; ++k)
        if (vol.features[i][k] > mx[k]) {
          mx[k] = vol.features[i][k];
          argmax[size_t(k)] = int(i);
        }
  }
  mean /= S(vol.features.size());

  VecX<S> x(2 * d + 4 + params.task_count);
  x.head(d) = mean;
  x.segment(d, d) = mx;
  for (int k = 0; k < 4; ++k) x[2 * d + k] = S(proprio[k]);
  for (int t = 0; t < params.task_count; ++t) x[2 * d + 4 + t] = S(t == task_id ? 1 : 0);

  auto [h, trunk_cache] = mlp_forward(params.decoder_trunk, x);
  auto [lt, ct] = mlp_forward(params.head_translation, h);
  auto [lr, cr] = mlp_forward(params.head_rotation, h);
  auto [lo, co] = mlp_forward(params.head_openness, h);
  auto [lc, cc] = mlp_forward(params.head_collision, h);

  ActionLogits<S> out;
  out.translation = lt;
  out.rotation = MatX<S>(params.rotation_bins, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < params.rotation_bins; ++b)
      out.rotation(b, a) = lr[a * params.rotation_bins + b];
  out.openness = Vec2<S>(lo[0], lo[1]);
  out.collision = Vec2<S>(lc[0], lc[1]);
  if (cache) {
    cache->input = std::move(x);
    cache->argmax = std::move(argmax);
    cache->count = vol.features.size();
    cache->trunk = std::move(trunk_cache);
    cache->translation = std::move(ct);
    cache->rotation = std::move(cr);
    cache->openness = std::move(co);
    cache->collision = std::move(cc);
  }
  return out;
}

template <class S>
ActionLogits<S> decode_action(const FeatureVolume<S>& vol, const Vec4<double>& proprio,
                              int task_id, const WorldModelParams<S>& params) {
  return decode_action_full(vol, proprio, task_id, params, static_cast<DecodeCache<S>*>(nullptr));
}

template <class S>
void decode_backward(const WorldModelParams<S>& params, const DecodeCache<S>& cache,
                     const ActionLogits<S>& logit_grads, WorldModelGrads<S>& grads,
                     std::vector<VecX<S>>& feature_grads) {
  const int d = params.feature_width;
  VecX<S> lr(3 * params.rotation_bins);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < params.rotation_bins; ++b)
      lr[a * params.rotation_bins + b] = logit_grads.rotation(b, a);
  VecX<S> gh = mlp_backward(params.head_translation, cache.translation, logit_grads.translation,
                            grads.head_translation);
  gh += mlp_backward(params.head_rotation, cache.rotation, lr, grads.head_rotation);
  gh += mlp_backward(params.head_openness, cache.openness, VecX<S>(logit_grads.openness),
                     grads.head_openness);
  gh += mlp_backward(params.head_collision, cache.collision, VecX<S>(logit_grads.collision),
                     grads.head_collision);
  VecX<S> gx = mlp_backward(params.decoder_trunk, cache.trunk, gh, grads.decoder_trunk);
  const VecX<S> gmean = gx.head(d) / S(cache.count);
  for (size_t i = 0; i < feature_grads.size(); ++i) feature_grads[i] += gmean;
  for (int k = 0; k < d; ++k) feature_grads[size_t(cache.argmax[size_t(k)])][k] += gx[d + k];
}

// ---------------------------------------------------------------------------
// Rollout

// Applies a sequence of actions, re-predicting deltas from the evolving scene
// each step. The feature volume stays fixed (one observation, many futures).
template <class S>
DynamicScene<S> rollout_scene(const DynamicScene<S>& scene, const FeatureVolume<S>& vol,
                               const std::vector<DiscreteAction>& actions,
                               const WorldModelParams<S>& params) {
  DynamicScene<S> cur = scene;
  for (const DiscreteAction& a : actions)
    cur = propagate(cur, predict_deformation(cur, vol, a, params));
  return cur;
}

}  // namespace splatworld
