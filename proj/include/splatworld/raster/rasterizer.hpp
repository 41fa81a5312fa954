#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "splatworld/core/camera.hpp"
#include "splatworld/core/gaussian.hpp"

namespace splatworld {

template <class S> struct RasterSettings {
  int tile_size = 16;
  S alpha_threshold = S(1.0 / 255.0);  // minimum alpha contribution
  S transmittance_floor = S(1e-4);     // early stop when T drops below this
  Vec3<S> background_color = Vec3<S>::Zero();
  S lowpass_eps = S(0.3);  // px^2 added to the 2D covariance diagonal
};

template <class S> void validate(const RasterSettings<S>& s) {
  if (s.tile_size < 1) throw InvalidParameterError("raster settings: tile_size must be >= 1");
  if (!(s.alpha_threshold > S(0)) || !(s.alpha_threshold < S(1)) ||
      !(s.transmittance_floor > S(0)) || !(s.transmittance_floor < S(1)))
    throw InvalidParameterError("raster settings: thresholds must lie in (0,1)");
}

template <class S> struct ImageBundle {
  int width = 0, height = 0;
  std::vector<S> rgb;      // H*W*3
  std::vector<S> feature;  // H*W*3
  std::vector<S> depth;    // H*W
  std::vector<S> alpha;    // H*W

  ImageBundle() = default;
  ImageBundle(int w, int h)
      : width(w), height(h), rgb(size_t(w) * h * 3, S(0)), feature(size_t(w) * h * 3, S(0)),
        depth(size_t(w) * h, S(0)), alpha(size_t(w) * h, S(0)) {}
};

template <class S> struct SceneGrads {
  std::vector<Vec3<S>> position;
  std::vector<Eigen::Matrix<S, 12, 1>> sh_coeffs;
  std::vector<Vec4<S>> rotation;
  std::vector<Vec3<S>> scale;
  std::vector<S> opacity;
  std::vector<Vec3<S>> semantic;

  explicit SceneGrads(size_t n = 0)
      : position(n, Vec3<S>::Zero()), sh_coeffs(n, Eigen::Matrix<S, 12, 1>::Zero()),
        rotation(n, Vec4<S>::Zero()), scale(n, Vec3<S>::Zero()), opacity(n, S(0)),
        semantic(n, Vec3<S>::Zero()) {}
};

struct RenderStats {
  int culled = 0;
  int singular_skipped = 0;
};

template <class S> struct Projected {
  Vec2<S> mean2d;
  Mat2<S> cov2d;
  S depth;
};

namespace detail {

// Everything render needs per visible gaussian, in global front-to-back order.
template <class S> struct Prepared {
  int index;  // original primitive index
  Vec2<S> mean2d;
  S conic00, conic01, conic11;  // inverse 2D covariance
  Mat2<S> cov2d;
  Vec3<S> tcam;   // camera-space position
  S depth;        // tcam.z
  Vec3<S> rgb;    // post-clamp SH color
  Vec3<S> rgb_pre;
  Vec3<S> viewdir;
  S viewdist;
  Vec3<S> feature;
  S opacity;
  int x0, x1, y0, y1;  // inclusive pixel rect of the 3-sigma footprint
};

// Integer footprint rect from the projected covariance. Shared by the tiled
// renderer and kept simple so an independent oracle can reproduce it exactly.
template <class S>
inline void footprint_rect(const Vec2<S>& mean2d, const Mat2<S>& cov2d, int& x0, int& x1, int& y0,
                           int& y1) {
  const S mid = (cov2d(0, 0) + cov2d(1, 1)) / S(2);
  const S det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
  S disc = mid * mid - det;
  if (disc < S(0)) disc = S(0);
  const S lmax = mid + std::sqrt(disc);
  const S radius = std::ceil(S(3) * std::sqrt(lmax));
  x0 = int(std::floor(double(mean2d[0] - radius)));
  x1 = int(std::ceil(double(mean2d[0] + radius)));
  y0 = int(std::floor(double(mean2d[1] - radius)));
  y1 = int(std::ceil(double(mean2d[1] + radius)));
}

}  // namespace detail

// EWA projection of one primitive. Returns nullopt if the primitive is culled
// (out of the depth range or footprint entirely off-screen).
template <class S>
std::optional<Projected<S>> project_gaussian(const GaussianPrimitive<S>& p, const Camera& cam,
                                             S lowpass_eps = S(0.3)) {
  validate(cam);
  const Mat3<S> w = cam.rot.cast<S>();
  const Vec3<S> t = w * p.position + cam.trans.cast<S>();
  if (!(t[2] > S(cam.near)) || !(t[2] < S(cam.far))) return std::nullopt;
  const S fx = S(cam.fx), fy = S(cam.fy);
  Vec2<S> mean2d(fx * t[0] / t[2] + S(cam.cx), fy * t[1] / t[2] + S(cam.cy));

  Eigen::Matrix<S, 2, 3> jac;
  jac << fx / t[2], S(0), -fx * t[0] / (t[2] * t[2]), S(0), fy / t[2], -fy * t[1] / (t[2] * t[2]);
  const Eigen::Matrix<S, 2, 3> m = jac * w;
  Mat2<S> cov2d = m * covariance3d(p.rotation, p.scale) * m.transpose();
  cov2d(0, 0) += lowpass_eps;
  cov2d(1, 1) += lowpass_eps;

  int x0, x1, y0, y1;
  detail::footprint_rect(mean2d, cov2d, x0, x1, y0, y1);
  if (x1 < 0 || y1 < 0 || x0 >= cam.width || y0 >= cam.height) return std::nullopt;
  return Projected<S>{mean2d, cov2d, t[2]};
}

namespace detail {

template <class S>
std::vector<Prepared<S>> prepare_scene(const DynamicScene<S>& scene, const Camera& cam,
                                       const RasterSettings<S>& settings, RenderStats* stats) {
  const Vec3<S> eye = cam.center().cast<S>();
  std::vector<Prepared<S>> out;
  out.reserve(scene.primitives.size());
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    auto proj = project_gaussian(p, cam, settings.lowpass_eps);
    if (!proj) {
      if (stats) stats->culled++;
      continue;
    }
    const S det =
        proj->cov2d(0, 0) * proj->cov2d(1, 1) - proj->cov2d(0, 1) * proj->cov2d(1, 0);
    if (det < S(1e-12)) {
      if (stats) stats->singular_skipped++;
      continue;
    }
    Prepared<S> g;
    g.index = int(i);
    g.mean2d = proj->mean2d;
    g.cov2d = proj->cov2d;
    g.conic00 = proj->cov2d(1, 1) / det;
    g.conic01 = -proj->cov2d(0, 1) / det;
    g.conic11 = proj->cov2d(0, 0) / det;
    g.tcam = cam.rot.cast<S>() * p.position + cam.trans.cast<S>();
    g.depth = proj->depth;
    Vec3<S> dvec = p.position - eye;
    g.viewdist = dvec.norm();
    g.viewdir = g.viewdist > S(0) ? Vec3<S>(dvec / g.viewdist) : Vec3<S>(S(0), S(0), S(1));
    const Vec4<S> basis = sh_basis(g.viewdir);
    for (int c = 0; c < 3; ++c) {
      g.rgb_pre[c] = p.sh_coeffs.template segment<4>(4 * c).dot(basis) + S(0.5);
      g.rgb[c] = g.rgb_pre[c] > S(0) ? g.rgb_pre[c] : S(0);
    }
    g.feature = p.semantic;
    g.opacity = p.opacity;
    footprint_rect(g.mean2d, g.cov2d, g.x0, g.x1, g.y0, g.y1);
    out.push_back(g);
  }
  // Global front-to-back order, ties broken by primitive index.
  std::stable_sort(out.begin(), out.end(), [](const Prepared<S>& a, const Prepared<S>& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  return out;
}

// Gaussians overlapping each tile, in global sorted order.
template <class S>
std::vector<std::vector<int>> bin_tiles(const std::vector<Prepared<S>>& prepared, int width,
                                        int height, int tile_size, int& tiles_x, int& tiles_y) {
  tiles_x = (width + tile_size - 1) / tile_size;
  tiles_y = (height + tile_size - 1) / tile_size;
  std::vector<std::vector<int>> lists(size_t(tiles_x) * tiles_y);
  for (size_t k = 0; k < prepared.size(); ++k) {
    const auto& g = prepared[k];
    int tx0 = std::max(0, g.x0 / tile_size);
    int tx1 = std::min(tiles_x - 1, std::max(0, g.x1) / tile_size);
    int ty0 = std::max(0, g.y0 / tile_size);
    int ty1 = std::min(tiles_y - 1, std::max(0, g.y1) / tile_size);
    if (g.x1 < 0 || g.y1 < 0 || g.x0 >= width || g.y0 >= height) continue;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) lists[size_t(ty) * tiles_x + tx].push_back(int(k));
  }
  return lists;
}

}  // namespace detail

// Front-to-back alpha compositing of the scene into RGB, semantic feature,
// depth and alpha channels. Tiling is a pure acceleration structure: every
// pixel composites the same contributions in the same order as a single
// global loop, so results are identical for any thread count.
template <class S>
ImageBundle<S> render(const DynamicScene<S>& scene, const Camera& cam,
                      const RasterSettings<S>& settings, int threads = 1,
                      RenderStats* stats = nullptr) {
  validate(cam);
  validate(settings);
  ImageBundle<S> out(cam.width, cam.height);
  auto prepared = detail::prepare_scene(scene, cam, settings, stats);
  int tiles_x, tiles_y;
  auto lists = detail::bin_tiles(prepared, cam.width, cam.height, settings.tile_size, tiles_x,
                                 tiles_y);

  parallel_for(lists.size(), threads, [&](size_t tile) {
    const int tx = int(tile) % tiles_x, ty = int(tile) / tiles_x;
    const int px0 = tx * settings.tile_size;
    const int py0 = ty * settings.tile_size;
    const int px1 = std::min(cam.width, px0 + settings.tile_size);
    const int py1 = std::min(cam.height, py0 + settings.tile_size);
    const auto& list = lists[tile];
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const S pxc = S(px) + S(0.5), pyc = S(py) + S(0.5);
        S transmittance = S(1);
        Vec3<S> rgb = Vec3<S>::Zero(), feat = Vec3<S>::Zero();
        S depth = S(0);
        for (int k : list) {
          const auto& g = prepared[k];
          if (px < g.x0 || px > g.x1 || py < g.y0 || py > g.y1) continue;
          const S dx = pxc - g.mean2d[0], dy = pyc - g.mean2d[1];
          const S q = g.conic00 * dx * dx + S(2) * g.conic01 * dx * dy + g.conic11 * dy * dy;
          S a = g.opacity * std::exp(S(-0.5) * q);
          if (a > S(0.99)) a = S(0.99);
          if (a < settings.alpha_threshold) continue;
          rgb += transmittance * a * g.rgb;
          feat += transmittance * a * g.feature;
          depth += transmittance * a * g.depth;
          transmittance *= (S(1) - a);
          if (transmittance < settings.transmittance_floor) break;
        }
        const size_t pi = size_t(py) * cam.width + px;
        const S alpha = S(1) - transmittance;
        rgb += transmittance * settings.background_color;
        for (int c = 0; c < 3; ++c) {
          out.rgb[pi * 3 + c] = rgb[c];
          out.feature[pi * 3 + c] = feat[c];
        }
        out.depth[pi] = depth;
        out.alpha[pi] = alpha;
      }
    }
  });
  return out;
}

// Exact reverse-mode gradients of render() with respect to every primitive
// parameter. Skip and early-stop branches match the forward pass, so skipped
// contributions carry zero gradient. Gradient accumulation is reduced in a
// fixed tile order and therefore deterministic for any thread count.
template <class S>
SceneGrads<S> render_backward(const DynamicScene<S>& scene, const Camera& cam,
                              const RasterSettings<S>& settings, const ImageBundle<S>& grad,
                              int threads = 1) {
  validate(cam);
  validate(settings);
  const size_t hw = size_t(cam.width) * cam.height;
  if (grad.width != cam.width || grad.height != cam.height || grad.rgb.size() != hw * 3 ||
      grad.feature.size() != hw * 3 || grad.depth.size() != hw || grad.alpha.size() != hw)
    throw ShapeError("render_backward: gradient bundle shape does not match the camera");

  SceneGrads<S> grads(scene.primitives.size());
  auto prepared = detail::prepare_scene(scene, cam, settings, nullptr);
  if (prepared.empty()) return grads;
  int tiles_x, tiles_y;
  auto lists = detail::bin_tiles(prepared, cam.width, cam.height, settings.tile_size, tiles_x,
                                 tiles_y);

  // Per-prepared-gaussian image-space gradients: mean2d(2), conic(3),
  // rgb(3), feature(3), depth value(1), opacity(1).
  struct Grad2D {
    S mx = 0, my = 0, l00 = 0, l01 = 0, l11 = 0;
    Vec3<S> rgb = Vec3<S>::Zero(), feat = Vec3<S>::Zero();
    S depthval = 0, opacity = 0;
  };
  std::vector<std::vector<Grad2D>> tile_grads(lists.size());

  parallel_for(lists.size(), threads, [&](size_t tile) {
    const auto& list = lists[tile];
    if (list.empty()) return;
    auto& local = tile_grads[tile];
    local.assign(list.size(), Grad2D{});
    const int tx = int(tile) % tiles_x, ty = int(tile) / tiles_x;
    const int px0 = tx * settings.tile_size;
    const int py0 = ty * settings.tile_size;
    const int px1 = std::min(cam.width, px0 + settings.tile_size);
    const int py1 = std::min(cam.height, py0 + settings.tile_size);

    struct Hit {
      int pos;  // position in the tile list
      S alpha, gauss, trans;  // alpha, exp term, transmittance before this hit
    };
    std::vector<Hit> hits;
    hits.reserve(list.size());

    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const S pxc = S(px) + S(0.5), pyc = S(py) + S(0.5);
        hits.clear();
        S transmittance = S(1);
        for (size_t li = 0; li < list.size(); ++li) {
          const auto& g = prepared[list[li]];
          if (px < g.x0 || px > g.x1 || py < g.y0 || py > g.y1) continue;
          const S dx = pxc - g.mean2d[0], dy = pyc - g.mean2d[1];
          const S q = g.conic00 * dx * dx + S(2) * g.conic01 * dx * dy + g.conic11 * dy * dy;
          const S gauss = std::exp(S(-0.5) * q);
          S a = g.opacity * gauss;
          if (a > S(0.99)) a = S(0.99);
          if (a < settings.alpha_threshold) continue;
          hits.push_back({int(li), a, gauss, transmittance});
          transmittance *= (S(1) - a);
          if (transmittance < settings.transmittance_floor) break;
        }
        if (hits.empty()) continue;
        const S t_end = transmittance;
        const size_t pi = size_t(py) * cam.width + px;
        const Vec3<S> g_rgb(grad.rgb[pi * 3], grad.rgb[pi * 3 + 1], grad.rgb[pi * 3 + 2]);
        const Vec3<S> g_feat(grad.feature[pi * 3], grad.feature[pi * 3 + 1],
                             grad.feature[pi * 3 + 2]);
        const S g_depth = grad.depth[pi];
        const S g_alpha = grad.alpha[pi];
        // Upstream sensitivity of the final transmittance: alpha = 1 - T and
        // the background term T * bg.
        const S g_tend = -g_alpha + g_rgb.dot(settings.background_color);

        Vec3<S> suf_rgb = Vec3<S>::Zero(), suf_feat = Vec3<S>::Zero();
        S suf_depth = S(0);
        for (size_t h = hits.size(); h-- > 0;) {
          const Hit& hit = hits[h];
          const auto& g = prepared[list[hit.pos]];
          auto& acc = local[hit.pos];
          const S om = S(1) - hit.alpha;
          S d_alpha = S(0);
          for (int c = 0; c < 3; ++c) {
            d_alpha += g_rgb[c] * (g.rgb[c] * hit.trans - suf_rgb[c] / om);
            d_alpha += g_feat[c] * (g.feature[c] * hit.trans - suf_feat[c] / om);
          }
          d_alpha += g_depth * (g.depth * hit.trans - suf_depth / om);
          d_alpha += g_tend * (-t_end / om);

          const S w = hit.alpha * hit.trans;
          acc.rgb += w * g_rgb;
          acc.feat += w * g_feat;
          acc.depthval += w * g_depth;

          const bool clipped = g.opacity * hit.gauss > S(0.99);
          if (!clipped) {
            acc.opacity += d_alpha * hit.gauss;
            const S dq = S(-0.5) * d_alpha * hit.alpha;
            const S dx = pxc - g.mean2d[0], dy = pyc - g.mean2d[1];
            const S lx = g.conic00 * dx + g.conic01 * dy;
            const S ly = g.conic01 * dx + g.conic11 * dy;
            acc.mx += S(-2) * dq * lx;  // dq/dmean2d = -2 conic (p - mean2d)
            acc.my += S(-2) * dq * ly;
            acc.l00 += dq * dx * dx;
            acc.l01 += dq * dx * dy;
            acc.l11 += dq * dy * dy;
          }
          suf_rgb += hit.alpha * hit.trans * g.rgb;
          suf_feat += hit.alpha * hit.trans * g.feature;
          suf_depth += hit.alpha * hit.trans * g.depth;
        }
      }
    }
  });

  // Deterministic reduction: tiles merged in index order.
  std::vector<Grad2D> per_gauss(prepared.size());
  for (size_t tile = 0; tile < lists.size(); ++tile) {
    const auto& list = lists[tile];
    const auto& local = tile_grads[tile];
    for (size_t li = 0; li < local.size(); ++li) {
      auto& dst = per_gauss[list[li]];
      const auto& src = local[li];
      dst.mx += src.mx;
      dst.my += src.my;
      dst.l00 += src.l00;
      dst.l01 += src.l01;
      dst.l11 += src.l11;
      dst.rgb += src.rgb;
      dst.feat += src.feat;
      dst.depthval += src.depthval;
      dst.opacity += src.opacity;
    }
  }

  // Geometric chain from image-space gradients back to 3D parameters.
  const Mat3<S> w = cam.rot.template cast<S>();
  const S fx = S(cam.fx), fy = S(cam.fy);
  parallel_for(prepared.size(), threads, [&](size_t k) {
    const auto& g = prepared[k];
    const auto& g2 = per_gauss[k];
    const auto& p = scene.primitives[g.index];
    const Vec3<S>& t = g.tcam;
    const S z = t[2], z2 = z * z;

    // conic -> cov2d: dL/dC = -Lambda G Lambda.
    Mat2<S> lam;
    lam << g.conic00, g.conic01, g.conic01, g.conic11;
    Mat2<S> gl;
    gl << g2.l00, g2.l01, g2.l01, g2.l11;
    Mat2<S> gcov = -(lam * gl * lam);

    Mat3<S> sigma = covariance3d(p.rotation, p.scale);
    Eigen::Matrix<S, 2, 3> jac;
    jac << fx / z, S(0), -fx * t[0] / z2, S(0), fy / z, -fy * t[1] / z2;
    const Eigen::Matrix<S, 2, 3> m = jac * w;

    Mat3<S> gsigma = m.transpose() * gcov * m;
    Eigen::Matrix<S, 2, 3> gm = S(2) * gcov * m * sigma;
    Eigen::Matrix<S, 2, 3> gjac = gm * w.transpose();

    Vec3<S> gt = Vec3<S>::Zero();
    // Through the projection jacobian entries.
    gt[0] += gjac(0, 2) * (-fx / z2);
    gt[1] += gjac(1, 2) * (-fy / z2);
    gt[2] += gjac(0, 0) * (-fx / z2) + gjac(0, 2) * (S(2) * fx * t[0] / (z2 * z)) +
             gjac(1, 1) * (-fy / z2) + gjac(1, 2) * (S(2) * fy * t[1] / (z2 * z));
    // Through the projected mean.
    gt[0] += g2.mx * fx / z;
    gt[1] += g2.my * fy / z;
    gt[2] += -g2.mx * fx * t[0] / z2 - g2.my * fy * t[1] / z2;
    // Through the composited depth channel.
    gt[2] += g2.depthval;

    Vec3<S> gpos = w.transpose() * gt;

    // Sigma = R diag(s^2) R^T.
    const Mat3<S> r = quat_to_rotmat(p.rotation);
    const Mat3<S> rtpr = r.transpose() * gsigma * r;
    Vec3<S> gscale;
    for (int i = 0; i < 3; ++i) gscale[i] = S(2) * p.scale[i] * rtpr(i, i);
    const Mat3<S> gr =
        S(2) * gsigma * r * p.scale.cwiseProduct(p.scale).asDiagonal().toDenseMatrix();

    const S qw = p.rotation[0], qx = p.rotation[1], qy = p.rotation[2], qz = p.rotation[3];
    Mat3<S> dw_, dx_, dy_, dz_;
    dw_ << S(0), S(-2) * qz, S(2) * qy, S(2) * qz, S(0), S(-2) * qx, S(-2) * qy, S(2) * qx, S(0);
    dx_ << S(0), S(2) * qy, S(2) * qz, S(2) * qy, S(-4) * qx, S(-2) * qw, S(2) * qz, S(2) * qw,
        S(-4) * qx;
    dy_ << S(-4) * qy, S(2) * qx, S(2) * qw, S(2) * qx, S(0), S(2) * qz, S(-2) * qw, S(2) * qz,
        S(-4) * qy;
    dz_ << S(-4) * qz, S(-2) * qw, S(2) * qx, S(2) * qw, S(-4) * qz, S(2) * qy, S(2) * qx,
        S(2) * qy, S(0);
    Vec4<S> grot(gr.cwiseProduct(dw_).sum(), gr.cwiseProduct(dx_).sum(),
                 gr.cwiseProduct(dy_).sum(), gr.cwiseProduct(dz_).sum());

    // Color chain: clamped SH evaluation, including the view-direction
    // dependence on the position.
    Eigen::Matrix<S, 12, 1> gsh = Eigen::Matrix<S, 12, 1>::Zero();
    Vec4<S> gbasis = Vec4<S>::Zero();
    const Vec4<S> basis = sh_basis(g.viewdir);
    for (int c = 0; c < 3; ++c) {
      if (g.rgb_pre[c] <= S(0)) continue;
      const S gc = g2.rgb[c];
      gsh.template segment<4>(4 * c) = gc * basis;
      gbasis += gc * p.sh_coeffs.template segment<4>(4 * c);
    }
    Vec3<S> gdir(S(-kSh1) * gbasis[3], S(-kSh1) * gbasis[1], S(kSh1) * gbasis[2]);
    if (g.viewdist > S(0)) {
      const Vec3<S>& d = g.viewdir;
      gpos += (gdir - d * d.dot(gdir)) / g.viewdist;
    }

    grads.position[g.index] = gpos;
    grads.sh_coeffs[g.index] = gsh;
    grads.rotation[g.index] = grot;
    grads.scale[g.index] = gscale;
    grads.opacity[g.index] = g2.opacity;
    grads.semantic[g.index] = g2.feat;
  });
  return grads;
}

}  // namespace splatworld
