#pragma once

// Test-side oracle: a straight-line per-pixel splatting renderer with a
// global depth sort, no tiling and no early termination (callers disable
// thresholds by passing tiny values). Written independently of the tiled
// implementation so agreement between the two is meaningful.

#include <algorithm>
#include <cmath>
#include <vector>

#include "splatworld/core/camera.hpp"
#include "splatworld/core/gaussian.hpp"
#include "splatworld/raster/rasterizer.hpp"

namespace splatworld::testing {

template <class S>
ImageBundle<S> naive_render(const DynamicScene<S>& scene, const Camera& cam,
                            const RasterSettings<S>& settings) {
  struct Splat {
    Vec2<S> mean;
    S c00, c01, c11;
    S depth;
    Vec3<S> rgb, feature;
    S opacity;
    int x0, x1, y0, y1;
    int index;
  };
  std::vector<Splat> splats;
  const Vec3<S> eye = cam.center().template cast<S>();
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    Vec3<S> t = cam.rot.template cast<S>() * p.position + cam.trans.template cast<S>();
    if (!(t[2] > S(cam.near)) || !(t[2] < S(cam.far))) continue;
    Splat s;
    s.index = int(i);
    s.depth = t[2];
    s.mean = Vec2<S>(S(cam.fx) * t[0] / t[2] + S(cam.cx), S(cam.fy) * t[1] / t[2] + S(cam.cy));
    Eigen::Matrix<S, 2, 3> jac;
    jac << S(cam.fx) / t[2], S(0), -S(cam.fx) * t[0] / (t[2] * t[2]), S(0), S(cam.fy) / t[2],
        -S(cam.fy) * t[1] / (t[2] * t[2]);
    Eigen::Matrix<S, 2, 3> m = jac * cam.rot.template cast<S>();
    Mat2<S> cov = m * covariance3d(p.rotation, p.scale) * m.transpose();
    cov(0, 0) += settings.lowpass_eps;
    cov(1, 1) += settings.lowpass_eps;
    const S det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (det < S(1e-12)) continue;
    s.c00 = cov(1, 1) / det;
    s.c01 = -cov(0, 1) / det;
    s.c11 = cov(0, 0) / det;
    const S mid = (cov(0, 0) + cov(1, 1)) / S(2);
    S disc = mid * mid - det;
    if (disc < S(0)) disc = S(0);
    const S radius = std::ceil(S(3) * std::sqrt(mid + std::sqrt(disc)));
    s.x0 = int(std::floor(double(s.mean[0] - radius)));
    s.x1 = int(std::ceil(double(s.mean[0] + radius)));
    s.y0 = int(std::floor(double(s.mean[1] - radius)));
    s.y1 = int(std::ceil(double(s.mean[1] + radius)));
    if (s.x1 < 0 || s.y1 < 0 || s.x0 >= cam.width || s.y0 >= cam.height) continue;
    Vec3<S> dvec = p.position - eye;
    const S r = dvec.norm();
    Vec3<S> dir = r > S(0) ? Vec3<S>(dvec / r) : Vec3<S>(S(0), S(0), S(1));
    s.rgb = sh_to_rgb(p.sh_coeffs, dir);
    s.feature = p.semantic;
    s.opacity = p.opacity;
    splats.push_back(s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });

  ImageBundle<S> out(cam.width, cam.height);
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      S trans = S(1);
      Vec3<S> rgb = Vec3<S>::Zero(), feat = Vec3<S>::Zero();
      S depth = S(0);
      for (const auto& s : splats) {
        if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
        const S dx = S(px) + S(0.5) - s.mean[0];
        const S dy = S(py) + S(0.5) - s.mean[1];
        const S q = s.c00 * dx * dx + S(2) * s.c01 * dx * dy + s.c11 * dy * dy;
        S a = s.opacity * std::exp(S(-0.5) * q);
        if (a > S(0.99)) a = S(0.99);
        if (a < settings.alpha_threshold) continue;
        rgb += trans * a * s.rgb;
        feat += trans * a * s.feature;
        depth += trans * a * s.depth;
        trans *= S(1) - a;
        if (trans < settings.transmittance_floor) break;
      }
      const size_t pi = size_t(py) * cam.width + px;
      rgb += trans * settings.background_color;
      for (int c = 0; c < 3; ++c) {
        out.rgb[pi * 3 + c] = rgb[c];
        out.feature[pi * 3 + c] = feat[c];
      }
      out.depth[pi] = depth;
      out.alpha[pi] = S(1) - trans;
    }
  }
  return out;
}

}  // namespace splatworld::testing
