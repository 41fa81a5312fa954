#pragma once

#include <random>

#include "splatworld/core/camera.hpp"
#include "splatworld/core/gaussian.hpp"
#include "splatworld/raster/rasterizer.hpp"

namespace splatworld::testing {

template <class S> GaussianPrimitive<S> random_primitive(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.05, 0.95);
  GaussianPrimitive<S> p;
  p.position = Vec3<S>(S(u(rng) * 0.3), S(u(rng) * 0.3), S(1.5 + u(rng) * 0.5));
  for (int i = 0; i < 12; ++i) p.sh_coeffs[i] = S(u(rng) * 0.4);
  Vec4<S> q(S(1.0 + u(rng)), S(u(rng)), S(u(rng)), S(u(rng)));
  p.rotation = q / q.norm();
  p.scale = Vec3<S>(S(0.02 + 0.08 * u01(rng)), S(0.02 + 0.08 * u01(rng)),
                    S(0.02 + 0.08 * u01(rng)));
  p.opacity = S(u01(rng));
  p.semantic = Vec3<S>(S(u(rng)), S(u(rng)), S(u(rng)));
  return p;
}

template <class S> DynamicScene<S> random_scene(Rng& rng, int count) {
  DynamicScene<S> scene;
  for (int i = 0; i < count; ++i) scene.primitives.push_back(random_primitive<S>(rng));
  scene.background_color = Vec3<S>(S(0.2), S(0.3), S(0.4));
  return scene;
}

// Identity-extrinsics camera looking down +z.
inline Camera test_camera(int width = 64, int height = 64) {
  Camera cam;
  cam.fx = cam.fy = 60.0;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.near = 0.1;
  cam.far = 10.0;
  return cam;
}

// Settings with thresholds effectively disabled for oracle comparisons.
template <class S> RasterSettings<S> open_settings() {
  RasterSettings<S> s;
  s.alpha_threshold = S(1e-30);
  s.transmittance_floor = S(1e-30);
  s.background_color = Vec3<S>(S(0.2), S(0.3), S(0.4));
  return s;
}

}  // namespace splatworld::testing
