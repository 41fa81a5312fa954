#pragma once

#include <cmath>
#include <vector>

#include "splatworld/common.hpp"

namespace splatworld {

// One anisotropic 3D Gaussian with appearance parameters. Rotation is a unit
// quaternion stored scalar-first (w, x, y, z). Scale and opacity are stored
// post-activation, so a constructed primitive is always renderable.
template <class S> struct GaussianPrimitive {
  Vec3<S> position = Vec3<S>::Zero();
  Eigen::Matrix<S, 12, 1> sh_coeffs = Eigen::Matrix<S, 12, 1>::Zero();  // [r0..r3 g0..g3 b0..b3]
  Vec4<S> rotation = Vec4<S>(S(1), S(0), S(0), S(0));
  Vec3<S> scale = Vec3<S>::Ones();
  S opacity = S(1);
  Vec3<S> semantic = Vec3<S>::Zero();
};

template <class S> void validate(const GaussianPrimitive<S>& p) {
  if (!p.position.allFinite() || !p.sh_coeffs.allFinite() || !p.rotation.allFinite() ||
      !p.scale.allFinite() || !std::isfinite(static_cast<double>(p.opacity)) ||
      !p.semantic.allFinite())
    throw InvalidParameterError("gaussian primitive has non-finite fields");
  if (std::abs(static_cast<double>(p.rotation.norm()) - 1.0) > 1e-6)
    throw InvalidParameterError("gaussian rotation is not unit-norm");
  if (!(p.scale.array() > S(0)).all())
    throw InvalidParameterError("gaussian scale must be strictly positive");
  if (p.opacity < S(0) || p.opacity > S(1))
    throw InvalidParameterError("gaussian opacity outside [0,1]");
}

// Per-primitive change between consecutive timesteps.
template <class S> struct DeformationDelta {
  Vec3<S> d_position = Vec3<S>::Zero();
  Vec4<S> d_rotation = Vec4<S>::Zero();
};

// A set of primitives at one timestep. Color, scale, opacity and semantic
// features are time-independent; position and rotation evolve via propagate().
template <class S> struct DynamicScene {
  std::vector<GaussianPrimitive<S>> primitives;
  long timestep = 0;
  Vec3<S> background_color = Vec3<S>::Zero();
};

// Rotation matrix of a scalar-first quaternion. The formula is used as-is on
// the raw components, so gradients flow through the four entries directly.
template <class S> Mat3<S> quat_to_rotmat(const Vec4<S>& q) {
  const S w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<S> r;
  r << S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),
      S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),
      S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y);
  return r;
}

// Sigma = R diag(s)^2 R^T.
template <class S> Mat3<S> covariance3d(const Vec4<S>& rotation, const Vec3<S>& scale) {
  if (!rotation.allFinite() || !scale.allFinite())
    throw InvalidParameterError("covariance3d: non-finite rotation or scale");
  const Mat3<S> r = quat_to_rotmat(rotation);
  return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

inline constexpr double kSh0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))
inline constexpr double kSh1 = 0.4886025119029199;   // sqrt(3) / (2 sqrt(pi))

// Degree-1 real spherical harmonic basis at a unit direction, matching the
// common splatting layout: (Y00, -y, z, -x scaled by kSh1).
template <class S> Vec4<S> sh_basis(const Vec3<S>& dir) {
  return Vec4<S>(S(kSh0), S(-kSh1) * dir[1], S(kSh1) * dir[2], S(-kSh1) * dir[0]);
}

// Per channel: clamp(coeffs . basis + 0.5, >= 0).
template <class S>
Vec3<S> sh_to_rgb(const Eigen::Matrix<S, 12, 1>& coeffs, const Vec3<S>& view_dir) {
  if (!coeffs.allFinite() || !view_dir.allFinite())
    throw InvalidParameterError("sh_to_rgb: non-finite input");
  const Vec4<S> basis = sh_basis(view_dir);
  Vec3<S> rgb;
  for (int c = 0; c < 3; ++c) {
    S v = coeffs.template segment<4>(4 * c).dot(basis) + S(0.5);
    rgb[c] = v > S(0) ? v : S(0);
  }
  return rgb;
}

// Applies per-primitive deltas: positions add, rotations add then renormalize,
// the time-independent fields are copied. Timestep advances by one.
template <class S>
DynamicScene<S> propagate(const DynamicScene<S>& scene,
                          const std::vector<DeformationDelta<S>>& deltas) {
  if (deltas.size() != scene.primitives.size())
    throw ShapeError("propagate: delta count " + std::to_string(deltas.size()) +
                     " != primitive count " + std::to_string(scene.primitives.size()));
  DynamicScene<S> out = scene;
  out.timestep = scene.timestep + 1;
  for (size_t i = 0; i < deltas.size(); ++i) {
    auto& p = out.primitives[i];
    p.position += deltas[i].d_position;
    // An exactly-zero rotation delta is an identity; skipping the
    // renormalization keeps zero-deformation rollouts bit-exact.
    if ((deltas[i].d_rotation.array() == S(0)).all()) continue;
    Vec4<S> u = p.rotation + deltas[i].d_rotation;
    const S n = u.norm();
    if (!(n > S(1e-8)))
      throw DegenerateRotationError("propagate: rotation sum has near-zero norm at primitive " +
                                    std::to_string(i));
    p.rotation = u / n;
  }
  return out;
}

}  // namespace splatworld
