#pragma once

#include <algorithm>
#include <cmath>

#include "splatworld/common.hpp"

namespace splatworld {

// Discretized keyframe action: target end-effector translation as a flat
// voxel-bin index, per-axis rotation bins, gripper openness and collision
// permission bits.
struct DiscreteAction {
  int translation_bin = 0;    // index into V^3 bins
  int rotation_bins[3] = {0, 0, 0};  // each in [0, rotation_bin_count)
  int openness = 0;           // {0, 1}
  int collision = 0;          // {0, 1}
};

template <class S> struct ActionLogits {
  VecX<S> translation;          // V^3
  MatX<S> rotation;             // bins x 3 (one column per axis)
  Vec2<S> openness = Vec2<S>::Zero();
  Vec2<S> collision = Vec2<S>::Zero();
};

// Translation bins are flat voxel indices over a V^3 grid (x-major); points
// outside the workspace clamp to the boundary voxel. Rotation bins split
// [0, 2pi) uniformly; decoding returns bin centers so that every decode/re-bin
// round-trip is exact.
inline int bin_translation(const Vec3<double>& p, const Bounds3& bounds, int voxels) {
  validate(bounds);
  if (voxels < 1) throw InvalidParameterError("bin_translation: need at least one voxel");
  int idx[3];
  for (int k = 0; k < 3; ++k) {
    const double t = (p[k] - bounds.min[k]) / (bounds.max[k] - bounds.min[k]);
    idx[k] = std::clamp(int(std::floor(t * voxels)), 0, voxels - 1);
  }
  return (idx[0] * voxels + idx[1]) * voxels + idx[2];
}

inline Vec3<double> unbin_translation(int bin, const Bounds3& bounds, int voxels) {
  validate(bounds);
  if (bin < 0 || bin >= voxels * voxels * voxels)
    throw InvalidParameterError("unbin_translation: bin out of range");
  const int iz = bin % voxels, iy = (bin / voxels) % voxels, ix = bin / (voxels * voxels);
  const Vec3<double> pitch = bounds.extent() / voxels;
  return bounds.min + Vec3<double>((ix + 0.5) * pitch[0], (iy + 0.5) * pitch[1],
                                   (iz + 0.5) * pitch[2]);
}

inline int bin_rotation(double angle_rad, int bins) {
  if (bins < 1) throw InvalidParameterError("bin_rotation: need at least one bin");
  const double tau = 2.0 * M_PI;
  double a = std::fmod(angle_rad, tau);
  if (a < 0) a += tau;
  return std::min(int(std::floor(a / tau * bins)), bins - 1);
}

inline double unbin_rotation(int bin, int bins) {
  if (bin < 0 || bin >= bins) throw InvalidParameterError("unbin_rotation: bin out of range");
  return (bin + 0.5) * 2.0 * M_PI / bins;
}

inline void validate(const DiscreteAction& a, int translation_bins, int rotation_bins) {
  if (a.translation_bin < 0 || a.translation_bin >= translation_bins)
    throw InvalidParameterError("action: translation bin out of range");
  for (int axis = 0; axis < 3; ++axis)
    if (a.rotation_bins[axis] < 0 || a.rotation_bins[axis] >= rotation_bins)
      throw InvalidParameterError("action: rotation bin out of range");
  if ((a.openness != 0 && a.openness != 1) || (a.collision != 0 && a.collision != 1))
    throw InvalidParameterError("action: openness/collision must be 0 or 1");
}

}  // namespace splatworld
