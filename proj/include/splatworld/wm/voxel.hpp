#pragma once

#include <map>
#include <vector>

#include "splatworld/common.hpp"
#include "splatworld/core/camera.hpp"

namespace splatworld {

// Front-camera RGB-D snapshot plus the robot's own state.
struct Observation {
  ImageD rgb;    // HxWx3 in [0,1]
  ImageD depth;  // HxW meters, 0 = no hit
  Vec4<double> proprioception = Vec4<double>::Zero();  // gripper xyz, openness
};

inline void validate(const Observation& obs) {
  if (obs.rgb.channels != 3 || obs.depth.channels != 1 || obs.rgb.width != obs.depth.width ||
      obs.rgb.height != obs.depth.height)
    throw ShapeError("observation: rgb must be HxWx3 and depth HxW with matching sizes");
  for (double v : obs.rgb.data)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidParameterError("observation: rgb out of [0,1]");
  for (double v : obs.depth.data)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidParameterError("observation: depth must be finite and non-negative");
}

// Sparse occupancy grid over the workspace. Channels per occupied voxel:
// rgb (3), normalized point coordinates (3), scaled flat index (1),
// occupancy (1), two reserved zeros.
struct VoxelGrid {
  int resolution = 0;
  Bounds3 bounds;
  std::vector<int> voxels;                               // sorted flat indices, x-major
  std::vector<Eigen::Matrix<double, 10, 1>> channels;    // parallel to voxels
  long dropped_points = 0;                               // lifted points outside bounds

  Vec3<double> voxel_center(int flat) const {
    const int v = resolution;
    const int iz = flat % v, iy = (flat / v) % v, ix = flat / (v * v);
    const Vec3<double> pitch = bounds.extent() / v;
    return bounds.min +
           Vec3<double>((ix + 0.5) * pitch[0], (iy + 0.5) * pitch[1], (iz + 0.5) * pitch[2]);
  }
};

// Lifts every pixel with positive depth to a world point and bins it into the
// grid. Bounds are half-open [min, max); voxel RGB/coordinate collisions are
// resolved last-writer-wins in row-major pixel order.
inline VoxelGrid voxelize(const Observation& obs, const Camera& cam, const Bounds3& bounds,
                          int resolution) {
  validate(obs);
  validate(cam);
  validate(bounds);
  if (resolution < 1) throw InvalidParameterError("voxelize: resolution must be positive");
  if (cam.width != obs.rgb.width || cam.height != obs.rgb.height)
    throw ShapeError("voxelize: camera size does not match the observation");

  VoxelGrid grid;
  grid.resolution = resolution;
  grid.bounds = bounds;
  const Vec3<double> extent = bounds.extent();
  const double total = double(resolution) * resolution * resolution;

  std::map<int, Eigen::Matrix<double, 10, 1>> cells;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const double z = obs.depth.at(x, y)[0];
      if (z <= 0.0) continue;
      const Vec3<double> p = cam.unproject(x + 0.5, y + 0.5, z);
      if (!bounds.contains(p)) {
        ++grid.dropped_points;
        continue;
      }
      int idx[3];
      for (int k = 0; k < 3; ++k)
        idx[k] = std::min(int((p[k] - bounds.min[k]) / extent[k] * resolution), resolution - 1);
      const int flat = (idx[0] * resolution + idx[1]) * resolution + idx[2];
      Eigen::Matrix<double, 10, 1> ch;
      const double* rgb = obs.rgb.at(x, y);
      ch << rgb[0], rgb[1], rgb[2], (p[0] - bounds.min[0]) / extent[0],
          (p[1] - bounds.min[1]) / extent[1], (p[2] - bounds.min[2]) / extent[2], flat / total,
          1.0, 0.0, 0.0;
      cells[flat] = ch;
    }
  }
  grid.voxels.reserve(cells.size());
  grid.channels.reserve(cells.size());
  for (const auto& [flat, ch] : cells) {
    grid.voxels.push_back(flat);
    grid.channels.push_back(ch);
  }
  return grid;
}

}  // namespace splatworld
