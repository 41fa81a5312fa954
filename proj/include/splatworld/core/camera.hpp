#pragma once

#include <Eigen/Geometry>
#include <cmath>

#include "splatworld/common.hpp"

namespace splatworld {

// Pinhole camera. Extrinsics are world-to-camera: x_cam = rot * x_world + trans.
// Camera frame: +x right, +y down, +z forward. Pixel (i, j) samples at
// (i + 0.5, j + 0.5).
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3<double> rot = Mat3<double>::Identity();
  Vec3<double> trans = Vec3<double>::Zero();
  int width = 0, height = 0;
  double near = 0.01, far = 100.0;

  Vec3<double> world_to_cam(const Vec3<double>& p) const { return rot * p + trans; }
  Vec3<double> cam_to_world(const Vec3<double>& p) const { return rot.transpose() * (p - trans); }
  Vec3<double> center() const { return -rot.transpose() * trans; }

  // World-space ray through the center of pixel (ix, iy); direction normalized.
  void pixel_ray(int ix, int iy, Vec3<double>& origin, Vec3<double>& dir) const {
    Vec3<double> d((ix + 0.5 - cx) / fx, (iy + 0.5 - cy) / fy, 1.0);
    origin = center();
    dir = (rot.transpose() * d).normalized();
  }

  // Unproject pixel (ix, iy) with camera-space depth z to a world point.
  Vec3<double> unproject(double px, double py, double z) const {
    Vec3<double> pc((px - cx) / fx * z, (py - cy) / fy * z, z);
    return cam_to_world(pc);
  }
};

inline void validate(const Camera& cam) {
  if (!(cam.fx > 0) || !(cam.fy > 0))
    throw InvalidParameterError("camera: focal lengths must be positive");
  if (!(cam.near > 0) || !(cam.near < cam.far))
    throw InvalidParameterError("camera: need 0 < near < far");
  if (cam.width < 1 || cam.height < 1)
    throw InvalidParameterError("camera: image size must be at least 1x1");
}

// Camera at `eye` looking at `target`, `up` approximately world-up.
inline Camera look_at(const Vec3<double>& eye, const Vec3<double>& target, const Vec3<double>& up,
                      double fx, double fy, int width, int height, double near = 0.01,
                      double far = 100.0) {
  Camera cam;
  Vec3<double> fwd = (target - eye).normalized();
  Vec3<double> right = fwd.cross(up).normalized();
  Vec3<double> down = fwd.cross(right);
  cam.rot.row(0) = right;
  cam.rot.row(1) = down;
  cam.rot.row(2) = fwd;
  cam.trans = -cam.rot * eye;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.near = near;
  cam.far = far;
  return cam;
}

}  // namespace splatworld
