#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "splatworld/common.hpp"
#include "splatworld/core/camera.hpp"
#include "splatworld/wm/action.hpp"

// Deterministic toy tabletop: scripted rigid boxes, a slab-method raycaster
// used as ground truth, and expert keyframe episodes. Shares no code with the
// Gaussian rasterizer on purpose -- agreement between the two is always a
// trained outcome.
namespace splatworld::env {

struct Box {
  Vec3<double> center = Vec3<double>::Zero();
  Vec3<double> half_extents = Vec3<double>::Constant(0.035);
  double yaw = 0.0;  // rotation about world z
  Vec3<double> color = Vec3<double>::Constant(0.5);
  int object_id = 0;
};

struct WorldState {
  std::vector<Box> boxes;
  Vec3<double> gripper_position = Vec3<double>(0.0, -0.3, 0.15);
  double gripper_yaw = 0.0;
  int gripper_openness = 1;  // 1 open, 0 closed
  double table_height = 0.0;
  Vec2<double> table_half_extents = Vec2<double>::Zero();  // <= 0 disables the table
};

inline constexpr int kTableId = 0;
inline constexpr int kGripperId = 1;
inline const Vec3<double> kGripperHalfExtents(0.018, 0.018, 0.03);
inline const Vec3<double> kBackgroundColor(0.15, 0.18, 0.22);

inline void validate(const WorldState& state) {
  for (size_t i = 0; i < state.boxes.size(); ++i) {
    const Box& b = state.boxes[i];
    if (!(b.half_extents.minCoeff() > 0))
      throw InvalidParameterError("world: box half extents must be positive");
    if (b.center[2] - b.half_extents[2] < state.table_height - 1e-9)
      throw InvalidParameterError("world: box below the table surface");
    for (size_t j = 0; j < i; ++j)
      if (state.boxes[j].object_id == b.object_id)
        throw InvalidParameterError("world: duplicate object id");
  }
}

// Fixed per-object semantic code: signed coordinate axes, so any two distinct
// codes have cosine similarity 0 or -1.
inline Vec3<double> semantic_code(int object_id) {
  const int k = ((object_id % 6) + 6) % 6;
  Vec3<double> v = Vec3<double>::Zero();
  v[k % 3] = (k < 3) ? 1.0 : -1.0;
  return v;
}

struct RaycastImages {
  ImageD rgb;        // HxWx3
  ImageD depth;      // HxW, camera-axis depth, 0 = no hit
  ImageD semantic;   // HxWx3
  ImageD object_id;  // HxW, -1 = background
};

namespace detail {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3<double> normal = Vec3<double>::Zero();
  Vec3<double> color = Vec3<double>::Zero();
  int object_id = -1;
};

// Slab intersection of a ray with a yaw-rotated box. Returns the entry
// distance, or nothing if the ray misses or starts past the box.
inline bool ray_box(const Vec3<double>& origin, const Vec3<double>& dir, const Box& box,
                    double& t_out, Vec3<double>& normal_out) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  // Rotate into the box frame (inverse yaw).
  auto to_box = [&](const Vec3<double>& v) {
    return Vec3<double>(c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]);
  };
  const Vec3<double> o = to_box(origin - box.center);
  const Vec3<double> d = to_box(dir);
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1;
  double sign0 = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (std::abs(o[k]) > box.half_extents[k]) return false;
      continue;
    }
    double tn = (-box.half_extents[k] - o[k]) / d[k];
    double tf = (box.half_extents[k] - o[k]) / d[k];
    double sign = -1.0;
    if (tn > tf) {
      std::swap(tn, tf);
      sign = 1.0;
    }
    if (tn > t0) {
      t0 = tn;
      axis0 = k;
      sign0 = sign;
    }
    t1 = std::min(t1, tf);
    if (t0 > t1) return false;
  }
  if (axis0 < 0 || t0 <= 1e-9) return false;  // inside or behind
  t_out = t0;
  Vec3<double> n = Vec3<double>::Zero();
  n[axis0] = sign0;
  // Rotate the face normal back to world (forward yaw).
  normal_out = Vec3<double>(c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]);
  return true;
}

}  // namespace detail

// Per pixel: nearest ray/box intersection against all boxes, the gripper box,
// and the bounded table rectangle. Flat colors with Lambertian shading from a
// fixed directional light; depth is distance along the camera optical axis.
inline RaycastImages raycast_render(const WorldState& state, const Camera& cam) {
  validate(cam);
  validate(state);
  RaycastImages out;
  out.rgb = ImageD(cam.width, cam.height, 3);
  out.depth = ImageD(cam.width, cam.height, 1);
  out.semantic = ImageD(cam.width, cam.height, 3);
  out.object_id = ImageD(cam.width, cam.height, 1, -1.0);
  const Vec3<double> light = Vec3<double>(0.3, 0.25, 0.92).normalized();

  std::vector<Box> solids = state.boxes;
  {
    Box grip;
    grip.center = state.gripper_position;
    grip.half_extents = kGripperHalfExtents;
    grip.yaw = state.gripper_yaw;
    grip.color = Vec3<double>(0.85, 0.85, 0.9);
    grip.object_id = kGripperId;
    solids.push_back(grip);
  }

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Vec3<double> origin, dir;
      cam.pixel_ray(x, y, origin, dir);
      detail::Hit best;
      for (const Box& box : solids) {
        double t;
        Vec3<double> n;
        if (detail::ray_box(origin, dir, box, t, n) && t < best.t) {
          best.t = t;
          best.normal = n;
          best.color = box.color;
          best.object_id = box.object_id;
        }
      }
      if (state.table_half_extents.minCoeff() > 0 && std::abs(dir[2]) > 1e-12) {
        const double t = (state.table_height - origin[2]) / dir[2];
        if (t > 1e-9 && t < best.t) {
          const Vec3<double> p = origin + t * dir;
          if (std::abs(p[0]) <= state.table_half_extents[0] &&
              std::abs(p[1]) <= state.table_half_extents[1]) {
            best.t = t;
            best.normal = Vec3<double>(0, 0, 1);
            best.color = Vec3<double>(0.46, 0.42, 0.38);
            best.object_id = kTableId;
          }
        }
      }
      double* rgb = out.rgb.at(x, y);
      double* sem = out.semantic.at(x, y);
      if (!std::isfinite(best.t)) {
        for (int c = 0; c < 3; ++c) rgb[c] = kBackgroundColor[c];
        out.depth.at(x, y)[0] = 0.0;
        for (int c = 0; c < 3; ++c) sem[c] = 0.0;
        continue;
      }
      const Vec3<double> p = origin + best.t * dir;
      const double lambert = std::max(0.0, best.normal.dot(light));
      const double shade = 0.35 + 0.65 * lambert;
      for (int c = 0; c < 3; ++c) rgb[c] = std::min(1.0, best.color[c] * shade);
      out.depth.at(x, y)[0] = cam.world_to_cam(p)[2];
      out.object_id.at(x, y)[0] = double(best.object_id);
      const Vec3<double> code = semantic_code(best.object_id);
      for (int c = 0; c < 3; ++c) sem[c] = code[c];
    }
  }
  return out;
}

enum class Task { push_to_target, stack_blocks, pick_place };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::push_to_target: return "push_to_target";
    case Task::stack_blocks: return "stack_blocks";
    case Task::pick_place: return "pick_place";
  }
  return "?";
}

inline Task task_from_name(const std::string& s) {
  if (s == "push_to_target") return Task::push_to_target;
  if (s == "stack_blocks") return Task::stack_blocks;
  if (s == "pick_place") return Task::pick_place;
  throw InvalidParameterError("unknown task: " + s);
}

inline constexpr int kTaskCount = 3;

// Default workspace: a 0.8 m cube around the table, uniform voxel pitch.
inline Bounds3 default_workspace() {
  Bounds3 b;
  b.min = Vec3<double>(-0.4, -0.4, -0.05);
  b.max = Vec3<double>(0.4, 0.4, 0.75);
  return b;
}

struct Keyframe {
  WorldState state;
  DiscreteAction action;        // binned pose the expert moves to next
  Vec4<double> proprioception;  // gripper xyz, openness
};

struct Episode {
  Task task = Task::push_to_target;
  uint64_t seed = 0;
  std::vector<Keyframe> keyframes;
};

namespace detail {

struct Script {
  const Bounds3 bounds = default_workspace();
  int voxels = 20;
  int rotation_bins = 72;
  Episode ep;
  WorldState state;

  // Record the current state plus the binned pose of the *next* keyframe;
  // filled in retroactively once that pose is known.
  void emit() {
    Keyframe kf;
    kf.state = state;
    kf.proprioception = Vec4<double>(state.gripper_position[0], state.gripper_position[1],
                                     state.gripper_position[2], double(state.gripper_openness));
    ep.keyframes.push_back(kf);
  }

  void finalize() {
    // Action i encodes the pose at keyframe i+1; the last action holds still.
    for (size_t i = 0; i < ep.keyframes.size(); ++i) {
      const WorldState& next =
          ep.keyframes[i + 1 < ep.keyframes.size() ? i + 1 : i].state;
      DiscreteAction a;
      a.translation_bin = bin_translation(next.gripper_position, bounds, voxels);
      a.rotation_bins[0] = 0;
      a.rotation_bins[1] = 0;
      a.rotation_bins[2] = bin_rotation(next.gripper_yaw, rotation_bins);
      a.openness = next.gripper_openness;
      a.collision = ep.keyframes[i].action.collision;  // set by the script
      ep.keyframes[i].action = a;
    }
  }
};

inline Vec3<double> palette(int k) {
  static const Vec3<double> colors[] = {
      {0.85, 0.2, 0.15}, {0.15, 0.55, 0.85}, {0.2, 0.75, 0.25},
      {0.9, 0.75, 0.15}, {0.7, 0.25, 0.75},  {0.9, 0.5, 0.2},
  };
  return colors[((k % 6) + 6) % 6];
}

}  // namespace detail

// Deterministic expert demonstration for (task, seed). Actions are binned
// over the given translation-voxel / rotation-bin layout.
inline Episode script_episode(Task task, uint64_t seed, int action_voxels = 20,
                              int rotation_bins = 72) {
  if (action_voxels < 1 || rotation_bins < 1)
    throw InvalidParameterError("script_episode: bin counts must be positive");
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + uint64_t(task) + 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  detail::Script sc;
  sc.voxels = action_voxels;
  sc.rotation_bins = rotation_bins;
  sc.ep.task = task;
  sc.ep.seed = seed;
  sc.state.table_half_extents = Vec2<double>(0.4, 0.4);
  sc.state.table_height = 0.0;
  sc.state.gripper_position = Vec3<double>(0.0, -0.3, 0.18);
  sc.state.gripper_openness = 1;

  auto place = [&](int id, const Vec3<double>& half) {
    Box b;
    b.half_extents = half;
    for (int tries = 0; tries < 64; ++tries) {
      b.center = Vec3<double>(0.22 * u(rng), 0.22 * u(rng), half[2]);
      bool clear = true;
      for (const Box& other : sc.state.boxes)
        if ((other.center - b.center).head<2>().norm() <
            (other.half_extents + half).head<2>().maxCoeff() + 0.06)
          clear = false;
      if (clear) break;
    }
    b.color = detail::palette(id);
    b.object_id = id;
    sc.state.boxes.push_back(b);
    return sc.state.boxes.size() - 1;
  };

  const Vec3<double> block_half(0.035, 0.035, 0.035);
  const double hover = 0.16;

  auto move_gripper = [&](const Vec3<double>& p, int openness, int collision) {
    // A keyframe captures the state *before* the move; the binned action that
    // reaches `p` is attached in finalize(). `collision` marks contact moves.
    sc.state.gripper_position = p;
    sc.state.gripper_openness = openness;
    if (!sc.ep.keyframes.empty()) sc.ep.keyframes.back().action.collision = collision;
  };

  switch (task) {
    case Task::push_to_target: {
      const size_t pushed = place(2, block_half);
      // Thin target marker, never moved.
      Box marker;
      marker.half_extents = Vec3<double>(0.045, 0.045, 0.004);
      for (int tries = 0; tries < 64; ++tries) {
        marker.center = Vec3<double>(0.24 * u(rng), 0.24 * u(rng), 0.004);
        if ((marker.center - sc.state.boxes[pushed].center).head<2>().norm() > 0.18) break;
      }
      marker.color = detail::palette(3);
      marker.object_id = 3;
      sc.state.boxes.push_back(marker);
      if (u01(rng) < 0.5) place(4, Vec3<double>(0.03, 0.03, 0.03));

      const Vec3<double> start = sc.state.boxes[pushed].center;
      Vec3<double> goal = marker.center;
      goal[2] = start[2];
      const Vec3<double> dir = (goal - start).normalized();
      const double contact =
          block_half[0] + kGripperHalfExtents.head<2>().maxCoeff() + 0.002;

      sc.emit();  // home
      move_gripper(start - contact * dir, 1, 0);
      sc.emit();  // behind the block, about to push
      const double dist = (goal - start).norm();
      const int steps = std::max(2, int(std::ceil(dist / 0.08)));
      for (int k = 1; k <= steps; ++k) {
        const Vec3<double> c = start + (double(k) / steps) * (goal - start);
        sc.state.boxes[pushed].center = c;
        move_gripper(c - contact * dir, 1, 1);
        sc.emit();
      }
      move_gripper(sc.state.gripper_position + Vec3<double>(0, 0, hover), 1, 0);
      sc.emit();  // retreat
      break;
    }
    case Task::stack_blocks: {
      const size_t base = place(2, Vec3<double>(0.045, 0.045, 0.03));
      const size_t top = place(3, block_half);
      const Vec3<double> pick = sc.state.boxes[top].center;
      Vec3<double> drop = sc.state.boxes[base].center;
      drop[2] = 2 * sc.state.boxes[base].half_extents[2] + block_half[2];

      sc.emit();                                                       // home
      move_gripper(pick + Vec3<double>(0, 0, hover), 1, 0); sc.emit();  // pre-grasp
      move_gripper(pick, 1, 1); sc.emit();                              // descend
      sc.state.gripper_openness = 0; sc.emit();                         // grasp
      auto carry = [&](const Vec3<double>& p) {
        sc.state.boxes[top].center = p;
        move_gripper(p, 0, 0);
        sc.emit();
      };
      carry(pick + Vec3<double>(0, 0, hover));                          // lift
      carry(drop + Vec3<double>(0, 0, hover));                          // transit
      carry(drop);                                                      // lower
      sc.state.gripper_openness = 1; sc.emit();                         // release
      move_gripper(drop + Vec3<double>(0, 0, hover), 1, 0); sc.emit();  // retreat
      break;
    }
    case Task::pick_place: {
      const size_t obj = place(2, block_half);
      Box pad;
      pad.half_extents = Vec3<double>(0.05, 0.05, 0.004);
      for (int tries = 0; tries < 64; ++tries) {
        pad.center = Vec3<double>(0.24 * u(rng), 0.24 * u(rng), 0.004);
        if ((pad.center - sc.state.boxes[obj].center).head<2>().norm() > 0.16) break;
      }
      pad.color = detail::palette(4);
      pad.object_id = 4;
      sc.state.boxes.push_back(pad);

      const Vec3<double> pick = sc.state.boxes[obj].center;
      Vec3<double> drop = pad.center;
      drop[2] = 2 * pad.half_extents[2] + block_half[2];

      sc.emit();
      move_gripper(pick + Vec3<double>(0, 0, hover), 1, 0); sc.emit();
      move_gripper(pick, 1, 1); sc.emit();
      sc.state.gripper_openness = 0; sc.emit();
      auto carry = [&](const Vec3<double>& p) {
        sc.state.boxes[obj].center = p;
        move_gripper(p, 0, 0);
        sc.emit();
      };
      carry(pick + Vec3<double>(0, 0, hover));
      carry(drop + Vec3<double>(0, 0, hover));
      carry(drop);
      sc.state.gripper_openness = 1; sc.emit();
      move_gripper(drop + Vec3<double>(0, 0, hover), 1, 0); sc.emit();
      break;
    }
    default: throw InvalidParameterError("script_episode: unknown task");
  }
  sc.finalize();
  return sc.ep;
}

// Camera rig: index 0 is the front training camera, the rest are supervision
// cameras on a ring around the workspace.
inline std::vector<Camera> make_camera_rig(int supervision_count, int width, int height) {
  std::vector<Camera> cams;
  const Vec3<double> focus(0.0, 0.0, 0.08);
  const double f = 1.1 * width;
  cams.push_back(look_at(Vec3<double>(0.0, -0.85, 0.5), focus, Vec3<double>(0, 0, 1), f, f, width,
                         height, 0.05, 5.0));
  for (int k = 0; k < supervision_count; ++k) {
    const double ang = 2.0 * M_PI * k / supervision_count + 0.3;
    const double radius = 0.85;
    const double z = (k % 2 == 0) ? 0.42 : 0.6;
    cams.push_back(look_at(Vec3<double>(radius * std::cos(ang), radius * std::sin(ang), z), focus,
                           Vec3<double>(0, 0, 1), f, f, width, height, 0.05, 5.0));
  }
  return cams;
}

}  // namespace splatworld::env
