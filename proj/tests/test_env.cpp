#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "splatworld/env/world.hpp"
#include "test_util.hpp"

using namespace splatworld;
using namespace splatworld::env;

namespace {

bool same_state(const WorldState& a, const WorldState& b) {
  if (a.boxes.size() != b.boxes.size()) return false;
  for (size_t i = 0; i < a.boxes.size(); ++i) {
    if (a.boxes[i].center != b.boxes[i].center) return false;
    if (a.boxes[i].half_extents != b.boxes[i].half_extents) return false;
    if (a.boxes[i].yaw != b.boxes[i].yaw) return false;
    if (a.boxes[i].color != b.boxes[i].color) return false;
    if (a.boxes[i].object_id != b.boxes[i].object_id) return false;
  }
  return a.gripper_position == b.gripper_position && a.gripper_yaw == b.gripper_yaw &&
         a.gripper_openness == b.gripper_openness && a.table_height == b.table_height &&
         a.table_half_extents == b.table_half_extents;
}

bool same_action(const DiscreteAction& a, const DiscreteAction& b) {
  return a.translation_bin == b.translation_bin && a.openness == b.openness &&
         a.collision == b.collision && a.rotation_bins[0] == b.rotation_bins[0] &&
         a.rotation_bins[1] == b.rotation_bins[1] && a.rotation_bins[2] == b.rotation_bins[2];
}

WorldState cube_world() {
  WorldState state;
  Box b;
  b.center = Vec3<double>(0, 0, 2);
  b.half_extents = Vec3<double>(0.5, 0.5, 0.5);
  b.color = Vec3<double>(1, 0, 0);
  b.object_id = 2;
  state.boxes.push_back(b);
  state.gripper_position = Vec3<double>(0, -5, 2);  // far out of frame
  return state;
}

}  // namespace

TEST_CASE("empty world renders background, zero depth, zero semantic") {
  WorldState state;
  state.gripper_position = Vec3<double>(0, -5, 1);
  Camera cam = splatworld::testing::test_camera(16, 16);
  auto img = raycast_render(state, cam);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) {
        CHECK(img.rgb.at(x, y)[c] == kBackgroundColor[c]);
        CHECK(img.semantic.at(x, y)[c] == 0.0);
      }
      CHECK(img.depth.at(x, y)[0] == 0.0);
    }
}

TEST_CASE("unit cube front face depth is 1.5 from the slab arithmetic") {
  Camera cam = splatworld::testing::test_camera(64, 64);
  auto img = raycast_render(cube_world(), cam);
  // Center pixels hit the z = 1.5 face; the camera-axis depth equals 1.5
  // regardless of the ray obliquity.
  CHECK(img.depth.at(32, 32)[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(img.depth.at(30, 34)[0] == doctest::Approx(1.5).epsilon(1e-12));
  // Semantic code of object 2 is +z.
  CHECK(img.semantic.at(32, 32)[2] == 1.0);
}

TEST_CASE("lambertian shading on an axis-aligned face matches the closed form") {
  Camera cam = splatworld::testing::test_camera(64, 64);
  auto img = raycast_render(cube_world(), cam);
  // Front face normal is -z (towards the camera); light z-component known.
  const Vec3<double> light = Vec3<double>(0.3, 0.25, 0.92).normalized();
  const double shade = 0.35 + 0.65 * std::max(0.0, Vec3<double>(0, 0, -1).dot(light));
  CHECK(img.rgb.at(32, 32)[0] == doctest::Approx(std::min(1.0, 1.0 * shade)).epsilon(1e-12));
  CHECK(img.rgb.at(32, 32)[1] == doctest::Approx(0.0));
}

TEST_CASE("nearer of two boxes along a ray wins the pixel") {
  WorldState state = cube_world();
  Box front;
  front.center = Vec3<double>(0, 0, 1.0);
  front.half_extents = Vec3<double>(0.1, 0.1, 0.1);
  front.color = Vec3<double>(0, 1, 0);
  front.object_id = 3;
  state.boxes.push_back(front);
  Camera cam = splatworld::testing::test_camera(64, 64);
  auto img = raycast_render(state, cam);
  CHECK(img.depth.at(32, 32)[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(img.rgb.at(32, 32)[0] < 0.01);  // green box, not red
}

TEST_CASE("quarter-turn yaw of a square box leaves the image unchanged") {
  WorldState a = cube_world();
  WorldState b = cube_world();
  b.boxes[0].yaw = M_PI / 2;
  Camera cam = splatworld::testing::test_camera(48, 48);
  auto ia = raycast_render(a, cam), ib = raycast_render(b, cam);
  for (size_t i = 0; i < ia.depth.data.size(); ++i)
    CHECK(std::abs(ia.depth.data[i] - ib.depth.data[i]) < 1e-9);
}

TEST_CASE("unprojected hit pixels land on a solid surface") {
  auto ep = script_episode(Task::push_to_target, 3);
  const WorldState& state = ep.keyframes[1].state;
  auto rig = make_camera_rig(2, 48, 48);
  const Camera& cam = rig[1];
  auto img = raycast_render(state, cam);
  int hits = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const double z = img.depth.at(x, y)[0];
      if (z <= 0) continue;
      ++hits;
      const Vec3<double> p = cam.unproject(x + 0.5, y + 0.5, z);
      // Distance to the closest surface among table plane, boxes, gripper.
      double dist = std::abs(p[2] - state.table_height);
      std::vector<Box> solids = state.boxes;
      Box grip;
      grip.center = state.gripper_position;
      grip.half_extents = kGripperHalfExtents;
      solids.push_back(grip);
      for (const Box& box : solids) {
        const Vec3<double> q = p - box.center;
        const double c = std::cos(box.yaw), s = std::sin(box.yaw);
        const Vec3<double> local(c * q[0] + s * q[1], -s * q[0] + c * q[1], q[2]);
        double worst = 0.0;
        for (int k = 0; k < 3; ++k)
          worst = std::max(worst, std::abs(local[k]) - box.half_extents[k]);
        dist = std::min(dist, std::abs(worst));
      }
      CHECK(dist < 1e-6);
    }
  CHECK(hits > 100);
}

TEST_CASE("semantic codes are pairwise separated") {
  for (int i = 0; i < 6; ++i) {
    CHECK(semantic_code(i).norm() == doctest::Approx(1.0));
    for (int j = 0; j < i; ++j) CHECK(semantic_code(i).dot(semantic_code(j)) <= 0.5);
  }
}

TEST_CASE("episodes are bit-identical for the same task and seed") {
  for (Task task : {Task::push_to_target, Task::stack_blocks, Task::pick_place}) {
    auto a = script_episode(task, 17);
    auto b = script_episode(task, 17);
    REQUIRE(a.keyframes.size() == b.keyframes.size());
    REQUIRE(a.keyframes.size() >= 2);
    for (size_t i = 0; i < a.keyframes.size(); ++i) {
      CHECK(same_state(a.keyframes[i].state, b.keyframes[i].state));
      CHECK(same_action(a.keyframes[i].action, b.keyframes[i].action));
      CHECK(a.keyframes[i].proprioception == b.keyframes[i].proprioception);
    }
  }
}

TEST_CASE("push episode ends with the block within one voxel pitch of the target") {
  const Bounds3 bounds = default_workspace();
  const double pitch = (bounds.extent() / 20.0).maxCoeff();
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    auto ep = script_episode(Task::push_to_target, seed);
    const WorldState& last = ep.keyframes.back().state;
    const Box* pushed = nullptr;
    const Box* marker = nullptr;
    for (const Box& b : last.boxes) {
      if (b.object_id == 2) pushed = &b;
      if (b.object_id == 3) marker = &b;
    }
    REQUIRE(pushed != nullptr);
    REQUIRE(marker != nullptr);
    CHECK((pushed->center - marker->center).head<2>().norm() < pitch);
  }
}

TEST_CASE("stack episode has at least six keyframes") {
  CHECK(script_episode(Task::stack_blocks, 9).keyframes.size() >= 6);
  CHECK(script_episode(Task::pick_place, 9).keyframes.size() >= 6);
}

TEST_CASE("scripted action bins round-trip through decode and re-bin") {
  const Bounds3 bounds = default_workspace();
  for (Task task : {Task::push_to_target, Task::stack_blocks, Task::pick_place}) {
    for (uint64_t seed : {1ull, 7ull, 23ull}) {
      auto ep = script_episode(task, seed);
      for (const Keyframe& kf : ep.keyframes) {
        validate(kf.action, 20 * 20 * 20, 72);
        const Vec3<double> p = unbin_translation(kf.action.translation_bin, bounds, 20);
        CHECK(bin_translation(p, bounds, 20) == kf.action.translation_bin);
        for (int axis = 0; axis < 3; ++axis) {
          const double ang = unbin_rotation(kf.action.rotation_bins[axis], 72);
          CHECK(bin_rotation(ang, 72) == kf.action.rotation_bins[axis]);
        }
      }
    }
  }
}

TEST_CASE("binning clamps out-of-workspace points to boundary voxels") {
  const Bounds3 bounds = default_workspace();
  CHECK(bin_translation(Vec3<double>(-9, -9, -9), bounds, 20) == 0);
  CHECK(bin_translation(Vec3<double>(9, 9, 9), bounds, 20) == 20 * 20 * 20 - 1);
}

TEST_CASE("task name round-trip and unknown task rejection") {
  for (Task t : {Task::push_to_target, Task::stack_blocks, Task::pick_place})
    CHECK(task_from_name(task_name(t)) == t);
  CHECK_THROWS_AS(task_from_name("juggle"), InvalidParameterError);
}

TEST_CASE("camera rig has a front camera plus the requested ring") {
  auto rig = make_camera_rig(20, 128, 128);
  CHECK(rig.size() == 21);
  for (const Camera& cam : rig) {
    CHECK_NOTHROW(validate(cam));
    // Every camera faces the workspace center.
    const Vec3<double> fwd = cam.rot.row(2);
    const Vec3<double> to_focus = (Vec3<double>(0, 0, 0.08) - cam.center()).normalized();
    CHECK(fwd.dot(to_focus) > 0.999);
  }
}

TEST_CASE("world validation catches bad states") {
  WorldState state;
  Box b;
  b.half_extents = Vec3<double>(0.03, 0.03, 0.03);
  b.center = Vec3<double>(0, 0, 0.03);
  b.object_id = 2;
  state.boxes.push_back(b);
  CHECK_NOTHROW(validate(state));
  state.boxes.push_back(b);  // duplicate id
  CHECK_THROWS_AS(validate(state), InvalidParameterError);
  state.boxes.pop_back();
  state.boxes[0].center[2] = -0.1;  // below the table
  CHECK_THROWS_AS(validate(state), InvalidParameterError);
}
