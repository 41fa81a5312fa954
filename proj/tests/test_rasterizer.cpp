#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "naive_renderer.hpp"
#include "splatworld/nn/grad_check.hpp"
#include "splatworld/raster/rasterizer.hpp"
#include "test_util.hpp"

using namespace splatworld;
using splatworld::testing::open_settings;
using splatworld::testing::random_primitive;
using splatworld::testing::random_scene;
using splatworld::testing::test_camera;

TEST_CASE("projection of on-axis and off-axis points follows the pinhole model") {
  Camera cam = test_camera();
  GaussianPrimitive<double> p;
  p.scale = Vec3<double>(0.05, 0.05, 0.05);
  p.position = Vec3<double>(0, 0, 2.0);
  auto proj = project_gaussian(p, cam);
  REQUIRE(proj.has_value());
  CHECK(proj->mean2d[0] == doctest::Approx(cam.cx));
  CHECK(proj->mean2d[1] == doctest::Approx(cam.cy));
  CHECK(proj->depth == doctest::Approx(2.0));

  p.position = Vec3<double>(0.3, 0, 2.0);
  proj = project_gaussian(p, cam);
  REQUIRE(proj.has_value());
  CHECK(proj->mean2d[0] == doctest::Approx(cam.fx * 0.3 / 2.0 + cam.cx));
  CHECK(proj->mean2d[1] == doctest::Approx(cam.cy));
}

TEST_CASE("projection culls out-of-range depths") {
  Camera cam = test_camera();
  GaussianPrimitive<double> p;
  p.scale = Vec3<double>(0.05, 0.05, 0.05);
  p.position = Vec3<double>(0, 0, 0.05);
  CHECK(!project_gaussian(p, cam).has_value());
  p.position = Vec3<double>(0, 0, 50.0);
  CHECK(!project_gaussian(p, cam).has_value());
}

TEST_CASE("isotropic 2D covariance matches a numeric jacobian oracle") {
  Camera cam = test_camera();
  const double s = 0.08, z = 2.5, eps = 0.3;
  GaussianPrimitive<double> p;
  p.scale = Vec3<double>(s, s, s);
  p.position = Vec3<double>(0, 0, z);
  auto proj = project_gaussian(p, cam, eps);
  REQUIRE(proj.has_value());

  // Oracle: finite-difference jacobian of the pinhole map at the mean.
  auto project = [&](const Vec3<double>& t) {
    return Vec2<double>(cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy);
  };
  const double h = 1e-6;
  Eigen::Matrix<double, 2, 3> jnum;
  for (int i = 0; i < 3; ++i) {
    Vec3<double> tp = p.position, tm = p.position;
    tp[i] += h;
    tm[i] -= h;
    jnum.col(i) = (project(tp) - project(tm)) / (2 * h);
  }
  Mat2<double> expected = jnum * (s * s * Mat3<double>::Identity()) * jnum.transpose() +
                          eps * Mat2<double>::Identity();
  CHECK((proj->cov2d - expected).norm() < 1e-4);
  const double k = cam.fx * s / z;
  CHECK(proj->cov2d(0, 0) == doctest::Approx(k * k + eps).epsilon(1e-9));
}

TEST_CASE("empty scene renders background everywhere") {
  Camera cam = test_camera(16, 16);
  DynamicScene<double> scene;
  auto settings = open_settings<double>();
  auto out = render(scene, cam, settings);
  for (size_t p = 0; p < out.depth.size(); ++p) {
    CHECK(out.rgb[3 * p + 0] == settings.background_color[0]);
    CHECK(out.rgb[3 * p + 1] == settings.background_color[1]);
    CHECK(out.rgb[3 * p + 2] == settings.background_color[2]);
    CHECK(out.alpha[p] == 0.0);
    CHECK(out.depth[p] == 0.0);
    CHECK(out.feature[3 * p] == 0.0);
  }
}

TEST_CASE("alpha at the projected mean equals opacity") {
  Camera cam = test_camera();
  DynamicScene<double> scene;
  GaussianPrimitive<double> p;
  // Place the mean exactly at the center of pixel (40, 32).
  const double z = 2.0;
  p.position = Vec3<double>((40.5 - cam.cx) / cam.fx * z, (32.5 - cam.cy) / cam.fy * z, z);
  p.scale = Vec3<double>(0.05, 0.05, 0.05);
  p.opacity = 0.73;
  scene.primitives.push_back(p);
  auto out = render(scene, cam, open_settings<double>());
  CHECK(out.alpha[32 * cam.width + 40] == doctest::Approx(0.73).epsilon(1e-12));
}

TEST_CASE("two overlapping gaussians composite front to back") {
  Camera cam = test_camera();
  DynamicScene<double> scene;
  for (int i = 0; i < 2; ++i) {
    GaussianPrimitive<double> p;
    const double z = 2.0 + i;
    p.position = Vec3<double>((32.5 - cam.cx) / cam.fx * z, (32.5 - cam.cy) / cam.fy * z, z);
    p.scale = Vec3<double>(0.08, 0.08, 0.08);
    p.opacity = i == 0 ? 0.6 : 0.5;
    p.sh_coeffs[0] = i == 0 ? 0.8 : -0.4;  // distinct red channels
    scene.primitives.push_back(p);
  }
  auto settings = open_settings<double>();
  settings.background_color.setZero();
  auto out = render(scene, cam, settings);
  // Oracle: the naive full-list renderer.
  auto oracle = splatworld::testing::naive_render(scene, cam, settings);
  const size_t pi = 32 * cam.width + 32;
  CHECK(out.rgb[3 * pi] == doctest::Approx(oracle.rgb[3 * pi]).epsilon(1e-12));
  // And the closed form c1 a1 + c2 a2 (1 - a1) at the shared center pixel.
  const double c1 = 0.8 * kSh0 + 0.5, c2 = -0.4 * kSh0 + 0.5;
  CHECK(out.rgb[3 * pi] == doctest::Approx(0.6 * c1 + 0.5 * c2 * 0.4).epsilon(1e-9));
  CHECK(out.alpha[pi] == doctest::Approx(1.0 - 0.4 * 0.5).epsilon(1e-9));
}

TEST_CASE("tiled renderer matches the naive oracle on random scenes") {
  Rng rng(2024);
  Camera cam = test_camera();
  for (int trial = 0; trial < 10; ++trial) {
    auto scene = random_scene<double>(rng, 1 + int(rng() % 64));
    auto settings = open_settings<double>();
    auto tiled = render(scene, cam, settings, 1);
    auto naive = splatworld::testing::naive_render(scene, cam, settings);
    double max_err = 0;
    for (size_t i = 0; i < tiled.rgb.size(); ++i)
      max_err = std::max(max_err, std::abs(tiled.rgb[i] - naive.rgb[i]));
    for (size_t i = 0; i < tiled.feature.size(); ++i)
      max_err = std::max(max_err, std::abs(tiled.feature[i] - naive.feature[i]));
    for (size_t i = 0; i < tiled.depth.size(); ++i) {
      max_err = std::max(max_err, std::abs(tiled.depth[i] - naive.depth[i]));
      max_err = std::max(max_err, std::abs(tiled.alpha[i] - naive.alpha[i]));
    }
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("render is bit-identical across thread counts") {
  Rng rng(99);
  Camera cam = test_camera();
  auto scene = random_scene<double>(rng, 40);
  RasterSettings<double> settings;  // default thresholds on
  settings.background_color = Vec3<double>(0.1, 0.1, 0.1);
  auto a = render(scene, cam, settings, 1);
  auto b = render(scene, cam, settings, 8);
  CHECK(a.rgb == b.rgb);
  CHECK(a.feature == b.feature);
  CHECK(a.depth == b.depth);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("transmittance telescoping and alpha bounds on random scenes") {
  Rng rng(17);
  Camera cam = test_camera(32, 32);
  for (int trial = 0; trial < 5; ++trial) {
    auto scene = random_scene<double>(rng, 24);
    auto settings = open_settings<double>();
    auto out = render(scene, cam, settings);
    for (size_t p = 0; p < out.alpha.size(); ++p) {
      CHECK(out.alpha[p] >= 0.0);
      CHECK(out.alpha[p] <= 1.0);
    }
    // Telescoping: sum of compositing weights equals 1 - prod(1 - a_i).
    // Verified with an all-ones semantic probe.
    auto probe = scene;
    for (auto& prim : probe.primitives) prim.semantic = Vec3<double>(1, 1, 1);
    auto pout = render(probe, cam, settings);
    for (size_t p = 0; p < pout.alpha.size(); ++p)
      CHECK(std::abs(pout.feature[3 * p] - pout.alpha[p]) < 1e-9);
  }
}

TEST_CASE("alpha is monotone as gaussians are appended") {
  Rng rng(23);
  Camera cam = test_camera(32, 32);
  auto settings = open_settings<double>();
  DynamicScene<double> scene;
  std::vector<double> prev(32 * 32, 0.0);
  for (int i = 0; i < 12; ++i) {
    scene.primitives.push_back(random_primitive<double>(rng));
    auto out = render(scene, cam, settings);
    for (size_t p = 0; p < out.alpha.size(); ++p) CHECK(out.alpha[p] >= prev[p] - 1e-12);
    prev = out.alpha;
  }
}

TEST_CASE("backward with zero upstream gradients is zero") {
  Rng rng(31);
  Camera cam = test_camera(32, 32);
  auto scene = random_scene<double>(rng, 8);
  ImageBundle<double> zero(cam.width, cam.height);
  auto grads = render_backward(scene, cam, open_settings<double>(), zero);
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    CHECK(grads.position[i].norm() == 0.0);
    CHECK(grads.sh_coeffs[i].norm() == 0.0);
    CHECK(grads.rotation[i].norm() == 0.0);
    CHECK(grads.scale[i].norm() == 0.0);
    CHECK(grads.opacity[i] == 0.0);
    CHECK(grads.semantic[i].norm() == 0.0);
  }
}

TEST_CASE("backward rejects mismatched gradient shapes") {
  Camera cam = test_camera(32, 32);
  DynamicScene<double> scene;
  scene.primitives.push_back(GaussianPrimitive<double>{});
  ImageBundle<double> wrong(16, 16);
  CHECK_THROWS_AS(render_backward(scene, cam, open_settings<double>(), wrong), ShapeError);
}

namespace {

// Scalar image loss: fixed random weights dotted with every output channel.
struct WeightedImageLoss {
  Camera cam;
  RasterSettings<double> settings;
  ImageBundle<double> weights;

  WeightedImageLoss(const Camera& c, const RasterSettings<double>& s, Rng& rng)
      : cam(c), settings(s), weights(c.width, c.height) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double scale = 1.0 / double(c.width * c.height);
    for (auto& v : weights.rgb) v = u(rng) * scale;
    for (auto& v : weights.feature) v = u(rng) * scale;
    for (auto& v : weights.depth) v = u(rng) * scale;
    for (auto& v : weights.alpha) v = u(rng) * scale;
  }

  double value(const DynamicScene<double>& scene) const {
    auto out = render(scene, cam, settings);
    double acc = 0;
    for (size_t i = 0; i < out.rgb.size(); ++i) acc += out.rgb[i] * weights.rgb[i];
    for (size_t i = 0; i < out.feature.size(); ++i) acc += out.feature[i] * weights.feature[i];
    for (size_t i = 0; i < out.depth.size(); ++i) acc += out.depth[i] * weights.depth[i];
    for (size_t i = 0; i < out.alpha.size(); ++i) acc += out.alpha[i] * weights.alpha[i];
    return acc;
  }
};

// Flatten a scene's parameters into one vector (26 per primitive).
VecX<double> flatten(const DynamicScene<double>& scene) {
  VecX<double> x(26 * scene.primitives.size());
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    x.segment<3>(26 * i + 0) = p.position;
    x.segment<12>(26 * i + 3) = p.sh_coeffs;
    x.segment<4>(26 * i + 15) = p.rotation;
    x.segment<3>(26 * i + 19) = p.scale;
    x[26 * i + 22] = p.opacity;
    x.segment<3>(26 * i + 23) = p.semantic;
  }
  return x;
}

DynamicScene<double> unflatten(const VecX<double>& x, const DynamicScene<double>& like) {
  DynamicScene<double> scene = like;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    auto& p = scene.primitives[i];
    p.position = x.segment<3>(26 * i + 0);
    p.sh_coeffs = x.segment<12>(26 * i + 3);
    p.rotation = x.segment<4>(26 * i + 15);
    p.scale = x.segment<3>(26 * i + 19);
    p.opacity = x[26 * i + 22];
    p.semantic = x.segment<3>(26 * i + 23);
  }
  return scene;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences for every parameter") {
  Rng rng(1234);
  Camera cam = test_camera(32, 32);
  auto scene = random_scene<double>(rng, 8);
  auto settings = open_settings<double>();
  WeightedImageLoss loss(cam, settings, rng);

  auto grads = render_backward(scene, cam, settings, loss.weights);
  VecX<double> analytic(26 * scene.primitives.size());
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    analytic.segment<3>(26 * i + 0) = grads.position[i];
    analytic.segment<12>(26 * i + 3) = grads.sh_coeffs[i];
    analytic.segment<4>(26 * i + 15) = grads.rotation[i];
    analytic.segment<3>(26 * i + 19) = grads.scale[i];
    analytic[26 * i + 22] = grads.opacity[i];
    analytic.segment<3>(26 * i + 23) = grads.semantic[i];
  }
  auto f = [&](const VecX<double>& x) { return loss.value(unflatten(x, scene)); };
  auto result = grad_check(f, analytic, flatten(scene), 1e-5);
  INFO("worst coordinate ", result.worst_index, " analytic ", result.worst_analytic, " numeric ",
       result.worst_numeric);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("occluded gaussian has strongly suppressed opacity gradient") {
  Camera cam = test_camera();
  DynamicScene<double> scene;
  GaussianPrimitive<double> front, back;
  const double z = 2.0;
  front.position = Vec3<double>((32.5 - cam.cx) / cam.fx * z, (32.5 - cam.cy) / cam.fy * z, z);
  front.scale = Vec3<double>(0.3, 0.3, 0.3);
  front.opacity = 0.999;  // clipped to 0.99 near the center
  back = front;
  back.position[2] = 3.0;
  back.scale = Vec3<double>(0.005, 0.005, 0.005);
  back.opacity = 0.9;
  scene.primitives = {front, back};

  ImageBundle<double> upstream(cam.width, cam.height);
  for (auto& v : upstream.rgb) v = 1.0;
  auto grads = render_backward(scene, cam, open_settings<double>(), upstream);
  CHECK(std::abs(grads.opacity[1]) < 1e-2 * std::abs(grads.opacity[0]));
}

TEST_CASE("backward is bit-identical across thread counts") {
  Rng rng(555);
  Camera cam = test_camera(48, 48);
  auto scene = random_scene<double>(rng, 30);
  auto settings = open_settings<double>();
  ImageBundle<double> upstream(cam.width, cam.height);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : upstream.rgb) v = u(rng);
  for (auto& v : upstream.depth) v = u(rng);
  auto a = render_backward(scene, cam, settings, upstream, 1);
  auto b = render_backward(scene, cam, settings, upstream, 8);
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    CHECK(a.position[i] == b.position[i]);
    CHECK(a.sh_coeffs[i] == b.sh_coeffs[i]);
    CHECK(a.rotation[i] == b.rotation[i]);
    CHECK(a.scale[i] == b.scale[i]);
    CHECK(a.opacity[i] == b.opacity[i]);
    CHECK(a.semantic[i] == b.semantic[i]);
  }
}

TEST_CASE("singular covariance is skipped and tallied") {
  Camera cam = test_camera();
  DynamicScene<double> scene;
  GaussianPrimitive<double> p;
  p.position = Vec3<double>(0, 0, 2);
  p.scale = Vec3<double>(1e-12, 1e-12, 1e-12);
  scene.primitives.push_back(p);
  RenderStats stats;
  auto settings = open_settings<double>();
  settings.lowpass_eps = 0.0;  // allow the footprint to degenerate
  render(scene, cam, settings, 1, &stats);
  CHECK(stats.singular_skipped == 1);
}
