#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "depthfill/rng.hpp"
#include "depthfill/synth.hpp"

using namespace depthfill;

namespace {

CameraIntrinsics small_intr() { return CameraIntrinsics{52.0, 52.0, 31.5, 23.5, 64, 48}; }

GenerateConfig small_config() {
  GenerateConfig cfg;
  cfg.intrinsics = small_intr();
  cfg.trajectory.viewpoints = 4;
  return cfg;
}

}  // namespace

TEST_CASE("generate_scene: zero objects, determinism, preset bounds") {
  SceneConfig empty;
  empty.min_transparent = empty.max_transparent = 0;
  empty.min_opaque = empty.max_opaque = 0;
  CHECK(generate_scene(1, 0, empty).objects.empty());

  const auto a = generate_scene(7, 3, SceneConfig::cluttered());
  const auto b = generate_scene(7, 3, SceneConfig::cluttered());
  REQUIRE(a.objects.size() == b.objects.size());
  CHECK(a.background_seed == b.background_seed);
  for (size_t i = 0; i < a.objects.size(); ++i) {
    CHECK(a.objects[i].object_id == b.objects[i].object_id);
    CHECK(a.objects[i].pose.matrix() == b.objects[i].pose.matrix());
    CHECK(a.objects[i].transparent == b.objects[i].transparent);
  }

  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = generate_scene(seed, 0, SceneConfig::cluttered());
    int transparent = 0, opaque = 0;
    for (const auto& obj : scene.objects) (obj.transparent ? transparent : opaque)++;
    CHECK(transparent >= 4);
    CHECK(opaque >= 2);

    const auto iso = generate_scene(seed, 0, SceneConfig::isolated());
    int iso_t = 0;
    for (const auto& obj : iso.objects) iso_t += obj.transparent ? 1 : 0;
    CHECK(iso_t >= 1);
    CHECK(iso_t <= 3);
  }
}

TEST_CASE("generate_scene: object ids unique, objects above the table") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const auto scene = generate_scene(seed, 2, SceneConfig::cluttered());
    std::set<int> ids;
    for (const auto& obj : scene.objects) {
      ids.insert(obj.object_id);
      // resting pose keeps the body on or above the table plane
      const double z = obj.pose.translation_part().z;
      CHECK(z >= scene.table_height - 1e-9);
    }
    CHECK(ids.size() == scene.objects.size());
  }
}

TEST_CASE("generate_scene: impossible packing reports a useful error") {
  SceneConfig cfg = SceneConfig::cluttered();
  cfg.min_transparent = cfg.max_transparent = 12;
  cfg.min_opaque = cfg.max_opaque = 8;
  cfg.placement_radius = 0.05;
  cfg.max_attempts = 200;
  CHECK_THROWS_AS(generate_scene(1, 0, cfg), std::runtime_error);
}

TEST_CASE("trajectory poses all aim at the scene center") {
  TrajectoryConfig cfg;
  cfg.viewpoints = 12;
  const auto traj = make_trajectory(cfg);
  REQUIRE(traj.camera_to_world.size() == 12);
  const auto intr = small_intr();
  for (const auto& pose : traj.camera_to_world) {
    const Vec3 center_cam = invert(pose).apply({0, 0, cfg.center_height});
    REQUIRE(center_cam.z > 0);
    const double u = center_cam.x / center_cam.z * intr.fx + intr.cx;
    const double v = center_cam.y / center_cam.z * intr.fy + intr.cy;
    CHECK(u >= 0);
    CHECK(u < intr.width);
    CHECK(v >= 0);
    CHECK(v < intr.height);
  }
  // distinct viewpoints
  for (size_t i = 1; i < traj.camera_to_world.size(); ++i)
    CHECK(traj.camera_to_world[i].matrix() != traj.camera_to_world[0].matrix());
}

TEST_CASE("render_viewpoints: opaque-only scene has an empty mask") {
  SceneSpec scene;
  PlacedObject obj;
  obj.object_id = 20;
  obj.kind = PrimitiveKind::Sphere;
  obj.size = {0.08, 0, 0};
  obj.pose = RigidTransform::translation({0, 0, 0.08});
  obj.transparent = false;
  scene.objects.push_back(obj);
  const auto views = render_viewpoints(scene, make_trajectory({4, 0.7, 0.5, 0.05}), small_intr());
  for (const auto& view : views) CHECK(view.transparent_mask.count() == 0);
}

TEST_CASE("render_viewpoints: transparent mask equals the id-map footprint") {
  SceneSpec scene;
  PlacedObject obj;
  obj.object_id = 3;
  obj.kind = PrimitiveKind::Sphere;
  obj.size = {0.09, 0, 0};
  obj.pose = RigidTransform::translation({0, 0, 0.09});
  obj.transparent = true;
  scene.objects.push_back(obj);

  const auto traj = make_trajectory({3, 0.7, 0.5, 0.05});
  const auto views = render_viewpoints(scene, traj, small_intr());
  for (size_t k = 0; k < views.size(); ++k) {
    // reproduce the footprint by rendering the same primitives directly
    const RigidTransform world_to_cam = invert(traj.camera_to_world[k]);
    std::vector<Primitive> prims = {{3, PrimitiveKind::Sphere, obj.size,
                                     compose(world_to_cam, obj.pose)}};
    Primitive table{kTableObjectId, PrimitiveKind::Box, {1.8, 1.8, 0.04},
                    compose(world_to_cam, RigidTransform::translation({0, 0, -0.02}))};
    prims.push_back(table);
    const auto direct = render_depth(prims, RigidTransform(), small_intr());
    int64_t mask_count = 0;
    for (int v = 0; v < 48; ++v)
      for (int u = 0; u < 64; ++u) {
        const bool on_sphere = direct.ids[static_cast<size_t>(v) * 64 + u] == 3;
        CHECK(static_cast<bool>(views[k].transparent_mask.at(v, u)) == on_sphere);
        mask_count += on_sphere;
      }
    CHECK(mask_count > 0);  // the object is actually visible
  }
}

TEST_CASE("render_viewpoints: identical camera poses give identical outputs") {
  const auto scene = generate_scene(5, 0, SceneConfig::cluttered());
  TrajectorySpec traj;
  const auto base = make_trajectory({2, 0.75, 0.55, 0.05});
  traj.camera_to_world = {base.camera_to_world[0], base.camera_to_world[0]};
  const auto views = render_viewpoints(scene, traj, small_intr());
  CHECK(views[0].gt_depth.data() == views[1].gt_depth.data());
  CHECK(views[0].rgb.data == views[1].rgb.data);
  CHECK(views[0].transparent_mask.m == views[1].transparent_mask.m);
  CHECK(views[0].normals.n == views[1].normals.n);
}

TEST_CASE("pose propagation matches direct world-pose rendering") {
  const auto scene = generate_scene(11, 1, SceneConfig::isolated());
  REQUIRE(!scene.objects.empty());
  const auto traj = make_trajectory({5, 0.75, 0.55, 0.05});
  const auto views = render_viewpoints(scene, traj, small_intr());

  for (size_t k = 0; k < views.size(); ++k) {
    const RigidTransform world_to_cam = invert(traj.camera_to_world[k]);
    std::vector<RigidTransform> direct_poses;
    for (const auto& obj : scene.objects) direct_poses.push_back(compose(world_to_cam, obj.pose));
    const auto direct = render_view(scene, direct_poses, world_to_cam, small_intr());
    REQUIRE(direct.gt_depth.data().size() == views[k].gt_depth.data().size());
    for (size_t i = 0; i < direct.gt_depth.data().size(); ++i)
      CHECK(std::fabs(direct.gt_depth.data()[i] - views[k].gt_depth.data()[i]) < 1e-5);
  }
}

TEST_CASE("corrupt_depth: all-zero model is the identity") {
  const auto samples = generate_scene_samples(3, 0, small_config());
  REQUIRE(!samples.empty());
  const auto& s = samples[0];
  CorruptionModel zero{0.0, 0.0, 0.0, 0, 0, 0.0};
  // rebuild behind from a re-render to feed the op directly
  const auto out = corrupt_depth(s.gt_depth, s.transparent_mask, DepthMap(48, 64), zero, 42);
  CHECK(out.data() == s.gt_depth.data());
}

TEST_CASE("corrupt_depth: full dropout zeroes every masked pixel") {
  DepthMap gt(32, 32, 1.0f);
  Mask mask(32, 32);
  for (int v = 8; v < 24; ++v)
    for (int u = 8; u < 24; ++u) mask.at(v, u) = 1;
  CorruptionModel model{1.0, 0.0, 0.0, 0, 0, 0.0};
  const auto out = corrupt_depth(gt, mask, DepthMap(32, 32), model, 9);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u)
      CHECK(out.at(v, u) == (mask.at(v, u) ? 0.0f : 1.0f));
}

TEST_CASE("corrupt_depth: dropout fraction concentrates around p_drop") {
  DepthMap gt(128, 128, 1.0f);
  Mask mask(128, 128);
  for (int v = 14; v < 114; ++v)
    for (int u = 14; u < 114; ++u) mask.at(v, u) = 1;
  REQUIRE(mask.count() == 10000);
  CorruptionModel model{0.5, 0.0, 0.0, 0, 0, 0.0};
  int in_bounds = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = corrupt_depth(gt, mask, DepthMap(128, 128), model, seed);
    int64_t dropped = 0;
    for (int v = 0; v < 128; ++v)
      for (int u = 0; u < 128; ++u)
        if (mask.at(v, u) && out.at(v, u) == 0.0f) ++dropped;
    const double frac = static_cast<double>(dropped) / 10000.0;
    if (frac >= 0.45 && frac <= 0.55) ++in_bounds;
  }
  CHECK(in_bounds >= 9);
}

TEST_CASE("corrupt_depth never touches pixels outside the dilated mask") {
  DepthMap gt(40, 40);
  Rng rng(17);
  for (auto& d : gt.data()) d = static_cast<float>(rng.uniform(0.5, 1.5));
  Mask mask(40, 40);
  for (int v = 10; v < 20; ++v)
    for (int u = 15; u < 30; ++u) mask.at(v, u) = 1;
  DepthMap behind(40, 40, 2.0f);
  CorruptionModel model;  // defaults: dilation 2
  const auto out = corrupt_depth(gt, mask, behind, model, 123);
  const int r = model.dilation_radius;
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 40; ++u) {
      bool in_region = false;
      for (int dv = -r; dv <= r && !in_region; ++dv)
        for (int du = -r; du <= r; ++du) {
          const int y = v + dv, x = u + du;
          if (dv * dv + du * du <= r * r && y >= 0 && y < 40 && x >= 0 && x < 40 &&
              mask.at(y, x)) {
            in_region = true;
            break;
          }
        }
      if (!in_region) CHECK(out.at(v, u) == gt.at(v, u));
    }
  // determinism
  const auto again = corrupt_depth(gt, mask, behind, model, 123);
  CHECK(again.data() == out.data());
}

TEST_CASE("generated samples satisfy the Sample invariants") {
  const auto samples = generate_scene_samples(21, 4, small_config());
  REQUIRE(samples.size() == 4);
  for (const auto& s : samples) {
    CHECK_NOTHROW(s.validate());
    CHECK(s.transparent_mask.count() > 0);
    // gt depth present wherever the mask is set
    for (int v = 0; v < s.gt_depth.height(); ++v)
      for (int u = 0; u < s.gt_depth.width(); ++u)
        if (s.transparent_mask.at(v, u)) CHECK(s.gt_depth.at(v, u) > 0.0f);
  }
}

TEST_CASE("generate_scene_samples is reproducible") {
  const auto a = generate_scene_samples(33, 2, small_config());
  const auto b = generate_scene_samples(33, 2, small_config());
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rgb.data == b[i].rgb.data);
    CHECK(a[i].raw_depth.data() == b[i].raw_depth.data());
    CHECK(a[i].gt_depth.data() == b[i].gt_depth.data());
    CHECK(a[i].transparent_mask.m == b[i].transparent_mask.m);
    CHECK(a[i].gt_normals.n == b[i].gt_normals.n);
  }
}

TEST_CASE("raw depth differs from gt inside the mask under default corruption") {
  const auto samples = generate_scene_samples(8, 0, small_config());
  const auto& s = samples[0];
  int64_t changed = 0, masked = 0;
  for (int v = 0; v < s.gt_depth.height(); ++v)
    for (int u = 0; u < s.gt_depth.width(); ++u)
      if (s.transparent_mask.at(v, u)) {
        ++masked;
        if (s.raw_depth.at(v, u) != s.gt_depth.at(v, u)) ++changed;
      }
  REQUIRE(masked > 0);
  CHECK(static_cast<double>(changed) > 0.5 * static_cast<double>(masked));
}
