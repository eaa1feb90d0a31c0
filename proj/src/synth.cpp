#include "depthfill/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "depthfill/rng.hpp"

namespace depthfill {

namespace {

// Library identity: kind, dimensions, material and albedo are a pure function
// of (dataset_seed, object_id), so the same id looks identical in every scene.
struct LibraryEntry {
  PrimitiveKind kind;
  Vec3 size;
  bool transparent;
  std::array<float, 3> albedo;
};

int transparent_pool_size(int library_size) { return (library_size * 3 + 4) / 5; }

LibraryEntry library_entry(uint64_t dataset_seed, int object_id, const SceneConfig& config) {
  Rng rng = Rng::derive(dataset_seed ^ 0x0b7ec7ull, static_cast<uint64_t>(object_id));
  LibraryEntry e;
  const double roll = rng.uniform();
  e.kind = roll < 0.34   ? PrimitiveKind::Sphere
           : roll < 0.67 ? PrimitiveKind::Box
                         : PrimitiveKind::Cylinder;
  const double lo = config.min_size, hi = config.max_size;
  switch (e.kind) {
    case PrimitiveKind::Sphere:
      e.size = {rng.uniform(lo, hi) / 2.0, 0, 0};
      break;
    case PrimitiveKind::Box:
      e.size = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
      break;
    case PrimitiveKind::Cylinder:
      e.size = {rng.uniform(lo, hi) / 2.2, rng.uniform(lo, hi), 0};
      break;
  }
  e.transparent = object_id < transparent_pool_size(config.library_size);
  if (e.transparent) {
    // cool glass-like tint
    e.albedo = {static_cast<float>(rng.uniform(0.55, 0.75)),
                static_cast<float>(rng.uniform(0.7, 0.9)),
                static_cast<float>(rng.uniform(0.8, 0.98))};
  } else {
    e.albedo = {static_cast<float>(rng.uniform(0.15, 0.95)),
                static_cast<float>(rng.uniform(0.15, 0.95)),
                static_cast<float>(rng.uniform(0.15, 0.95))};
  }
  return e;
}

double footprint_radius(const LibraryEntry& e) {
  switch (e.kind) {
    case PrimitiveKind::Sphere: return e.size.x;
    case PrimitiveKind::Box: return 0.5 * std::hypot(e.size.x, e.size.y);
    case PrimitiveKind::Cylinder: return e.size.x;
  }
  return 0;
}

double rest_height(const LibraryEntry& e) {
  switch (e.kind) {
    case PrimitiveKind::Sphere: return e.size.x;
    case PrimitiveKind::Box: return e.size.z / 2.0;
    case PrimitiveKind::Cylinder: return e.size.y / 2.0;
  }
  return 0;
}

// Upright pose for a cylinder: object z axis must stay vertical, so only a
// yaw is applied; same for boxes. Spheres ignore orientation.
RigidTransform object_pose(double x, double y, double z, double yaw) {
  return RigidTransform::axis_angle({0, 0, 1}, yaw, {x, y, z});
}

std::vector<int> draw_without_replacement(Rng& rng, int pool_begin, int pool_end, int count) {
  std::vector<int> ids;
  for (int i = pool_begin; i < pool_end; ++i) ids.push_back(i);
  for (int i = 0; i < count; ++i) {
    const size_t j = static_cast<size_t>(i) + rng.uniform_int(ids.size() - static_cast<size_t>(i));
    std::swap(ids[static_cast<size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<size_t>(count));
  return ids;
}

}  // namespace

SceneSpec generate_scene(uint64_t dataset_seed, int scene_id, const SceneConfig& config) {
  if (config.min_transparent > config.max_transparent || config.min_opaque > config.max_opaque)
    throw std::invalid_argument("generate_scene: bad object count ranges");
  const int t_pool = transparent_pool_size(config.library_size);
  if (config.max_transparent > t_pool || config.max_opaque > config.library_size - t_pool)
    throw std::invalid_argument("generate_scene: object counts exceed the library pools");

  Rng rng = Rng::derive(dataset_seed, 1000 + static_cast<uint64_t>(scene_id));
  SceneSpec scene;
  scene.background_seed = rng.next_u64();

  const int n_t = config.min_transparent +
                  static_cast<int>(rng.uniform_int(
                      static_cast<uint64_t>(config.max_transparent - config.min_transparent + 1)));
  const int n_o = config.min_opaque +
                  static_cast<int>(rng.uniform_int(
                      static_cast<uint64_t>(config.max_opaque - config.min_opaque + 1)));

  std::vector<int> ids = draw_without_replacement(rng, 0, t_pool, n_t);
  for (int id : draw_without_replacement(rng, t_pool, config.library_size, n_o))
    ids.push_back(id);

  struct Footprint {
    double x, y, r;
  };
  std::vector<Footprint> placed;
  int attempts = 0;
  for (int id : ids) {
    const LibraryEntry entry = library_entry(dataset_seed, id, config);
    const double r = footprint_radius(entry);
    bool ok = false;
    while (!ok) {
      if (++attempts > config.max_attempts)
        throw std::runtime_error(
            "generate_scene: placement rejection sampling exceeded " +
            std::to_string(config.max_attempts) +
            " attempts; reduce object counts or sizes, or enlarge placement_radius");
      const double max_r = std::max(0.0, config.placement_radius - r);
      const double ang = rng.uniform(0, 2 * M_PI);
      const double rad = std::sqrt(rng.uniform()) * max_r;
      const double x = rad * std::cos(ang), y = rad * std::sin(ang);
      ok = true;
      for (const auto& f : placed)
        if (std::hypot(x - f.x, y - f.y) < r + f.r + 0.005) {
          ok = false;
          break;
        }
      if (ok) {
        placed.push_back({x, y, r});
        PlacedObject obj;
        obj.object_id = id;
        obj.kind = entry.kind;
        obj.size = entry.size;
        obj.transparent = entry.transparent;
        obj.albedo = entry.albedo;
        obj.pose = object_pose(x, y, scene.table_height + rest_height(entry),
                               rng.uniform(0, 2 * M_PI));
        scene.objects.push_back(obj);
      }
    }
  }
  return scene;
}

TrajectorySpec make_trajectory(const TrajectoryConfig& config) {
  if (config.viewpoints < 1) throw std::invalid_argument("make_trajectory: need >= 1 viewpoint");
  TrajectorySpec traj;
  const Vec3 center{0, 0, config.center_height};
  for (int k = 0; k < config.viewpoints; ++k) {
    const double ang = 2.0 * M_PI * k / config.viewpoints;
    const Vec3 eye{config.radius * std::cos(ang), config.radius * std::sin(ang), config.height};
    traj.camera_to_world.push_back(RigidTransform::look_at(eye, center, {0, 0, 1}));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace {

uint64_t pixel_hash(uint64_t seed, int v, int u, int salt) {
  uint64_t z = seed ^ (static_cast<uint64_t>(v) * 73856093ull) ^
               (static_cast<uint64_t>(u) * 19349663ull) ^ (static_cast<uint64_t>(salt) << 32);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double hash_unit(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

struct Shading {
  std::array<double, 3> bg_a, bg_b;      // background gradient colors
  std::array<double, 3> table_a, table_b;  // checker colors
  Vec3 light_world;
};

Shading make_shading(uint64_t background_seed) {
  Shading s;
  Rng rng(background_seed);
  for (int c = 0; c < 3; ++c) s.bg_a[static_cast<size_t>(c)] = rng.uniform(0.25, 0.6);
  for (int c = 0; c < 3; ++c) s.bg_b[static_cast<size_t>(c)] = rng.uniform(0.4, 0.8);
  for (int c = 0; c < 3; ++c) s.table_a[static_cast<size_t>(c)] = rng.uniform(0.3, 0.8);
  for (int c = 0; c < 3; ++c) s.table_b[static_cast<size_t>(c)] = rng.uniform(0.2, 0.7);
  s.light_world = Vec3{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 1.0}.normalized();
  return s;
}

std::array<double, 3> table_albedo(const Shading& s, const Vec3& world_pos) {
  const int cx = static_cast<int>(std::floor(world_pos.x / 0.09));
  const int cy = static_cast<int>(std::floor(world_pos.y / 0.09));
  return ((cx + cy) & 1) ? s.table_b : s.table_a;
}

Primitive table_primitive(const SceneSpec& scene) {
  Primitive table;
  table.object_id = kTableObjectId;
  table.kind = PrimitiveKind::Box;
  table.size = {1.8, 1.8, 0.04};
  table.pose = RigidTransform::translation({0, 0, scene.table_height - 0.02});
  return table;
}

}  // namespace

ViewRender render_view(const SceneSpec& scene, const std::vector<RigidTransform>& poses_in_camera,
                       const RigidTransform& camera_from_world, const CameraIntrinsics& intr) {
  if (poses_in_camera.size() != scene.objects.size())
    throw std::invalid_argument("render_view: one camera-frame pose per object required");

  std::vector<Primitive> prims;
  prims.reserve(scene.objects.size() + 1);
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& obj = scene.objects[i];
    prims.push_back({obj.object_id, obj.kind, obj.size, poses_in_camera[i]});
  }
  {
    Primitive table = table_primitive(scene);
    table.pose = compose(camera_from_world, table.pose);
    prims.push_back(table);
  }

  const RenderResult render = render_depth(prims, RigidTransform(), intr);
  const int H = intr.height, W = intr.width;

  ViewRender out;
  out.gt_depth = render.depth;
  out.behind = render.behind;
  out.normals = render.normals;
  out.transparent_mask = Mask(H, W);

  std::vector<const PlacedObject*> by_id(static_cast<size_t>(kTableObjectId) + 1, nullptr);
  for (const auto& obj : scene.objects) by_id[static_cast<size_t>(obj.object_id)] = &obj;

  const Shading shading = make_shading(scene.background_seed);
  const RigidTransform world_from_camera = invert(camera_from_world);
  out.rgb = ImageU8(H, W, 3);

  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const size_t px = static_cast<size_t>(v) * W + u;
      const int id = render.ids[px];
      const Vec3 dir{(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
      std::array<double, 3> color{};
      if (id < 0) {
        const double t = static_cast<double>(v) / std::max(1, H - 1);
        for (int c = 0; c < 3; ++c)
          color[static_cast<size_t>(c)] =
              shading.bg_a[static_cast<size_t>(c)] * (1 - t) + shading.bg_b[static_cast<size_t>(c)] * t;
      } else {
        const Vec3 hit_cam = dir * render.depth.at(v, u);
        const Vec3 hit_world = world_from_camera.apply(hit_cam);
        const float* nf = render.normals.at(v, u);
        const Vec3 n_world = world_from_camera.rotate({nf[0], nf[1], nf[2]});
        const double lambert = 0.35 + 0.65 * std::max(0.0, n_world.dot(shading.light_world));

        const PlacedObject* obj = (id == kTableObjectId) ? nullptr : by_id[static_cast<size_t>(id)];
        if (obj && obj->transparent) {
          // what the sensor-facing ray sees behind the glass
          std::array<double, 3> base;
          const int bid = render.behind_ids[px];
          if (bid < 0) {
            const double t = static_cast<double>(v) / std::max(1, H - 1);
            for (int c = 0; c < 3; ++c)
              base[static_cast<size_t>(c)] = shading.bg_a[static_cast<size_t>(c)] * (1 - t) +
                                             shading.bg_b[static_cast<size_t>(c)] * t;
          } else if (bid == kTableObjectId) {
            const Vec3 bw = world_from_camera.apply(dir * render.behind.at(v, u));
            base = table_albedo(shading, bw);
            for (auto& c : base) c *= 0.8;
          } else {
            const PlacedObject* bobj = by_id[static_cast<size_t>(bid)];
            for (int c = 0; c < 3; ++c) base[static_cast<size_t>(c)] = 0.75 * bobj->albedo[static_cast<size_t>(c)];
          }
          // Fresnel-style rim so RGB carries a visible cue of the glass
          const Vec3 view = dir.normalized();
          const double cosv = std::fabs(Vec3{nf[0], nf[1], nf[2]}.dot(view));
          const double fresnel = 0.08 + 0.92 * std::pow(1.0 - cosv, 5.0);
          const double w = std::min(1.0, fresnel * 1.6) * 0.85;
          for (int c = 0; c < 3; ++c)
            color[static_cast<size_t>(c)] =
                (base[static_cast<size_t>(c)] * (1 - w) + 0.95 * w) * 0.85 +
                0.15 * obj->albedo[static_cast<size_t>(c)] * lambert;
          out.transparent_mask.at(v, u) = 1;
        } else {
          std::array<double, 3> albedo;
          if (id == kTableObjectId) {
            albedo = table_albedo(shading, hit_world);
          } else {
            for (int c = 0; c < 3; ++c) albedo[static_cast<size_t>(c)] = obj->albedo[static_cast<size_t>(c)];
          }
          for (int c = 0; c < 3; ++c) color[static_cast<size_t>(c)] = albedo[static_cast<size_t>(c)] * lambert;
        }
      }
      // deterministic pixel-indexed texture noise
      const double noise =
          (hash_unit(pixel_hash(scene.background_seed, v, u, 7)) - 0.5) * (8.0 / 255.0);
      for (int c = 0; c < 3; ++c) {
        const double val = std::clamp(color[static_cast<size_t>(c)] + noise, 0.0, 1.0);
        out.rgb.at(v, u, c) = static_cast<uint8_t>(std::lround(val * 255.0));
      }
    }
  }

  out.objects.reserve(scene.objects.size());
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    ObjectInfo info;
    info.id = scene.objects[i].object_id;
    info.transparent = scene.objects[i].transparent;
    info.pose_in_camera = poses_in_camera[i].matrix();
    out.objects.push_back(info);
  }
  return out;
}

std::vector<ViewRender> render_viewpoints(const SceneSpec& scene, const TrajectorySpec& traj,
                                          const CameraIntrinsics& intr) {
  if (traj.camera_to_world.empty())
    throw std::invalid_argument("render_viewpoints: empty trajectory");
  std::vector<ViewRender> views;
  views.reserve(traj.camera_to_world.size());

  // viewpoint-0 object poses, then per-view recovery through the pose chain
  const RigidTransform world_to_cam0 = invert(traj.camera_to_world[0]);
  std::vector<RigidTransform> poses_cam0;
  poses_cam0.reserve(scene.objects.size());
  for (const auto& obj : scene.objects) poses_cam0.push_back(compose(world_to_cam0, obj.pose));

  for (const auto& cam_to_world : traj.camera_to_world) {
    const RigidTransform world_to_cam = invert(cam_to_world);
    std::vector<RigidTransform> poses;
    poses.reserve(scene.objects.size());
    for (const auto& pose0 : poses_cam0)
      poses.push_back(propagate_pose(world_to_cam, world_to_cam0, pose0));
    views.push_back(render_view(scene, poses, world_to_cam, intr));
  }
  return views;
}

// ---------------------------------------------------------------------------
// corruption
// ---------------------------------------------------------------------------

void CorruptionModel::validate() const {
  if (p_drop < 0 || p_drop > 1 || p_bleed < 0 || p_bleed > 1)
    throw std::invalid_argument("CorruptionModel: probabilities must be in [0,1]");
  if (sigma < 0) throw std::invalid_argument("CorruptionModel: sigma must be >= 0");
  if (dilation_radius < 0 || blob_count < 0 || blob_radius < 0)
    throw std::invalid_argument("CorruptionModel: radii and counts must be >= 0");
}

DepthMap corrupt_depth(const DepthMap& gt_depth, const Mask& mask, const DepthMap& behind_depth,
                       const CorruptionModel& model, uint64_t seed) {
  model.validate();
  const int H = gt_depth.height(), W = gt_depth.width();
  if (mask.height != H || mask.width != W || !gt_depth.same_size(behind_depth))
    throw std::invalid_argument("corrupt_depth: grids disagree on size");

  // dilate the mask
  Mask region(H, W);
  const int r = model.dilation_radius;
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      if (!mask.at(v, u)) continue;
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) {
          if (dv * dv + du * du > r * r) continue;
          const int y = v + dv, x = u + du;
          if (y >= 0 && y < H && x >= 0 && x < W) region.at(y, x) = 1;
        }
    }

  DepthMap out = gt_depth;
  Rng rng(seed);
  std::vector<std::pair<int, int>> region_pixels;
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      if (!region.at(v, u)) continue;
      region_pixels.emplace_back(v, u);
      if (rng.uniform() < model.p_bleed) {
        out.at(v, u) = behind_depth.at(v, u);
      } else if (rng.uniform() < model.p_drop) {
        out.at(v, u) = 0.0f;
      } else {
        const double noisy = out.at(v, u) + rng.normal(0.0, model.sigma);
        out.at(v, u) = static_cast<float>(std::max(0.0, noisy));
      }
    }

  if (!region_pixels.empty()) {
    for (int b = 0; b < model.blob_count; ++b) {
      const auto [cv, cu] = region_pixels[rng.uniform_int(region_pixels.size())];
      const double radius = model.blob_radius <= 1.0 ? model.blob_radius
                                                     : rng.uniform(1.0, model.blob_radius);
      const int ir = static_cast<int>(std::ceil(radius));
      for (int dv = -ir; dv <= ir; ++dv)
        for (int du = -ir; du <= ir; ++du) {
          if (dv * dv + du * du > radius * radius) continue;
          const int y = cv + dv, x = cu + du;
          if (y >= 0 && y < H && x >= 0 && x < W && region.at(y, x)) out.at(y, x) = 0.0f;
        }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

std::vector<Sample> generate_scene_samples(uint64_t dataset_seed, int scene_id,
                                           const GenerateConfig& config) {
  config.intrinsics.validate();
  const SceneSpec scene = generate_scene(dataset_seed, scene_id, config.scene);
  const TrajectorySpec traj = make_trajectory(config.trajectory);
  auto views = render_viewpoints(scene, traj, config.intrinsics);

  std::vector<Sample> samples;
  samples.reserve(views.size());
  for (size_t k = 0; k < views.size(); ++k) {
    auto& view = views[k];
    Sample s;
    s.raw_depth = corrupt_depth(view.gt_depth, view.transparent_mask, view.behind,
                                config.corruption,
                                Rng::derive(dataset_seed, 0xc0de0000ull +
                                                              static_cast<uint64_t>(scene_id) * 4096 +
                                                              k)
                                    .next_u64());
    s.rgb = std::move(view.rgb);
    s.gt_depth = std::move(view.gt_depth);
    s.transparent_mask = std::move(view.transparent_mask);
    s.gt_normals = std::move(view.normals);
    s.meta.scene_id = scene_id;
    s.meta.viewpoint = static_cast<int>(k);
    s.meta.objects = std::move(view.objects);
    s.meta.intrinsics = config.intrinsics;
    samples.push_back(std::move(s));
  }
  return samples;
}

GenerateStats generate_dataset(const std::string& root, int scene_count, uint64_t seed,
                               const GenerateConfig& config, const VerifyConfig& verify,
                               int holdout_count, uint64_t split_seed) {
  GenerateStats stats;
  for (int scene_id = 0; scene_id < scene_count; ++scene_id) {
    auto samples = generate_scene_samples(seed, scene_id, config);
    ++stats.scenes;
    for (const auto& sample : samples) {
      const auto check = verify_sample(sample, verify);
      if (!check.accepted) {
        ++stats.samples_rejected;
        continue;
      }
      save_sample(sample, root + "/scene_" + std::to_string(scene_id) + "/view_" +
                              std::to_string(sample.meta.viewpoint));
      ++stats.samples_written;
    }
  }
  const auto scenes = scan_scenes(root);
  const SplitSpec split = split_dataset(scenes, holdout_count, split_seed);
  save_split(split, root + "/split.json");
  return stats;
}

}  // namespace depthfill
