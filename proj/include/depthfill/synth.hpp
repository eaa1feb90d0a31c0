#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "depthfill/dataset.hpp"
#include "depthfill/geometry.hpp"

namespace depthfill {

// Object id used for the table slab in rendered id maps. Placed objects use
// small library ids, so there is no collision.
constexpr int kTableObjectId = 100000;

struct PlacedObject {
  int object_id = 0;  // library identity, shared across scenes
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 size;
  RigidTransform pose;  // world frame
  bool transparent = false;
  std::array<float, 3> albedo{0.5f, 0.5f, 0.5f};
};

struct SceneSpec {
  std::vector<PlacedObject> objects;
  double table_height = 0.0;
  uint64_t background_seed = 0;
};

struct SceneConfig {
  int min_transparent = 4, max_transparent = 6;
  int min_opaque = 2, max_opaque = 4;
  double min_size = 0.05, max_size = 0.13;   // meters
  double placement_radius = 0.28;            // objects stay within this disk
  int library_size = 32;                     // distinct object identities
  int max_attempts = 2000;

  static SceneConfig isolated() {
    SceneConfig c;
    c.min_transparent = 1;
    c.max_transparent = 3;
    c.min_opaque = 0;
    c.max_opaque = 2;
    return c;
  }
  static SceneConfig cluttered() { return SceneConfig{}; }
};

// Seeded placement with pairwise bounding-circle rejection sampling. Object
// identities (kind, size, material, albedo) come from a deterministic library
// shared by every scene of the same dataset seed, so a held-out object id
// means the same thing in every scene.
SceneSpec generate_scene(uint64_t dataset_seed, int scene_id, const SceneConfig& config);

struct TrajectoryConfig {
  int viewpoints = 24;
  double radius = 0.75;       // orbit radius around the scene center (m)
  double height = 0.55;       // camera height above the table (m)
  double center_height = 0.05;  // aim point above the table (m)
};

struct TrajectorySpec {
  std::vector<RigidTransform> camera_to_world;  // ordered viewpoints
};

// Circular orbit looking at the scene center; every pose projects the center
// inside the image by construction.
TrajectorySpec make_trajectory(const TrajectoryConfig& config);

struct CorruptionModel {
  double p_drop = 0.6;          // dropout probability inside the (dilated) mask
  double p_bleed = 0.2;         // take the depth of whatever lies behind
  double sigma = 0.01;          // Gaussian depth noise (m)
  int dilation_radius = 2;      // pixels
  int blob_count = 3;           // extra blob-shaped dropouts
  double blob_radius = 3.0;     // max blob radius (pixels)

  void validate() const;
};

// Sensor-failure simulation. Pixels outside the dilated mask pass through
// untouched; inside, each pixel bleeds to behind_depth with p_bleed, drops to
// zero with p_drop, and otherwise picks up Gaussian noise. Deterministic per
// seed.
DepthMap corrupt_depth(const DepthMap& gt_depth, const Mask& mask, const DepthMap& behind_depth,
                       const CorruptionModel& model, uint64_t seed);

struct ViewRender {
  DepthMap gt_depth;
  DepthMap behind;
  Mask transparent_mask;
  NormalMap normals;
  ImageU8 rgb;
  std::vector<ObjectInfo> objects;  // per-view object poses in the camera frame
};

// Renders one viewpoint; object poses are supplied in the camera frame.
ViewRender render_view(const SceneSpec& scene, const std::vector<RigidTransform>& poses_in_camera,
                       const RigidTransform& camera_from_world, const CameraIntrinsics& intr);

// Renders the whole trajectory. Per-view object poses are produced from the
// viewpoint-0 poses through propagate_pose (the tracker-failure recovery
// chain), not recomputed from world poses directly.
std::vector<ViewRender> render_viewpoints(const SceneSpec& scene, const TrajectorySpec& traj,
                                          const CameraIntrinsics& intr);

struct GenerateConfig {
  SceneConfig scene = SceneConfig::cluttered();
  TrajectoryConfig trajectory;
  CorruptionModel corruption;
  CameraIntrinsics intrinsics{260.0, 260.0, 159.5, 119.5, 320, 240};
};

// All samples of one scene: render along the trajectory, then corrupt the raw
// depth inside the transparent mask.
std::vector<Sample> generate_scene_samples(uint64_t dataset_seed, int scene_id,
                                           const GenerateConfig& config);

struct GenerateStats {
  int scenes = 0;
  int samples_written = 0;
  int samples_rejected = 0;
};

// Full pipeline: scenes -> samples -> verify filter -> on-disk layout plus
// split.json. Reproducible: (seed, config) fixes every byte except file
// timestamps.
GenerateStats generate_dataset(const std::string& root, int scene_count, uint64_t seed,
                               const GenerateConfig& config, const VerifyConfig& verify,
                               int holdout_count, uint64_t split_seed);

}  // namespace depthfill
