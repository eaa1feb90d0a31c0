#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "depthfill/geometry.hpp"
#include "depthfill/image.hpp"

namespace depthfill {

// Depth PNGs store round(meters * 10000) in 16 bits (0 = missing), covering
// [0, 6.5535] m at 0.1 mm resolution.
constexpr double kDepthScale = 10000.0;
constexpr double kMaxStorableDepth = 65535.0 / kDepthScale;

struct ObjectInfo {
  int id = 0;
  bool transparent = false;
  std::array<double, 16> pose_in_camera{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
};

struct SampleMeta {
  int scene_id = 0;
  int viewpoint = 0;
  std::vector<ObjectInfo> objects;
  CameraIntrinsics intrinsics;
};

// One viewpoint: RGB, sensor-style corrupted depth, rendered ground truth
// depth, transparent mask, analytic surface normals, plus provenance.
struct Sample {
  ImageU8 rgb;
  DepthMap raw_depth;
  DepthMap gt_depth;
  Mask transparent_mask;
  NormalMap gt_normals;
  SampleMeta meta;

  int height() const { return rgb.height; }
  int width() const { return rgb.width; }
  // Throws when the raster planes disagree on size, the mask marks pixels
  // without ground-truth depth, or a flagged normal is not unit length.
  void validate() const;
};

// Layout inside dir: rgb.png, depth_raw.png, depth_gt.png, mask.png,
// normals.bin (little-endian f32, H*W*3 row-major), meta.json.
void save_sample(const Sample& sample, const std::string& dir);
Sample load_sample(const std::string& dir);

// ---- verification ----

struct VerifyConfig {
  double blur_threshold = 4.0;   // min variance of the 3x3 Laplacian response
  double exposure_lo = 8;        // min occupied intensity histogram bins
  double exposure_hi = 0.70;     // max fraction of pixels at intensity <5 or >250
};

struct VerifyResult {
  bool accepted = true;
  std::string reason;  // "blurry" | "improperly exposed" | ""
  double laplacian_variance = 0;
  double extreme_fraction = 0;
  int occupied_bins = 0;
};

// Exposure extremes are checked first (an all-black frame is an exposure
// failure even though its Laplacian variance is also zero), then blur, then
// histogram occupancy.
VerifyResult verify_sample(const Sample& sample, const VerifyConfig& config);

// ---- split ----

struct SceneMeta {
  int scene_id = 0;
  std::vector<int> object_ids;
};

struct SplitSpec {
  std::vector<int> held_out_objects;
  std::vector<int> train_scenes;
  std::vector<int> test_scenes;
};

// Seeded uniform draw of holdout_count object ids; a scene lands in test iff
// it contains at least one held-out object. Pure function of its arguments.
SplitSpec split_dataset(const std::vector<SceneMeta>& scenes, int holdout_count, uint64_t seed);

void save_split(const SplitSpec& split, const std::string& path);
SplitSpec load_split(const std::string& path);

// Scan root/scene_*/ for per-scene object lists.
std::vector<SceneMeta> scan_scenes(const std::string& root);
std::vector<std::string> list_sample_dirs(const std::string& root);
std::vector<std::string> list_sample_dirs(const std::string& root,
                                          const std::vector<int>& scene_ids);

// ---- augmentation ----

struct AugmentConfig {
  double p_flip = 0.5;
  double p_rot = 0.5;
  double p_noise = 0.5;
  double p_hls = 0.5;
  double depth_noise_sigma = 0.005;  // meters, raw depth only, nonzero pixels
  double hue_range_deg = 10.0;
  double lightness_range = 0.1;
  double saturation_range = 0.1;
};

// Horizontal flip and k*90 degree rotations act on every plane (normals
// rotated accordingly); Gaussian depth noise touches raw_depth only; HLS
// jitter touches rgb only. Ground-truth planes never receive noise. On
// non-square rasters only the 180 degree rotation is drawn, so batch shapes
// stay fixed.
Sample augment(const Sample& sample, uint64_t seed, const AugmentConfig& config);

}  // namespace depthfill
