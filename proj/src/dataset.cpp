#include "depthfill/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "depthfill/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace depthfill {

void Sample::validate() const {
  const int H = rgb.height, W = rgb.width;
  if (rgb.channels != 3) throw std::invalid_argument("Sample: rgb must have 3 channels");
  if (raw_depth.height() != H || raw_depth.width() != W || gt_depth.height() != H ||
      gt_depth.width() != W || transparent_mask.height != H || transparent_mask.width != W ||
      gt_normals.height != H || gt_normals.width != W)
    throw std::invalid_argument("Sample: raster planes disagree on size");
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      if (transparent_mask.at(v, u) && !(gt_depth.at(v, u) > 0))
        throw std::invalid_argument("Sample: transparent mask set where gt_depth is missing");
      if (gt_normals.valid[static_cast<size_t>(v) * W + u]) {
        const float* n = gt_normals.at(v, u);
        const double len =
            std::sqrt(double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2]);
        if (std::fabs(len - 1.0) > 1e-4)
          throw std::invalid_argument("Sample: flagged normal is not unit length");
      }
    }
  for (float d : raw_depth.data())
    if (!(d >= 0) || !std::isfinite(d))
      throw std::invalid_argument("Sample: raw depth must be finite and >= 0");
  for (float d : gt_depth.data())
    if (!(d >= 0) || !std::isfinite(d))
      throw std::invalid_argument("Sample: gt depth must be finite and >= 0");
}

// ---------------------------------------------------------------------------
// save / load
// ---------------------------------------------------------------------------

namespace {

ImageU16 encode_depth(const DepthMap& depth, const char* plane) {
  ImageU16 img(depth.height(), depth.width());
  for (size_t i = 0; i < depth.data().size(); ++i) {
    const double meters = depth.data()[i];
    if (meters > kMaxStorableDepth)
      throw std::invalid_argument(std::string(plane) + ": depth " + std::to_string(meters) +
                                  " m exceeds the storable maximum " +
                                  std::to_string(kMaxStorableDepth) + " m");
    img.data[i] = static_cast<uint16_t>(std::lround(meters * kDepthScale));
  }
  return img;
}

DepthMap decode_depth(const ImageU16& img) {
  DepthMap depth(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); ++i)
    depth.data()[i] = static_cast<float>(img.data[i] / kDepthScale);
  return depth;
}

json intrinsics_to_json(const CameraIntrinsics& intr) {
  return json{{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
              {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
          j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
}

}  // namespace

void save_sample(const Sample& sample, const std::string& dir) {
  sample.validate();
  fs::create_directories(dir);
  const fs::path base(dir);

  write_png_rgb8(sample.rgb, (base / "rgb.png").string());
  write_png_gray16(encode_depth(sample.raw_depth, "raw_depth"), (base / "depth_raw.png").string());
  write_png_gray16(encode_depth(sample.gt_depth, "gt_depth"), (base / "depth_gt.png").string());

  ImageU8 mask(sample.transparent_mask.height, sample.transparent_mask.width, 1);
  for (size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = sample.transparent_mask.m[i] ? 255 : 0;
  write_png_gray8(mask, (base / "mask.png").string());

  {
    std::ofstream f(base / "normals.bin", std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + (base / "normals.bin").string());
    f.write(reinterpret_cast<const char*>(sample.gt_normals.n.data()),
            static_cast<std::streamsize>(sample.gt_normals.n.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write failed: " + (base / "normals.bin").string());
  }

  json meta;
  meta["scene_id"] = sample.meta.scene_id;
  meta["viewpoint"] = sample.meta.viewpoint;
  meta["intrinsics"] = intrinsics_to_json(sample.meta.intrinsics);
  meta["objects"] = json::array();
  for (const auto& obj : sample.meta.objects) {
    json jo;
    jo["id"] = obj.id;
    jo["transparent"] = obj.transparent;
    jo["pose"] = obj.pose_in_camera;
    meta["objects"].push_back(jo);
  }
  std::ofstream f(base / "meta.json");
  if (!f) throw std::runtime_error("cannot open for writing: " + (base / "meta.json").string());
  f << meta.dump(2) << "\n";
}

Sample load_sample(const std::string& dir) {
  const fs::path base(dir);
  Sample sample;
  sample.rgb = read_png_rgb8((base / "rgb.png").string());
  sample.raw_depth = decode_depth(read_png_gray16((base / "depth_raw.png").string()));
  sample.gt_depth = decode_depth(read_png_gray16((base / "depth_gt.png").string()));

  const ImageU8 mask = read_png_gray8((base / "mask.png").string());
  const int H = sample.rgb.height, W = sample.rgb.width;
  if (mask.height != H || mask.width != W)
    throw std::runtime_error("mask.png is " + std::to_string(mask.width) + "x" +
                             std::to_string(mask.height) + " but rgb.png is " +
                             std::to_string(W) + "x" + std::to_string(H) + " in " + dir);
  sample.transparent_mask = Mask(mask.height, mask.width);
  for (size_t i = 0; i < mask.data.size(); ++i)
    sample.transparent_mask.m[i] = mask.data[i] ? 1 : 0;

  {
    std::ifstream f(base / "normals.bin", std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open: " + (base / "normals.bin").string());
    const auto actual = static_cast<size_t>(f.tellg());
    const size_t expected = static_cast<size_t>(H) * W * 3 * sizeof(float);
    if (actual != expected)
      throw std::runtime_error("normals.bin: expected " + std::to_string(expected) +
                               " bytes, found " + std::to_string(actual) + " in " + dir);
    sample.gt_normals = NormalMap(H, W);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(sample.gt_normals.n.data()),
           static_cast<std::streamsize>(expected));
    if (!f) throw std::runtime_error("read failed: " + (base / "normals.bin").string());
    for (int i = 0; i < H * W; ++i) {
      const float* n = &sample.gt_normals.n[static_cast<size_t>(i) * 3];
      const double len = std::sqrt(double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2]);
      sample.gt_normals.valid[static_cast<size_t>(i)] = len > 0.5 ? 1 : 0;
    }
  }

  std::ifstream f(base / "meta.json");
  if (!f) throw std::runtime_error("cannot open: " + (base / "meta.json").string());
  json meta;
  try {
    f >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error("meta.json is corrupt in " + dir + ": " + e.what());
  }
  sample.meta.scene_id = meta.at("scene_id").get<int>();
  sample.meta.viewpoint = meta.at("viewpoint").get<int>();
  sample.meta.intrinsics = intrinsics_from_json(meta.at("intrinsics"));
  for (const auto& jo : meta.at("objects")) {
    ObjectInfo obj;
    obj.id = jo.at("id").get<int>();
    obj.transparent = jo.at("transparent").get<bool>();
    obj.pose_in_camera = jo.at("pose").get<std::array<double, 16>>();
    sample.meta.objects.push_back(obj);
  }

  sample.validate();
  return sample;
}

// ---------------------------------------------------------------------------
// verification
// ---------------------------------------------------------------------------

VerifyResult verify_sample(const Sample& sample, const VerifyConfig& config) {
  VerifyResult res;
  const auto gray = to_grayscale(sample.rgb);
  const int H = sample.rgb.height, W = sample.rgb.width;

  int64_t extreme = 0;
  std::array<int64_t, 256> hist{};
  for (float g : gray) {
    if (g < 5.0f || g > 250.0f) ++extreme;
    ++hist[static_cast<size_t>(std::clamp(static_cast<int>(std::lround(g)), 0, 255))];
  }
  res.extreme_fraction = static_cast<double>(extreme) / static_cast<double>(gray.size());
  for (int64_t h : hist) res.occupied_bins += h > 0 ? 1 : 0;

  // variance of the 3x3 Laplacian response over interior pixels
  double mean = 0;
  std::vector<double> lap;
  lap.reserve(static_cast<size_t>(std::max(0, (H - 2) * (W - 2))));
  for (int v = 1; v + 1 < H; ++v)
    for (int u = 1; u + 1 < W; ++u) {
      const double l = gray[static_cast<size_t>(v - 1) * W + u] +
                       gray[static_cast<size_t>(v + 1) * W + u] +
                       gray[static_cast<size_t>(v) * W + u - 1] +
                       gray[static_cast<size_t>(v) * W + u + 1] -
                       4.0 * gray[static_cast<size_t>(v) * W + u];
      lap.push_back(l);
      mean += l;
    }
  if (!lap.empty()) {
    mean /= static_cast<double>(lap.size());
    double var = 0;
    for (double l : lap) var += (l - mean) * (l - mean);
    res.laplacian_variance = var / static_cast<double>(lap.size());
  }

  if (res.extreme_fraction > config.exposure_hi) {
    res.accepted = false;
    res.reason = "improperly exposed";
  } else if (res.laplacian_variance < config.blur_threshold) {
    res.accepted = false;
    res.reason = "blurry";
  } else if (res.occupied_bins < config.exposure_lo) {
    res.accepted = false;
    res.reason = "improperly exposed";
  }
  return res;
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

SplitSpec split_dataset(const std::vector<SceneMeta>& scenes, int holdout_count, uint64_t seed) {
  std::vector<int> ids;
  for (const auto& scene : scenes)
    for (int id : scene.object_ids) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (holdout_count < 0 || static_cast<size_t>(holdout_count) > ids.size())
    throw std::invalid_argument("split_dataset: holdout_count " + std::to_string(holdout_count) +
                                " exceeds " + std::to_string(ids.size()) + " distinct objects");

  Rng rng(seed);
  // Fisher-Yates prefix of length holdout_count
  for (int i = 0; i < holdout_count; ++i) {
    const size_t j = i + rng.uniform_int(ids.size() - static_cast<size_t>(i));
    std::swap(ids[static_cast<size_t>(i)], ids[j]);
  }
  SplitSpec split;
  split.held_out_objects.assign(ids.begin(), ids.begin() + holdout_count);
  std::sort(split.held_out_objects.begin(), split.held_out_objects.end());

  for (const auto& scene : scenes) {
    const bool held = std::any_of(scene.object_ids.begin(), scene.object_ids.end(), [&](int id) {
      return std::binary_search(split.held_out_objects.begin(), split.held_out_objects.end(), id);
    });
    (held ? split.test_scenes : split.train_scenes).push_back(scene.scene_id);
  }
  if (!scenes.empty() && split.train_scenes.empty())
    throw std::invalid_argument("split_dataset: every scene contains a held-out object; "
                                "the train split would be empty");
  return split;
}

void save_split(const SplitSpec& split, const std::string& path) {
  json j;
  j["held_out_objects"] = split.held_out_objects;
  j["train_scenes"] = split.train_scenes;
  j["test_scenes"] = split.test_scenes;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

SplitSpec load_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("split file is corrupt: " + path + ": " + e.what());
  }
  SplitSpec split;
  split.held_out_objects = j.at("held_out_objects").get<std::vector<int>>();
  split.train_scenes = j.at("train_scenes").get<std::vector<int>>();
  split.test_scenes = j.at("test_scenes").get<std::vector<int>>();
  return split;
}

std::vector<SceneMeta> scan_scenes(const std::string& root) {
  std::vector<SceneMeta> scenes;
  std::vector<fs::path> scene_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0)
      scene_dirs.push_back(entry.path());
  std::sort(scene_dirs.begin(), scene_dirs.end());
  for (const auto& dir : scene_dirs) {
    SceneMeta meta;
    meta.scene_id = std::stoi(dir.filename().string().substr(6));
    std::vector<fs::path> views;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory() && entry.path().filename().string().rfind("view_", 0) == 0)
        views.push_back(entry.path());
    if (views.empty()) continue;
    std::sort(views.begin(), views.end());
    std::ifstream f(views.front() / "meta.json");
    if (!f) throw std::runtime_error("cannot open: " + (views.front() / "meta.json").string());
    json j;
    f >> j;
    for (const auto& jo : j.at("objects")) meta.object_ids.push_back(jo.at("id").get<int>());
    std::sort(meta.object_ids.begin(), meta.object_ids.end());
    meta.object_ids.erase(std::unique(meta.object_ids.begin(), meta.object_ids.end()),
                          meta.object_ids.end());
    scenes.push_back(std::move(meta));
  }
  return scenes;
}

std::vector<std::string> list_sample_dirs(const std::string& root) {
  std::vector<std::string> out;
  std::vector<fs::path> scene_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0)
      scene_dirs.push_back(entry.path());
  std::sort(scene_dirs.begin(), scene_dirs.end());
  for (const auto& dir : scene_dirs) {
    std::vector<fs::path> views;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory() && entry.path().filename().string().rfind("view_", 0) == 0)
        views.push_back(entry.path());
    std::sort(views.begin(), views.end());
    for (const auto& view : views) out.push_back(view.string());
  }
  return out;
}

std::vector<std::string> list_sample_dirs(const std::string& root,
                                          const std::vector<int>& scene_ids) {
  std::vector<std::string> out;
  for (int id : scene_ids) {
    const fs::path dir = fs::path(root) / ("scene_" + std::to_string(id));
    if (!fs::is_directory(dir)) throw std::runtime_error("missing scene directory: " + dir.string());
    std::vector<fs::path> views;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory() && entry.path().filename().string().rfind("view_", 0) == 0)
        views.push_back(entry.path());
    std::sort(views.begin(), views.end());
    for (const auto& view : views) out.push_back(view.string());
  }
  return out;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

namespace {

void flip_horizontal(Sample& s) {
  const int H = s.height(), W = s.width();
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W / 2; ++u) {
      const int m = W - 1 - u;
      for (int c = 0; c < 3; ++c) std::swap(s.rgb.at(v, u, c), s.rgb.at(v, m, c));
      std::swap(s.raw_depth.at(v, u), s.raw_depth.at(v, m));
      std::swap(s.gt_depth.at(v, u), s.gt_depth.at(v, m));
      std::swap(s.transparent_mask.at(v, u), s.transparent_mask.at(v, m));
      for (int c = 0; c < 3; ++c) std::swap(s.gt_normals.at(v, u)[c], s.gt_normals.at(v, m)[c]);
      std::swap(s.gt_normals.valid[static_cast<size_t>(v) * W + u],
                s.gt_normals.valid[static_cast<size_t>(v) * W + m]);
    }
  for (size_t i = 0; i < s.gt_normals.n.size(); i += 3) s.gt_normals.n[i] = -s.gt_normals.n[i];
}

// One clockwise quarter turn: out(v,u) = in(H-1-u, v); the depth-gradient
// normal components rotate as (x,y) -> (-y,x).
void rotate90_cw(Sample& s) {
  const int H = s.height(), W = s.width();
  Sample out = s;
  out.rgb = ImageU8(W, H, 3);
  out.raw_depth = DepthMap(W, H);
  out.gt_depth = DepthMap(W, H);
  out.transparent_mask = Mask(W, H);
  out.gt_normals = NormalMap(W, H);
  for (int v = 0; v < W; ++v)
    for (int u = 0; u < H; ++u) {
      const int sv = H - 1 - u, su = v;
      for (int c = 0; c < 3; ++c) out.rgb.at(v, u, c) = s.rgb.at(sv, su, c);
      out.raw_depth.at(v, u) = s.raw_depth.at(sv, su);
      out.gt_depth.at(v, u) = s.gt_depth.at(sv, su);
      out.transparent_mask.at(v, u) = s.transparent_mask.at(sv, su);
      const float* n = s.gt_normals.at(sv, su);
      float* o = out.gt_normals.at(v, u);
      o[0] = -n[1];
      o[1] = n[0];
      o[2] = n[2];
      out.gt_normals.valid[static_cast<size_t>(v) * H + u] =
          s.gt_normals.valid[static_cast<size_t>(sv) * W + su];
    }
  s = std::move(out);
}

}  // namespace

Sample augment(const Sample& sample, uint64_t seed, const AugmentConfig& config) {
  Sample out = sample;
  Rng rng(seed);

  if (rng.uniform() < config.p_flip) flip_horizontal(out);

  if (rng.uniform() < config.p_rot) {
    const bool square = out.height() == out.width();
    const int k = square ? 1 + static_cast<int>(rng.uniform_int(3)) : 2;
    for (int i = 0; i < k; ++i) rotate90_cw(out);
  }

  if (rng.uniform() < config.p_noise) {
    for (float& d : out.raw_depth.data())
      if (d > 0)
        d = std::max(0.0f, d + static_cast<float>(rng.normal(0.0, config.depth_noise_sigma)));
  }

  if (rng.uniform() < config.p_hls) {
    const double dh = rng.uniform(-config.hue_range_deg, config.hue_range_deg);
    const double dl = rng.uniform(-config.lightness_range, config.lightness_range);
    const double ds = rng.uniform(-config.saturation_range, config.saturation_range);
    for (size_t i = 0; i < out.rgb.data.size(); i += 3) {
      const auto hls = rgb_to_hls(out.rgb.data[i] / 255.0, out.rgb.data[i + 1] / 255.0,
                                  out.rgb.data[i + 2] / 255.0);
      double h = std::fmod(hls[0] + dh, 360.0);
      if (h < 0) h += 360.0;
      const double l = std::clamp(hls[1] + dl, 0.0, 1.0);
      const double sat = std::clamp(hls[2] + ds, 0.0, 1.0);
      const auto rgb = hls_to_rgb(h, l, sat);
      for (int c = 0; c < 3; ++c)
        out.rgb.data[i + static_cast<size_t>(c)] =
            static_cast<uint8_t>(std::lround(std::clamp(rgb[static_cast<size_t>(c)], 0.0, 1.0) * 255.0));
    }
  }

  return out;
}

}  // namespace depthfill
