#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthfill/dataset.hpp"
#include "depthfill/image.hpp"
#include "depthfill/params_io.hpp"
#include "depthfill/synth.hpp"
#include "depthfill/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace depthfill;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& k : known)
      if (k == key) ok = true;
    if (!ok) throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// Config file for `generate`; command-line flags override these values.
GenerateConfig parse_generate_config(const json& j, VerifyConfig& verify) {
  GenerateConfig cfg;
  reject_unknown_keys(j, {"scene", "trajectory", "corruption", "intrinsics", "verify"},
                      "generate config");
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    reject_unknown_keys(s,
                        {"min_transparent", "max_transparent", "min_opaque", "max_opaque",
                         "min_size", "max_size", "placement_radius", "library_size",
                         "max_attempts"},
                        "scene");
    maybe(s, "min_transparent", cfg.scene.min_transparent);
    maybe(s, "max_transparent", cfg.scene.max_transparent);
    maybe(s, "min_opaque", cfg.scene.min_opaque);
    maybe(s, "max_opaque", cfg.scene.max_opaque);
    maybe(s, "min_size", cfg.scene.min_size);
    maybe(s, "max_size", cfg.scene.max_size);
    maybe(s, "placement_radius", cfg.scene.placement_radius);
    maybe(s, "library_size", cfg.scene.library_size);
    maybe(s, "max_attempts", cfg.scene.max_attempts);
  }
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    reject_unknown_keys(t, {"viewpoints", "radius", "height", "center_height"}, "trajectory");
    maybe(t, "viewpoints", cfg.trajectory.viewpoints);
    maybe(t, "radius", cfg.trajectory.radius);
    maybe(t, "height", cfg.trajectory.height);
    maybe(t, "center_height", cfg.trajectory.center_height);
  }
  if (j.contains("corruption")) {
    const auto& c = j.at("corruption");
    reject_unknown_keys(
        c, {"p_drop", "p_bleed", "sigma", "dilation_radius", "blob_count", "blob_radius"},
        "corruption");
    maybe(c, "p_drop", cfg.corruption.p_drop);
    maybe(c, "p_bleed", cfg.corruption.p_bleed);
    maybe(c, "sigma", cfg.corruption.sigma);
    maybe(c, "dilation_radius", cfg.corruption.dilation_radius);
    maybe(c, "blob_count", cfg.corruption.blob_count);
    maybe(c, "blob_radius", cfg.corruption.blob_radius);
  }
  if (j.contains("intrinsics")) {
    const auto& i = j.at("intrinsics");
    reject_unknown_keys(i, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
    maybe(i, "fx", cfg.intrinsics.fx);
    maybe(i, "fy", cfg.intrinsics.fy);
    maybe(i, "cx", cfg.intrinsics.cx);
    maybe(i, "cy", cfg.intrinsics.cy);
    maybe(i, "width", cfg.intrinsics.width);
    maybe(i, "height", cfg.intrinsics.height);
  }
  if (j.contains("verify")) {
    const auto& v = j.at("verify");
    reject_unknown_keys(v, {"blur_threshold", "exposure_lo", "exposure_hi"}, "verify");
    maybe(v, "blur_threshold", verify.blur_threshold);
    maybe(v, "exposure_lo", verify.exposure_lo);
    maybe(v, "exposure_hi", verify.exposure_hi);
  }
  return cfg;
}

std::vector<Sample> load_samples(const std::string& root, const std::vector<int>& scene_ids) {
  std::vector<Sample> samples;
  for (const auto& dir : list_sample_dirs(root, scene_ids))
    samples.push_back(load_sample(dir));
  return samples;
}

// 256-entry error ramp: blue -> cyan -> green -> yellow -> red in four linear
// segments of 64 entries each.
std::array<uint8_t, 3> error_ramp(int i) {
  const int seg = i / 64, t = (i % 64) * 255 / 63;
  switch (seg) {
    case 0: return {0, static_cast<uint8_t>(t), 255};
    case 1: return {0, 255, static_cast<uint8_t>(255 - t)};
    case 2: return {static_cast<uint8_t>(t), 255, 0};
    default: return {255, static_cast<uint8_t>(255 - t), 0};
  }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const std::string& out, int scenes, int views, uint64_t seed,
                 const std::string& preset, const std::string& config_path, int width, int height,
                 int holdout, uint64_t split_seed) {
  VerifyConfig verify;
  GenerateConfig cfg;
  if (!config_path.empty()) cfg = parse_generate_config(load_json_file(config_path), verify);
  if (preset == "isolated")
    cfg.scene = SceneConfig::isolated();
  else if (preset == "cluttered")
    cfg.scene = SceneConfig::cluttered();
  else if (!preset.empty())
    throw std::invalid_argument("unknown preset \"" + preset + "\" (isolated|cluttered)");
  if (views > 0) cfg.trajectory.viewpoints = views;
  if (width > 0 || height > 0) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("--width and --height must be given together");
    cfg.intrinsics = cfg.intrinsics.scaled(width, height);
  }
  cfg.intrinsics.validate();
  cfg.corruption.validate();

  fs::create_directories(out);
  const auto stats = generate_dataset(out, scenes, seed, cfg, verify, holdout, split_seed);
  std::printf("scenes %d  samples %d  rejected %d\n", stats.scenes, stats.samples_written,
              stats.samples_rejected);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& data, const std::string& out, const std::string& log_path,
              const std::string& resume_path, TrainConfig train_cfg, NetConfig net_cfg,
              bool net_dims_given) {
  const std::string split_path = data + "/split.json";
  if (!fs::exists(split_path))
    throw std::invalid_argument("missing " + split_path + " (run `depthfill generate` first)");
  const auto split = load_split(split_path);
  auto train_set = load_samples(data, split.train_scenes);
  if (train_set.empty()) throw std::invalid_argument("train split of " + data + " is empty");
  auto eval_set = load_samples(data, split.test_scenes);

  if (!net_dims_given) {
    net_cfg.height = train_set[0].height();
    net_cfg.width = train_set[0].width();
  }

  TrainResult resume;
  const TrainResult* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    auto ckpt = load_checkpoint(resume_path);
    net_cfg = ckpt.net;
    resume.params = std::move(ckpt.params);
    resume.opt = std::move(ckpt.opt);
    resume.epochs_completed = ckpt.epoch;
    resume_ptr = &resume;
  }

  std::ofstream log(log_path, resume_ptr ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open for writing: " + log_path);
  if (!resume_ptr)
    log << "epoch,lr,train_loss,eval_rmse,eval_rel,eval_mae,d105,d110,d125\n";

  const uint64_t seed = train_cfg.seed;
  auto on_epoch = [&](const TrainResult& state, const EpochLog& row) {
    log.precision(9);
    log << row.epoch << ',' << row.lr << ',' << row.train_loss << ',';
    if (row.eval.defined)
      log << row.eval.rmse << ',' << row.eval.rel << ',' << row.eval.mae << ',' << row.eval.d105
          << ',' << row.eval.d110 << ',' << row.eval.d125 << '\n';
    else
      log << "nan,nan,nan,nan,nan,nan\n";
    log.flush();
    Checkpoint ckpt;
    ckpt.params = state.params;
    ckpt.opt = state.opt;
    ckpt.net = net_cfg;
    ckpt.epoch = state.epochs_completed;
    ckpt.seed = seed;
    save_checkpoint(ckpt, out);
  };

  const auto result = train(train_set, eval_set, net_cfg, train_cfg, resume_ptr, on_epoch);
  std::printf("trained %d epochs, %lld optimizer steps; checkpoint %s\n",
              result.epochs_completed, static_cast<long long>(result.opt.step), out.c_str());
  if (!result.log.empty() && result.log.back().eval.defined)
    std::printf("eval masked RMSE %.6f m, d105 %.2f%%\n", result.log.back().eval.rmse,
                result.log.back().eval.d105);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& data, const std::string& ckpt_path, const std::string& scope_str,
             const std::string& report_path, const std::string& error_maps, bool oracle_gt,
             const std::string& which_split, double error_scale) {
  const MetricScope scope =
      scope_str == "global" ? MetricScope::Global : MetricScope::Masked;
  if (scope_str != "masked" && scope_str != "global")
    throw std::invalid_argument("--scope must be masked or global");

  std::vector<int> scene_ids;
  const std::string split_path = data + "/split.json";
  if (which_split == "all" || !fs::exists(split_path)) {
    for (const auto& scene : scan_scenes(data)) scene_ids.push_back(scene.scene_id);
  } else {
    const auto split = load_split(split_path);
    if (which_split == "train")
      scene_ids = split.train_scenes;
    else if (which_split == "test")
      scene_ids = split.test_scenes;
    else
      throw std::invalid_argument("--split must be train, test or all");
  }
  const auto dirs = list_sample_dirs(data, scene_ids);
  if (dirs.empty()) throw std::invalid_argument("no samples selected in " + data);

  Checkpoint ckpt;
  if (!oracle_gt) ckpt = load_checkpoint(ckpt_path);
  LossConfig loss_cfg;

  std::ofstream report(report_path);
  if (!report) throw std::runtime_error("cannot open for writing: " + report_path);
  report << "sample," << MetricsReport::csv_header() << "\n";
  report.precision(9);

  if (!error_maps.empty()) fs::create_directories(error_maps);

  MetricsAccumulator acc;
  std::vector<std::pair<std::string, MetricsReport>> rows;
  int index = 0;
  for (const auto& dir : dirs) {
    const auto sample = load_sample(dir);
    DepthMap pred;
    if (oracle_gt) {
      pred = sample.gt_depth;
    } else {
      if (sample.height() != ckpt.net.height || sample.width() != ckpt.net.width)
        throw std::invalid_argument(
            "sample " + dir + " is " + std::to_string(sample.width()) + "x" +
            std::to_string(sample.height()) + " but the checkpoint expects " +
            std::to_string(ckpt.net.width) + "x" + std::to_string(ckpt.net.height));
      pred = predict_depth(ckpt.params, ckpt.net, sample.rgb, sample.raw_depth);
    }
    acc.add(pred, sample.gt_depth, sample.transparent_mask, loss_cfg, scope);
    rows.emplace_back(dir,
                      compute_metrics(pred, sample.gt_depth, sample.transparent_mask, loss_cfg,
                                      scope));

    if (!error_maps.empty()) {
      const auto valid = valid_mask(sample.gt_depth, loss_cfg);
      ImageU8 img(sample.height(), sample.width(), 3);
      for (int v = 0; v < sample.height(); ++v)
        for (int u = 0; u < sample.width(); ++u) {
          const bool in_set =
              valid.at(v, u) && (scope == MetricScope::Global || sample.transparent_mask.at(v, u));
          if (!in_set) {
            img.at(v, u, 0) = img.at(v, u, 1) = img.at(v, u, 2) = 128;
            continue;
          }
          const double err = std::fabs(pred.at(v, u) - sample.gt_depth.at(v, u));
          const int i =
              std::clamp(static_cast<int>(std::lround(err / error_scale * 255.0)), 0, 255);
          const auto c = error_ramp(i);
          img.at(v, u, 0) = c[0];
          img.at(v, u, 1) = c[1];
          img.at(v, u, 2) = c[2];
        }
      write_png_rgb8(img, error_maps + "/error_" + std::to_string(index) + ".png");
    }
    ++index;
  }

  const auto agg = acc.report();
  report << "aggregate," << agg.csv_row(scope) << "\n";
  for (const auto& [dir, r] : rows) report << dir << ',' << r.csv_row(scope) << "\n";
  if (agg.defined)
    std::printf("%s over %lld px: RMSE %.6f  REL %.6f  MAE %.6f  d105 %.2f  d110 %.2f  d125 %.2f\n",
                scope_str.c_str(), static_cast<long long>(agg.pixel_count), agg.rmse, agg.rel,
                agg.mae, agg.d105, agg.d110, agg.d125);
  else
    std::printf("%s: evaluation set is empty (metrics undefined)\n", scope_str.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

int cmd_infer(const std::string& rgb_path, const std::string& depth_path,
              const std::string& ckpt_path, const std::string& out_path,
              const std::string& cloud_path, const std::string& intrinsics_path) {
  if (!cloud_path.empty() && intrinsics_path.empty())
    throw std::invalid_argument("--cloud requires --intrinsics");

  const ImageU8 rgb = read_png_rgb8(rgb_path);
  const ImageU16 depth16 = read_png_gray16(depth_path);
  if (depth16.height != rgb.height || depth16.width != rgb.width)
    throw std::invalid_argument("rgb and depth rasters disagree on size");

  auto ckpt = load_checkpoint(ckpt_path);
  const int H = ckpt.net.height, W = ckpt.net.width;

  std::vector<float> depth_m(depth16.data.size());
  for (size_t i = 0; i < depth16.data.size(); ++i)
    depth_m[i] = static_cast<float>(depth16.data[i] / kDepthScale);

  // bilinear rgb, nearest depth down to the network raster
  const ImageU8 rgb_small = resize_bilinear_u8(rgb, H, W);
  DepthMap depth_small(H, W);
  depth_small.data() = resize_nearest_f32(depth_m, depth16.height, depth16.width, H, W);

  DepthMap pred = predict_depth(ckpt.params, ckpt.net, rgb_small, depth_small);

  // bilinear back to the original size
  std::vector<float> up =
      resize_bilinear_f32(pred.data(), H, W, depth16.height, depth16.width);
  ImageU16 out(depth16.height, depth16.width);
  for (size_t i = 0; i < up.size(); ++i) {
    const double meters = std::clamp(static_cast<double>(up[i]), 0.0, kMaxStorableDepth);
    out.data[i] = static_cast<uint16_t>(std::lround(meters * kDepthScale));
  }
  write_png_gray16(out, out_path);
  std::printf("wrote %s (%dx%d)\n", out_path.c_str(), out.width, out.height);

  if (!cloud_path.empty()) {
    const json j = load_json_file(intrinsics_path);
    reject_unknown_keys(j, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
    CameraIntrinsics intr{j.at("fx").get<double>(), j.at("fy").get<double>(),
                          j.at("cx").get<double>(), j.at("cy").get<double>(),
                          j.at("width").get<int>(), j.at("height").get<int>()};
    if (intr.width != out.width || intr.height != out.height)
      throw std::invalid_argument("intrinsics raster size does not match the image");
    DepthMap full(out.height, out.width);
    for (size_t i = 0; i < out.data.size(); ++i)
      full.data()[i] = static_cast<float>(out.data[i] / kDepthScale);
    PointCloud cloud = deproject(full, intr);
    // attach colors in the same pixel order deproject emits points
    cloud.colors.reserve(cloud.points.size());
    for (int v = 0; v < out.height; ++v)
      for (int u = 0; u < out.width; ++u)
        if (full.at(v, u) > 0)
          cloud.colors.push_back({rgb.at(v, u, 0), rgb.at(v, u, 1), rgb.at(v, u, 2)});
    write_ply(cloud, cloud_path);
    std::printf("wrote %s (%zu points)\n", cloud_path.c_str(), cloud.points.size());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(const std::string& data, const VerifyConfig& cfg, const std::string& report_path) {
  const auto dirs = list_sample_dirs(data);
  if (dirs.empty()) throw std::invalid_argument("no samples found in " + data);
  std::ofstream report(report_path);
  if (!report) throw std::runtime_error("cannot open for writing: " + report_path);
  report << "sample,accepted,reason,laplacian_variance,extreme_fraction,occupied_bins\n";
  report.precision(9);
  int accepted = 0;
  for (const auto& dir : dirs) {
    const auto res = verify_sample(load_sample(dir), cfg);
    report << dir << ',' << (res.accepted ? 1 : 0) << ',' << res.reason << ','
           << res.laplacian_variance << ',' << res.extreme_fraction << ',' << res.occupied_bins
           << "\n";
    accepted += res.accepted ? 1 : 0;
  }
  std::printf("%d/%zu samples accepted\n", accepted, dirs.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthfill: transparent-object depth completion toolkit"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "cap internal parallelism (0 = library default)");

  // generate
  auto* gen = app.add_subcommand("generate", "render a synthetic RGB-D dataset");
  std::string gen_out = "dataset", gen_preset, gen_config;
  int gen_scenes = 4, gen_views = 0, gen_width = 0, gen_height = 0, gen_holdout = 2;
  uint64_t gen_seed = 0, gen_split_seed = 1;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--views", gen_views, "viewpoints per scene (0 = config default)");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--preset", gen_preset, "isolated | cluttered");
  gen->add_option("--config", gen_config, "JSON config file");
  gen->add_option("--width", gen_width, "image width");
  gen->add_option("--height", gen_height, "image height");
  gen->add_option("--holdout", gen_holdout, "held-out object count for the split");
  gen->add_option("--split-seed", gen_split_seed, "seed for the held-out object draw");

  // train
  auto* tr = app.add_subcommand("train", "train the depth completion network");
  std::string tr_data, tr_out = "checkpoint.bin", tr_log, tr_resume;
  TrainConfig tr_cfg;
  NetConfig tr_net;
  tr_net.hidden = 16;
  tr_net.dense_layers = 3;
  tr_net.growth = 8;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--log", tr_log, "per-epoch CSV log (default <out>.log.csv)");
  tr->add_option("--resume", tr_resume, "resume from checkpoint");
  tr->add_option("--epochs", tr_cfg.epochs, "total epochs");
  tr->add_option("--batch", tr_cfg.batch_size, "batch size");
  tr->add_option("--lr", tr_cfg.lr0, "initial learning rate");
  tr->add_option("--weight-decay", tr_cfg.weight_decay, "decoupled weight decay");
  tr->add_option("--seed", tr_cfg.seed, "training seed");
  tr->add_option("--max-steps", tr_cfg.max_steps, "optimizer step cap (0 = none)");
  tr->add_option("--eval-every", tr_cfg.eval_every, "epochs between evaluations");
  auto* no_aug = tr->add_flag("--no-augment", "disable training-time augmentation");
  tr->add_option("--hidden", tr_net.hidden, "hidden channels");
  tr->add_option("--layers", tr_net.dense_layers, "dense block layers");
  tr->add_option("--growth", tr_net.growth, "dense block growth");
  auto* tr_levels = tr->add_option("--levels", tr_net.levels, "U-Net levels");
  auto* tr_w = tr->add_option("--net-width", tr_net.width, "network input width");
  auto* tr_h = tr->add_option("--net-height", tr_net.height, "network input height");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint over a dataset split");
  std::string ev_data, ev_ckpt, ev_scope = "masked", ev_report = "report.csv", ev_maps,
              ev_split = "test";
  bool ev_oracle = false;
  double ev_scale = 0.1;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path");
  ev->add_option("--scope", ev_scope, "masked | global");
  ev->add_option("--report", ev_report, "output CSV");
  ev->add_option("--error-maps", ev_maps, "directory for per-sample error maps");
  ev->add_option("--split", ev_split, "train | test | all");
  ev->add_option("--error-scale", ev_scale, "meters mapped to the top of the color ramp");
  ev->add_flag("--oracle-gt", ev_oracle, "use ground truth as the prediction (test hook)");

  // infer
  auto* in = app.add_subcommand("infer", "refine one RGB-D frame");
  std::string in_rgb, in_depth, in_ckpt, in_out = "refined.png", in_cloud, in_intr;
  in->add_option("--rgb", in_rgb, "RGB PNG")->required();
  in->add_option("--depth", in_depth, "16-bit depth PNG (meters x 10000)")->required();
  in->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
  in->add_option("--out", in_out, "output 16-bit depth PNG");
  in->add_option("--cloud", in_cloud, "also export a PLY point cloud");
  in->add_option("--intrinsics", in_intr, "camera intrinsics JSON (required with --cloud)");

  // verify
  auto* ve = app.add_subcommand("verify", "blur/exposure screening over a dataset");
  std::string ve_data, ve_report = "verify.csv";
  VerifyConfig ve_cfg;
  ve->add_option("--data", ve_data, "dataset directory")->required();
  ve->add_option("--blur", ve_cfg.blur_threshold, "Laplacian variance threshold");
  ve->add_option("--exposure-lo", ve_cfg.exposure_lo, "min occupied histogram bins");
  ve->add_option("--exposure-hi", ve_cfg.exposure_hi, "max extreme-intensity fraction");
  ve->add_option("--report", ve_report, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (gen->parsed())
      return cmd_generate(gen_out, gen_scenes, gen_views, gen_seed, gen_preset, gen_config,
                          gen_width, gen_height, gen_holdout, gen_split_seed);
    if (tr->parsed()) {
      if (*no_aug) tr_cfg.augment_enabled = false;
      if (tr_log.empty()) tr_log = tr_out + ".log.csv";
      const bool dims_given = tr_w->count() > 0 || tr_h->count() > 0 || tr_levels->count() > 0;
      return cmd_train(tr_data, tr_out, tr_log, tr_resume, tr_cfg, tr_net, dims_given);
    }
    if (ev->parsed()) {
      if (!ev_oracle && ev_ckpt.empty())
        throw std::invalid_argument("eval needs --ckpt (or --oracle-gt)");
      return cmd_eval(ev_data, ev_ckpt, ev_scope, ev_report, ev_maps, ev_oracle, ev_split,
                      ev_scale);
    }
    if (in->parsed()) return cmd_infer(in_rgb, in_depth, in_ckpt, in_out, in_cloud, in_intr);
    if (ve->parsed()) return cmd_verify(ve_data, ve_cfg, ve_report);
  } catch (const DivergenceError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}
