#include "depthfill/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "depthfill/params_io.hpp"
#include "depthfill/rng.hpp"

using json = nlohmann::ordered_json;

namespace depthfill {

void TrainConfig::validate() const {
  if (lr0 <= 0) throw std::invalid_argument("TrainConfig: lr0 must be > 0");
  if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (decay_factor <= 0) throw std::invalid_argument("TrainConfig: decay_factor must be > 0");
  for (size_t i = 1; i < decay_epochs.size(); ++i)
    if (decay_epochs[i] <= decay_epochs[i - 1])
      throw std::invalid_argument("TrainConfig: decay epochs must be strictly increasing");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  loss.validate();
}

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  int decays = 0;
  for (int d : config.decay_epochs)
    if (d <= epoch) ++decays;
  return config.lr0 / std::pow(config.decay_factor, decays);
}

namespace {

bool decay_exempt(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const size_t n = std::string(suffix).size();
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return ends_with(".bias") || ends_with(".bn.gamma") || ends_with(".bn.beta");
}

}  // namespace

template <typename T>
void adamw_step(ParamStore<T>& params, AdamState<T>& state, double lr,
                const TrainConfig& config) {
  config.validate();
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);

  for (auto& [name, param] : params.entries()) {
    if (!param.requires_grad()) continue;
    auto grads = param.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != static_cast<size_t>(param.numel())) m.assign(param.numel(), T(0));
    if (v.size() != static_cast<size_t>(param.numel())) v.assign(param.numel(), T(0));

    const bool decay = config.weight_decay > 0 && !decay_exempt(name);
    auto values = param.raw();
    for (int64_t i = 0; i < param.numel(); ++i) {
      const double g = grads[static_cast<size_t>(i)];
      if (!std::isfinite(g))
        throw DivergenceError("adamw_step: non-finite gradient in \"" + name + "\"");
      double p = values[static_cast<size_t>(i)];
      if (decay) p -= lr * config.weight_decay * p;
      const double mi = config.beta1 * m[static_cast<size_t>(i)] + (1.0 - config.beta1) * g;
      const double vi = config.beta2 * v[static_cast<size_t>(i)] + (1.0 - config.beta2) * g * g;
      m[static_cast<size_t>(i)] = static_cast<T>(mi);
      v[static_cast<size_t>(i)] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      p -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
      values[static_cast<size_t>(i)] = static_cast<T>(p);
    }
  }
}

template void adamw_step<float>(ParamStore<float>&, AdamState<float>&, double,
                                const TrainConfig&);
template void adamw_step<double>(ParamStore<double>&, AdamState<double>&, double,
                                 const TrainConfig&);

// ---------------------------------------------------------------------------
// batching and evaluation
// ---------------------------------------------------------------------------

namespace {

struct BatchTensors {
  TensorF rgb, raw_depth, gt_depth;
};

BatchTensors make_batch(const std::vector<const Sample*>& samples, double clamp) {
  const int N = static_cast<int>(samples.size());
  const int H = samples[0]->height(), W = samples[0]->width();
  auto rgb = TensorF::zeros({N, 3, H, W});
  auto raw = TensorF::zeros({N, 1, H, W});
  auto gt = TensorF::zeros({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    const Sample& s = *samples[n];
    if (s.height() != H || s.width() != W)
      throw std::invalid_argument("make_batch: samples disagree on size");
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int v = 0; v < H; ++v)
      for (int u = 0; u < W; ++u) {
        const int64_t i = static_cast<int64_t>(v) * W + u;
        for (int c = 0; c < 3; ++c)
          rgb.raw()[(static_cast<int64_t>(n) * 3 + c) * plane + i] = s.rgb.at(v, u, c) / 255.0f;
        raw.raw()[static_cast<int64_t>(n) * plane + i] =
            std::clamp(s.raw_depth.at(v, u), 0.0f, static_cast<float>(clamp));
        gt.raw()[static_cast<int64_t>(n) * plane + i] = s.gt_depth.at(v, u);
      }
  }
  return {std::move(rgb), std::move(raw), std::move(gt)};
}

}  // namespace

DepthMap predict_depth(ParamStore<float>& params, const NetConfig& net_config,
                       const ImageU8& rgb, const DepthMap& raw_depth,
                       double input_depth_clamp) {
  if (rgb.height != net_config.height || rgb.width != net_config.width)
    throw std::invalid_argument("predict_depth: input " + std::to_string(rgb.width) + "x" +
                                std::to_string(rgb.height) + " does not match the network " +
                                std::to_string(net_config.width) + "x" +
                                std::to_string(net_config.height));
  Sample shim;
  shim.rgb = rgb;
  shim.raw_depth = raw_depth;
  shim.gt_depth = DepthMap(rgb.height, rgb.width);
  BatchTensors batch = make_batch({&shim}, input_depth_clamp);
  auto out = net_forward(params, net_config, batch.rgb, batch.raw_depth, NetMode::Eval);
  DepthMap pred(net_config.height, net_config.width);
  for (size_t i = 0; i < pred.data().size(); ++i)
    pred.data()[i] = std::max(0.0f, out.values()[i]);
  return pred;
}

MetricsReport evaluate_samples(ParamStore<float>& params, const NetConfig& net_config,
                               const std::vector<Sample>& samples, const LossConfig& config,
                               MetricScope scope, double input_depth_clamp,
                               std::vector<MetricsReport>* per_sample,
                               std::vector<DepthMap>* predictions) {
  MetricsAccumulator acc;
  for (const auto& s : samples) {
    DepthMap pred = predict_depth(params, net_config, s.rgb, s.raw_depth, input_depth_clamp);
    acc.add(pred, s.gt_depth, s.transparent_mask, config, scope);
    if (per_sample)
      per_sample->push_back(compute_metrics(pred, s.gt_depth, s.transparent_mask, config, scope));
    if (predictions) predictions->push_back(std::move(pred));
  }
  return acc.report();
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainResult train(const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& eval_samples, const NetConfig& net_config,
                  const TrainConfig& config, const TrainResult* resume,
                  const EpochCallback& on_epoch) {
  config.validate();
  net_config.validate();
  if (train_samples.empty()) throw std::invalid_argument("train: empty train split");

  TrainResult result;
  int start_epoch = 0;
  if (resume) {
    result.params = resume->params;
    result.opt = resume->opt;
    start_epoch = resume->epochs_completed;
    result.log = resume->log;
  } else {
    result.params = build_net<float>(net_config, config.seed);
  }

  double initial_loss = 0;
  bool have_initial = false;
  int high_loss_streak = 0;

  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config);

    std::vector<size_t> order(train_samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng::derive(config.seed, 0x5caffe00ull + static_cast<uint64_t>(epoch));
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      const size_t j = i + shuffle_rng.uniform_int(order.size() - i);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0;
    int64_t batches = 0;
    bool step_cap_hit = false;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
      if (config.max_steps > 0 && result.opt.step >= config.max_steps) {
        step_cap_hit = true;
        break;
      }
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      std::vector<Sample> augmented;
      std::vector<const Sample*> batch_ptr;
      augmented.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) {
        if (config.augment_enabled) {
          augmented.push_back(augment(
              train_samples[order[i]],
              Rng::derive(config.seed,
                          (static_cast<uint64_t>(epoch) << 32) ^ (order[i] * 2654435761ull))
                  .next_u64(),
              config.augment));
        } else {
          augmented.push_back(train_samples[order[i]]);
        }
      }
      for (const auto& s : augmented) batch_ptr.push_back(&s);

      BatchTensors batch = make_batch(batch_ptr, config.input_depth_clamp);
      batch.rgb.set_requires_grad(false);
      auto raw_in = batch.raw_depth;
      auto objective = loss(net_forward(result.params, net_config, batch.rgb, raw_in,
                                        NetMode::Train),
                            batch.gt_depth, config.loss);
      const double value = objective.item();
      if (!std::isfinite(value))
        throw DivergenceError("train: loss diverged (non-finite) at epoch " +
                              std::to_string(epoch));
      result.params.zero_grad();
      objective.backward();
      adamw_step(result.params, result.opt, lr, config);
      epoch_loss += value;
      ++batches;
    }
    if (batches == 0) break;  // step cap hit before any batch of this epoch
    epoch_loss /= static_cast<double>(batches);

    if (!have_initial) {
      initial_loss = epoch_loss;
      have_initial = true;
    }
    if (epoch_loss > 10.0 * initial_loss) {
      if (++high_loss_streak >= 3)
        throw DivergenceError("train: loss diverged (above 10x its initial value for 3 "
                              "consecutive epochs) at epoch " + std::to_string(epoch));
    } else {
      high_loss_streak = 0;
    }

    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = epoch_loss;
    const bool eval_now = !eval_samples.empty() &&
                          ((epoch - start_epoch) % config.eval_every == config.eval_every - 1 ||
                           epoch + 1 == config.epochs || step_cap_hit);
    if (eval_now)
      row.eval = evaluate_samples(result.params, net_config, eval_samples, config.loss,
                                  MetricScope::Masked, config.input_depth_clamp);
    result.log.push_back(row);
    result.epochs_completed = epoch + 1;
    if (on_epoch) on_epoch(result, row);

    if (row.eval.defined && config.early_stop_rmse > 0 && row.eval.rmse < config.early_stop_rmse) {
      result.early_stopped = true;
      break;
    }
    if (step_cap_hit) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

json net_to_json(const NetConfig& cfg) {
  return json{{"hidden", cfg.hidden},   {"dense_layers", cfg.dense_layers},
              {"growth", cfg.growth},   {"levels", cfg.levels},
              {"height", cfg.height},   {"width", cfg.width}};
}

NetConfig net_from_json(const json& j) {
  NetConfig cfg;
  cfg.hidden = j.at("hidden").get<int>();
  cfg.dense_layers = j.at("dense_layers").get<int>();
  cfg.growth = j.at("growth").get<int>();
  cfg.levels = j.at("levels").get<int>();
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ParamStore<float> container;
  for (const auto& [name, t] : ckpt.params.entries()) container.add(name, t);
  for (const auto& [name, t] : ckpt.params.entries()) {
    if (!t.requires_grad()) continue;
    auto it_m = ckpt.opt.m.find(name);
    auto it_v = ckpt.opt.v.find(name);
    if (it_m == ckpt.opt.m.end() || it_v == ckpt.opt.v.end()) continue;
    container.add("opt.m." + name,
                  TensorF::from_vector(t.shape(), it_m->second, false));
    container.add("opt.v." + name,
                  TensorF::from_vector(t.shape(), it_v->second, false));
  }
  save_params(container, path);

  json side;
  side["format_version"] = 1;
  side["net"] = net_to_json(ckpt.net);
  side["epoch"] = ckpt.epoch;
  side["adam_step"] = ckpt.opt.step;
  side["seed"] = ckpt.seed;
  std::ofstream f(path + ".json");
  if (!f) throw std::runtime_error("cannot open for writing: " + path + ".json");
  f << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ckpt;
  auto container = load_params(path);
  for (auto& [name, t] : container.entries()) {
    if (name.rfind("opt.m.", 0) == 0) {
      ckpt.opt.m[name.substr(6)] = std::vector<float>(t.values().begin(), t.values().end());
    } else if (name.rfind("opt.v.", 0) == 0) {
      ckpt.opt.v[name.substr(6)] = std::vector<float>(t.values().begin(), t.values().end());
    } else {
      ckpt.params.add(name, t);
    }
  }
  std::ifstream f(path + ".json");
  if (!f) throw std::runtime_error("cannot open: " + path + ".json");
  json side;
  try {
    f >> side;
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint sidecar " + path + ".json: " + e.what());
  }
  ckpt.net = net_from_json(side.at("net"));
  ckpt.epoch = side.at("epoch").get<int>();
  ckpt.opt.step = side.at("adam_step").get<int64_t>();
  ckpt.seed = side.at("seed").get<uint64_t>();
  return ckpt;
}

}  // namespace depthfill
