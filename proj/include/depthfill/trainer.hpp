#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "depthfill/dataset.hpp"
#include "depthfill/loss.hpp"
#include "depthfill/net.hpp"

namespace depthfill {

// Numerical abort (divergence, non-finite gradients); the CLI maps this to
// its own exit code.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr0 = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double decay_factor = 5.0;
  std::vector<int> decay_epochs{5, 15, 25, 35};
  int epochs = 40;
  int batch_size = 4;
  uint64_t seed = 0;
  bool augment_enabled = true;
  AugmentConfig augment;
  LossConfig loss;
  double input_depth_clamp = 3.0;  // meters; raw depth fed to the net is clamped to [0, this]
  int64_t max_steps = 0;           // stop after this many optimizer steps (0 = no cap)
  int eval_every = 1;              // epochs between held-out evaluations
  double early_stop_rmse = 0.0;    // stop once eval RMSE drops below (0 = off)

  void validate() const;
};

// lr0 / decay_factor^(number of decay epochs <= epoch).
double lr_schedule(int epoch, const TrainConfig& config);

// First/second moments per parameter name plus the shared step count.
template <typename T>
struct AdamState {
  std::unordered_map<std::string, std::vector<T>> m, v;
  int64_t step = 0;
};

// One decoupled-weight-decay Adam update over every trainable parameter with
// a populated gradient. Weight decay multiplies the parameter by
// (1 - lr*wd) independently of the adaptive step; biases and batch-norm
// gamma/beta are exempt. Throws on non-finite gradients, naming the
// parameter.
template <typename T>
void adamw_step(ParamStore<T>& params, AdamState<T>& state, double lr, const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  MetricsReport eval;  // defined=false when evaluation was skipped this epoch
};

struct TrainResult {
  ParamStore<float> params;
  AdamState<float> opt;
  int epochs_completed = 0;
  std::vector<EpochLog> log;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const TrainResult&, const EpochLog&)>;

// Seeded shuffling per epoch, augment -> forward -> loss -> backward -> step
// per batch, evaluation per eval_every epochs. Deterministic end to end for a
// fixed seed. Aborts (std::runtime_error) when the loss goes non-finite or
// stays above 10x its initial value for 3 consecutive epochs.
TrainResult train(const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& eval_samples, const NetConfig& net_config,
                  const TrainConfig& config, const TrainResult* resume = nullptr,
                  const EpochCallback& on_epoch = nullptr);

// Eval-mode forward per sample; pixel-weighted aggregate. Optional per-sample
// reports and raw predictions.
MetricsReport evaluate_samples(ParamStore<float>& params, const NetConfig& net_config,
                               const std::vector<Sample>& samples, const LossConfig& config,
                               MetricScope scope, double input_depth_clamp = 3.0,
                               std::vector<MetricsReport>* per_sample = nullptr,
                               std::vector<DepthMap>* predictions = nullptr);

// Single-sample inference helper shared by evaluation, the CLI and bindings.
DepthMap predict_depth(ParamStore<float>& params, const NetConfig& net_config,
                       const ImageU8& rgb, const DepthMap& raw_depth,
                       double input_depth_clamp = 3.0);

struct Checkpoint {
  ParamStore<float> params;
  AdamState<float> opt;
  NetConfig net;
  int epoch = 0;        // completed epochs
  uint64_t seed = 0;
};

// Parameter container holding the weights plus "opt.m./opt.v." moment entries,
// with a JSON sidecar (<path>.json) for the config and counters.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace depthfill
