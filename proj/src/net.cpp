#include "depthfill/net.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "depthfill/rng.hpp"

namespace depthfill {

void NetConfig::validate() const {
  if (hidden < 1 || dense_layers < 0 || growth < 1 || levels < 1)
    throw std::invalid_argument("NetConfig: counts must be positive");
  const int div = 1 << levels;
  if (height < div || width < div || height % div != 0 || width % div != 0)
    throw std::invalid_argument("NetConfig: " + std::to_string(width) + "x" +
                                std::to_string(height) + " not divisible by 2^levels = " +
                                std::to_string(div));
}

namespace {

template <typename T>
void add_conv(ParamStore<T>& params, const std::string& prefix, int cin, int cout, Rng& rng) {
  auto weight = Tensor<T>::zeros({cout, cin, 3, 3}, true);
  const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * 9.0));
  for (auto& v : weight.raw()) v = static_cast<T>(rng.uniform(-bound, bound));
  params.add(prefix + ".conv.weight", std::move(weight));
  params.add(prefix + ".conv.bias", Tensor<T>::zeros({cout}, true));
}

template <typename T>
void add_conv_bn(ParamStore<T>& params, const std::string& prefix, int cin, int cout, Rng& rng) {
  add_conv(params, prefix, cin, cout, rng);
  params.add(prefix + ".bn.gamma", Tensor<T>::full({cout}, T(1), true));
  params.add(prefix + ".bn.beta", Tensor<T>::zeros({cout}, true));
  params.add(prefix + ".bn.running_mean", Tensor<T>::zeros({cout}, false));
  params.add(prefix + ".bn.running_var", Tensor<T>::full({cout}, T(1), false));
}

template <typename T>
void add_dense(ParamStore<T>& params, const std::string& prefix, int cin, int layers, int growth,
               Rng& rng) {
  for (int i = 1; i <= layers; ++i)
    add_conv_bn(params, prefix + ".l" + std::to_string(i), cin + (i - 1) * growth, growth, rng);
}

// conv -> dense -> conv parameter set shared by all blocks; out_channels
// widens the trailing conv (decoder blocks emit 4*hidden for the sub-pixel
// step).
template <typename T>
void add_cdc(ParamStore<T>& params, const std::string& prefix, int cin, const NetConfig& cfg,
             int out_channels, Rng& rng) {
  add_conv_bn(params, prefix + ".in", cin, cfg.hidden, rng);
  add_dense(params, prefix + ".dense", cfg.hidden, cfg.dense_layers, cfg.growth, rng);
  add_conv_bn(params, prefix + ".out", cfg.hidden + cfg.dense_layers * cfg.growth, out_channels,
              rng);
}

template <typename T>
Tensor<T> conv_bn_relu(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                       NetMode mode) {
  auto y = conv2d(x, params.get(prefix + ".conv.weight"), params.get(prefix + ".conv.bias"), 1, 1);
  y = batch_norm(y, params.get(prefix + ".bn.gamma"), params.get(prefix + ".bn.beta"),
                 params.get(prefix + ".bn.running_mean"), params.get(prefix + ".bn.running_var"),
                 mode == NetMode::Train);
  return relu(y);
}

}  // namespace

template <typename T>
ParamStore<T> build_net(const NetConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed ^ 0xd1f7ull);
  ParamStore<T> params;
  add_conv_bn(params, "stem", 4, config.hidden, rng);
  for (int l = 1; l <= config.levels; ++l)
    add_cdc(params, "enc" + std::to_string(l), config.hidden + 1, config, config.hidden, rng);
  add_cdc(params, "mid", config.hidden + 1, config, config.hidden, rng);
  for (int l = config.levels; l >= 1; --l) {
    const std::string prefix = "dec" + std::to_string(l);
    add_cdc(params, prefix, config.hidden + 1, config, 4 * config.hidden, rng);
    add_conv_bn(params, prefix + ".fuse", 2 * config.hidden, config.hidden, rng);
  }
  add_conv(params, "head", config.hidden, 1, rng);
  return params;
}

template <typename T>
Tensor<T> dense_block(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                      int layers, int growth, NetMode mode) {
  (void)growth;
  std::vector<Tensor<T>> features = {x};
  for (int i = 1; i <= layers; ++i) {
    auto input = features.size() == 1 ? features[0] : concat_channels(features);
    features.push_back(conv_bn_relu(params, prefix + ".l" + std::to_string(i), input, mode));
  }
  return features.size() == 1 ? features[0] : concat_channels(features);
}

namespace {

template <typename T>
Tensor<T> cdc_body(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                   const Tensor<T>& depth_plane, const NetConfig& config, NetMode mode) {
  if (depth_plane.dim(2) != x.dim(2) || depth_plane.dim(3) != x.dim(3))
    throw std::invalid_argument(prefix + ": depth plane " + shape_str(depth_plane.shape()) +
                                " does not match input " + shape_str(x.shape()));
  auto h = conv_bn_relu(params, prefix + ".in", concat_channels<T>({x, depth_plane}), mode);
  h = dense_block(params, prefix + ".dense", h, config.dense_layers, config.growth, mode);
  return conv_bn_relu(params, prefix + ".out", h, mode);
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> encoder_block(ParamStore<T>& params, const std::string& prefix,
                                              const Tensor<T>& x, const Tensor<T>& depth_plane,
                                              const NetConfig& config, NetMode mode) {
  auto skip = cdc_body(params, prefix, x, depth_plane, config, mode);
  auto down = avg_pool2(skip);
  return {skip, down};
}

template <typename T>
Tensor<T> bottleneck_block(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                           const Tensor<T>& depth_plane, const NetConfig& config, NetMode mode) {
  return cdc_body(params, prefix, x, depth_plane, config, mode);
}

template <typename T>
Tensor<T> decoder_block(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                        const Tensor<T>& skip, const Tensor<T>& depth_plane,
                        const NetConfig& config, NetMode mode) {
  if (skip.dim(2) != 2 * x.dim(2) || skip.dim(3) != 2 * x.dim(3))
    throw std::invalid_argument(prefix + ": skip " + shape_str(skip.shape()) +
                                " must be exactly twice the spatial size of input " +
                                shape_str(x.shape()));
  auto h = cdc_body(params, prefix, x, depth_plane, config, mode);  // 4*hidden channels
  h = pixel_shuffle(h, 2);
  return conv_bn_relu(params, prefix + ".fuse", concat_channels<T>({h, skip}), mode);
}

template <typename T>
Tensor<T> net_forward(ParamStore<T>& params, const NetConfig& config, const Tensor<T>& rgb,
                      const Tensor<T>& raw_depth, NetMode mode) {
  config.validate();
  if (!rgb.defined() || rgb.ndim() != 4 || rgb.dim(1) != 3)
    throw std::invalid_argument("net_forward: rgb must be [N,3,H,W]");
  if (!raw_depth.defined() || raw_depth.ndim() != 4 || raw_depth.dim(1) != 1)
    throw std::invalid_argument("net_forward: raw_depth must be [N,1,H,W]");
  if (rgb.dim(0) != raw_depth.dim(0) || rgb.dim(2) != raw_depth.dim(2) ||
      rgb.dim(3) != raw_depth.dim(3))
    throw std::invalid_argument("net_forward: rgb " + shape_str(rgb.shape()) +
                                " and raw_depth " + shape_str(raw_depth.shape()) + " disagree");
  if (rgb.dim(2) != config.height || rgb.dim(3) != config.width)
    throw std::invalid_argument("net_forward: input " + shape_str(rgb.shape()) +
                                " does not match the configured " + std::to_string(config.width) +
                                "x" + std::to_string(config.height));

  // depth pyramid, one plane per scale
  std::vector<Tensor<T>> depth_at;
  depth_at.push_back(raw_depth);
  for (int l = 1; l <= config.levels; ++l) depth_at.push_back(avg_pool2(depth_at.back()));

  auto x = conv_bn_relu(params, "stem", concat_channels<T>({rgb, raw_depth}), mode);
  std::vector<Tensor<T>> skips(static_cast<size_t>(config.levels) + 1);
  for (int l = 1; l <= config.levels; ++l) {
    auto [skip, down] = encoder_block(params, "enc" + std::to_string(l), x,
                                      depth_at[static_cast<size_t>(l - 1)], config, mode);
    skips[static_cast<size_t>(l)] = skip;
    x = down;
  }
  x = bottleneck_block(params, "mid", x, depth_at[static_cast<size_t>(config.levels)], config,
                       mode);
  for (int l = config.levels; l >= 1; --l)
    x = decoder_block(params, "dec" + std::to_string(l), x, skips[static_cast<size_t>(l)],
                      depth_at[static_cast<size_t>(l)], config, mode);
  return conv2d(x, params.get("head.conv.weight"), params.get("head.conv.bias"), 1, 1);
}

#define DEPTHFILL_INSTANTIATE_NET(T)                                                           \
  template ParamStore<T> build_net<T>(const NetConfig&, uint64_t);                             \
  template Tensor<T> dense_block<T>(ParamStore<T>&, const std::string&, const Tensor<T>&, int, \
                                    int, NetMode);                                             \
  template std::pair<Tensor<T>, Tensor<T>> encoder_block<T>(ParamStore<T>&,                    \
                                                            const std::string&, const Tensor<T>&, \
                                                            const Tensor<T>&, const NetConfig&, \
                                                            NetMode);                          \
  template Tensor<T> bottleneck_block<T>(ParamStore<T>&, const std::string&, const Tensor<T>&, \
                                         const Tensor<T>&, const NetConfig&, NetMode);         \
  template Tensor<T> decoder_block<T>(ParamStore<T>&, const std::string&, const Tensor<T>&,    \
                                      const Tensor<T>&, const Tensor<T>&, const NetConfig&,    \
                                      NetMode);                                                \
  template Tensor<T> net_forward<T>(ParamStore<T>&, const NetConfig&, const Tensor<T>&,        \
                                    const Tensor<T>&, NetMode);

DEPTHFILL_INSTANTIATE_NET(float)
DEPTHFILL_INSTANTIATE_NET(double)

#undef DEPTHFILL_INSTANTIATE_NET

}  // namespace depthfill
