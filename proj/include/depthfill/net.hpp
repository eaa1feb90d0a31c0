#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "depthfill/tensor.hpp"

namespace depthfill {

// Four-level U-Net of dense-block composites with the raw depth plane
// injected into every block and sub-pixel upsampling on the decoder path.
struct NetConfig {
  int hidden = 64;
  int dense_layers = 5;
  int growth = 12;
  int levels = 4;
  int height = 240;
  int width = 320;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

enum class NetMode { Train, Eval };

// Seeded Kaiming-uniform initialization for conv weights, zero biases,
// identity batch-norm; bit-identical for a fixed seed.
template <typename T>
ParamStore<T> build_net(const NetConfig& config, uint64_t seed);

// L dense layers: layer i maps concat(x, y_1..y_{i-1}) through a 3x3 conv to
// `growth` channels (+BN+ReLU); output is concat(x, y_1..y_L).
template <typename T>
Tensor<T> dense_block(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                      int layers, int growth, NetMode mode);

// conv -> dense -> conv with the depth plane concatenated in front; returns
// (skip_out, down_out = avg_pool2(skip_out)).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> encoder_block(ParamStore<T>& params, const std::string& prefix,
                                              const Tensor<T>& x, const Tensor<T>& depth_plane,
                                              const NetConfig& config, NetMode mode);

// encoder_block without the trailing pool.
template <typename T>
Tensor<T> bottleneck_block(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                           const Tensor<T>& depth_plane, const NetConfig& config, NetMode mode);

// conv -> dense -> conv to 4*hidden -> pixel_shuffle(2) -> fuse with the skip
// path; the skip must be exactly twice the spatial size of x.
template <typename T>
Tensor<T> decoder_block(ParamStore<T>& params, const std::string& prefix, const Tensor<T>& x,
                        const Tensor<T>& skip, const Tensor<T>& depth_plane,
                        const NetConfig& config, NetMode mode);

// rgb [N,3,H,W] in [0,1], raw_depth [N,1,H,W] in meters (0 = missing,
// caller clamps to [0,3]). Returns predicted depth [N,1,H,W] in meters.
template <typename T>
Tensor<T> net_forward(ParamStore<T>& params, const NetConfig& config, const Tensor<T>& rgb,
                      const Tensor<T>& raw_depth, NetMode mode);

}  // namespace depthfill
