#pragma once

#include <cstdint>
#include <string>

#include "depthfill/geometry.hpp"
#include "depthfill/tensor.hpp"

namespace depthfill {

struct LossConfig {
  double beta = 0.001;     // weight of the surface-normal term
  double valid_lo = 0.3;   // meters, closed interval
  double valid_hi = 1.5;

  void validate() const;
};

// True iff valid_lo <= d <= valid_hi. Missing depth (0) is always invalid.
Mask valid_mask(const DepthMap& gt_depth, const LossConfig& config);

// Composite objective: masked mean squared depth error plus beta times the
// mean cosine distance between normals computed from pred and gt through the
// same width/height gradient stencil as geometry::normals_from_depth. A pixel
// enters the normal term only when its full difference stencil lies inside
// the valid mask. Throws when no pixel is valid.
template <typename T>
Tensor<T> loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& config);

enum class MetricScope { Masked, Global };

struct MetricsReport {
  double rmse = 0, rel = 0, mae = 0;
  double d105 = 0, d110 = 0, d125 = 0;  // percentages
  int64_t pixel_count = 0;
  bool defined = false;  // false when the evaluation set is empty

  static std::string csv_header();
  std::string csv_row(MetricScope scope) const;
};

// Evaluation set: valid range intersected with the transparent mask for
// Masked scope, valid range alone for Global. delta thresholds use a strict
// max(d/d*, d*/d) < t comparison; nonpositive predictions fail all of them.
MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                              const Mask& transparent_mask, const LossConfig& config,
                              MetricScope scope);

// Pixel-weighted aggregation across samples: pooled squared error for RMSE,
// weighted means elsewhere. Equals a recomputation over the concatenated
// pixel set.
class MetricsAccumulator {
 public:
  void add(const DepthMap& pred, const DepthMap& gt, const Mask& transparent_mask,
           const LossConfig& config, MetricScope scope);
  MetricsReport report() const;

 private:
  double se_ = 0, ae_ = 0, rel_ = 0;
  int64_t n105_ = 0, n110_ = 0, n125_ = 0, count_ = 0;
  friend MetricsReport compute_metrics(const DepthMap&, const DepthMap&, const Mask&,
                                       const LossConfig&, MetricScope);
};

}  // namespace depthfill
