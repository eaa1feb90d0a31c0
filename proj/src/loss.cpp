#include "depthfill/loss.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace depthfill {

void LossConfig::validate() const {
  if (beta < 0) throw std::invalid_argument("LossConfig: beta must be >= 0");
  if (!(0 < valid_lo && valid_lo < valid_hi))
    throw std::invalid_argument("LossConfig: need 0 < valid_lo < valid_hi");
}

Mask valid_mask(const DepthMap& gt_depth, const LossConfig& config) {
  config.validate();
  Mask mask(gt_depth.height(), gt_depth.width());
  for (size_t i = 0; i < gt_depth.data().size(); ++i) {
    const double d = gt_depth.data()[i];
    mask.m[i] = (d >= config.valid_lo && d <= config.valid_hi) ? 1 : 0;
  }
  return mask;
}

namespace {

// Valid-mask lookup over a [N,1,H,W] ground-truth tensor.
template <typename T>
std::vector<uint8_t> valid_flags(const Tensor<T>& gt, const LossConfig& config) {
  std::vector<uint8_t> flags(static_cast<size_t>(gt.numel()));
  for (int64_t i = 0; i < gt.numel(); ++i) {
    const double d = gt.values()[static_cast<size_t>(i)];
    flags[static_cast<size_t>(i)] = (d >= config.valid_lo && d <= config.valid_hi) ? 1 : 0;
  }
  return flags;
}

// A pixel participates in the normal term only when every pixel its width
// and height difference stencils read (central inside, one-sided at borders)
// is valid.
std::vector<uint8_t> stencil_flags(const std::vector<uint8_t>& valid, int N, int H, int W) {
  std::vector<uint8_t> out(valid.size(), 0);
  auto ok = [&](int n, int v, int u) {
    return valid[(static_cast<size_t>(n) * H + v) * W + u] != 0;
  };
  for (int n = 0; n < N; ++n)
    for (int v = 0; v < H; ++v)
      for (int u = 0; u < W; ++u) {
        if (!ok(n, v, u)) continue;
        bool good = true;
        if (W > 1) {
          if (u == 0)
            good = ok(n, v, 1);
          else if (u == W - 1)
            good = ok(n, v, W - 2);
          else
            good = ok(n, v, u - 1) && ok(n, v, u + 1);
        }
        if (good && H > 1) {
          if (v == 0)
            good = ok(n, 1, u);
          else if (v == H - 1)
            good = ok(n, H - 2, u);
          else
            good = ok(n, v - 1, u) && ok(n, v + 1, u);
        }
        if (good) out[(static_cast<size_t>(n) * H + v) * W + u] = 1;
      }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& config) {
  config.validate();
  if (!pred.defined() || !gt.defined() || pred.ndim() != 4 || pred.dim(1) != 1)
    throw std::invalid_argument("loss: pred and gt must be [N,1,H,W]");
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(gt.shape()));
  const int N = pred.dim(0), H = pred.dim(2), W = pred.dim(3);

  const auto flags = valid_flags(gt, config);
  int64_t count_d = 0;
  auto mask_d = Tensor<T>::zeros(pred.shape());
  for (size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) {
      mask_d.raw()[i] = T(1);
      ++count_d;
    }
  if (count_d == 0)
    throw std::invalid_argument("loss: no pixel of the batch lies in the valid depth range [" +
                                std::to_string(config.valid_lo) + ", " +
                                std::to_string(config.valid_hi) + "]");

  const auto diff = sub(pred, gt);
  auto total = scale(sum(mul(mul(diff, diff), mask_d)), T(1) / static_cast<T>(count_d));

  const auto sflags = stencil_flags(flags, N, H, W);
  int64_t count_s = 0;
  auto mask_s = Tensor<T>::zeros(pred.shape());
  for (size_t i = 0; i < sflags.size(); ++i)
    if (sflags[i]) {
      mask_s.raw()[i] = T(1);
      ++count_s;
    }

  if (count_s > 0 && config.beta > 0) {
    const auto pw = diff_w(pred), ph = diff_h(pred);
    const auto gw = diff_w(gt), gh = diff_h(gt);
    // cross products (dw, dh, -1): dot and norms, the -1 components give +1
    auto dot = add_scalar(add(mul(pw, gw), mul(ph, gh)), T(1));
    auto np2 = add_scalar(add(mul(pw, pw), mul(ph, ph)), T(1));
    auto ng2 = add_scalar(add(mul(gw, gw), mul(gh, gh)), T(1));
    auto cosine = div(dot, depthfill::sqrt(mul(np2, ng2)));
    auto ls_map = add_scalar(scale(cosine, T(-1)), T(1));
    auto ls = scale(sum(mul(ls_map, mask_s)), T(1) / static_cast<T>(count_s));
    total = add(total, scale(ls, static_cast<T>(config.beta)));
  }
  return total;
}

template Tensor<float> loss<float>(const Tensor<float>&, const Tensor<float>&, const LossConfig&);
template Tensor<double> loss<double>(const Tensor<double>&, const Tensor<double>&,
                                     const LossConfig&);

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

void MetricsAccumulator::add(const DepthMap& pred, const DepthMap& gt,
                             const Mask& transparent_mask, const LossConfig& config,
                             MetricScope scope) {
  config.validate();
  if (!pred.same_size(gt))
    throw std::invalid_argument("metrics: pred and gt sizes disagree");
  if (scope == MetricScope::Masked &&
      (transparent_mask.height != gt.height() || transparent_mask.width != gt.width()))
    throw std::invalid_argument("metrics: mask size disagrees with depth");

  for (int v = 0; v < gt.height(); ++v)
    for (int u = 0; u < gt.width(); ++u) {
      const double dstar = gt.at(v, u);
      if (dstar < config.valid_lo || dstar > config.valid_hi) continue;
      if (scope == MetricScope::Masked && !transparent_mask.at(v, u)) continue;
      const double d = pred.at(v, u);
      const double err = d - dstar;
      se_ += err * err;
      ae_ += std::fabs(err);
      rel_ += std::fabs(err) / dstar;
      const double ratio =
          d > 0 ? std::max(d / dstar, dstar / d) : std::numeric_limits<double>::infinity();
      if (ratio < 1.05) ++n105_;
      if (ratio < 1.10) ++n110_;
      if (ratio < 1.25) ++n125_;
      ++count_;
    }
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.pixel_count = count_;
  if (count_ == 0) return r;  // undefined
  const double n = static_cast<double>(count_);
  r.rmse = std::sqrt(se_ / n);
  r.rel = rel_ / n;
  r.mae = ae_ / n;
  r.d105 = 100.0 * static_cast<double>(n105_) / n;
  r.d110 = 100.0 * static_cast<double>(n110_) / n;
  r.d125 = 100.0 * static_cast<double>(n125_) / n;
  r.defined = true;
  return r;
}

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                              const Mask& transparent_mask, const LossConfig& config,
                              MetricScope scope) {
  MetricsAccumulator acc;
  acc.add(pred, gt, transparent_mask, config, scope);
  return acc.report();
}

std::string MetricsReport::csv_header() {
  return "scope,pixel_count,rmse,rel,mae,d105,d110,d125";
}

std::string MetricsReport::csv_row(MetricScope scope) const {
  std::ostringstream os;
  os.precision(9);
  os << (scope == MetricScope::Masked ? "masked" : "global") << ',' << pixel_count << ',';
  if (defined) {
    os << rmse << ',' << rel << ',' << mae << ',' << d105 << ',' << d110 << ',' << d125;
  } else {
    os << "nan,nan,nan,nan,nan,nan";
  }
  return os.str();
}

}  // namespace depthfill
