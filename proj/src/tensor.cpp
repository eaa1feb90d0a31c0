#include "depthfill/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace depthfill {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
std::shared_ptr<TensorImpl<T>> new_impl(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl<T>>();
  const int64_t n = shape_numel(shape);
  if (n < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
  impl->shape = std::move(shape);
  impl->values.assign(static_cast<size_t>(n), T(0));
  impl->requires_grad = requires_grad;
  return impl;
}

template <typename T>
void debug_check_finite(const TensorImpl<T>& impl) {
#ifndef NDEBUG
  for (T v : impl.values) assert(std::isfinite(static_cast<double>(v)));
#else
  (void)impl;
#endif
}

template <typename T>
void require_image(const Tensor<T>& t, const char* op) {
  if (!t.defined() || t.ndim() != 4)
    throw std::invalid_argument(std::string(op) + ": expected a 4-d [N,C,H,W] tensor, got " +
                                (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return make_tensor(new_impl<T>(std::move(shape), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto impl = new_impl<T>(std::move(shape), requires_grad);
  std::fill(impl->values.begin(), impl->values.end(), value);
  return make_tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (static_cast<int64_t>(values.size()) != n)
    throw std::invalid_argument("from_vector: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return make_tensor(std::move(impl));
}

template <typename T>
void Tensor<T>::backward() {
  if (!impl_) throw std::invalid_argument("backward(): undefined tensor");
  if (numel() != 1)
    throw std::invalid_argument("backward(): loss must be a scalar, got shape " +
                                shape_str(shape()));
  if (!impl_->requires_grad) return;  // nothing reachable requires grad

  // Post-order DFS; only requires_grad nodes carry gradient.
  std::vector<TensorImpl<T>*> order;
  std::unordered_set<TensorImpl<T>*> visited;
  struct Frame {
    TensorImpl<T>* node;
    size_t next;
  };
  std::vector<Frame> stack;
  visited.insert(impl_.get());
  stack.push_back({impl_.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      TensorImpl<T>* p = f.node->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this sweep; leaf grads accumulate across
  // sweeps until zeroed by the caller.
  for (TensorImpl<T>* node : order) {
    node->ensure_grad();
    if (node->backward_fn) std::fill(node->grad.begin(), node->grad.end(), T(0));
  }
  impl_->grad[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* node = *it;
    if (node->backward_fn) {
      for (auto& p : node->parents)
        if (p->requires_grad) p->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void conv2d_forward_kernel(const T* in, const T* w, const T* b, T* out, int N, int Cin, int H,
                           int W, int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      T* out_plane = out + (static_cast<int64_t>(n) * Cout + co) * Ho * Wo;
      std::fill(out_plane, out_plane + static_cast<int64_t>(Ho) * Wo, b[co]);
      for (int ci = 0; ci < Cin; ++ci) {
        const T* in_plane = in + (static_cast<int64_t>(n) * Cin + ci) * H * W;
        const T* wk = w + (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
        for (int dy = 0; dy < kh; ++dy) {
          for (int dx = 0; dx < kw; ++dx) {
            const T wv = wk[dy * kw + dx];
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride + dy - pad;
              if (iy < 0 || iy >= H) continue;
              const T* in_row = in_plane + static_cast<int64_t>(iy) * W;
              T* out_row = out_plane + static_cast<int64_t>(oy) * Wo;
              if (stride == 1) {
                const int off = dx - pad;
                const int x0 = std::max(0, -off);
                const int x1 = std::min(Wo, W - off);
                const T* src = in_row + off;
                for (int ox = x0; ox < x1; ++ox) out_row[ox] += wv * src[ox];
              } else {
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride + dx - pad;
                  if (ix >= 0 && ix < W) out_row[ox] += wv * in_row[ix];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const T* w, const T* gout, T* gin, int N, int Cin, int H, int W,
                           int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int ci = 0; ci < Cin; ++ci) {
      T* gin_plane = gin + (static_cast<int64_t>(n) * Cin + ci) * H * W;
      for (int co = 0; co < Cout; ++co) {
        const T* gout_plane = gout + (static_cast<int64_t>(n) * Cout + co) * Ho * Wo;
        const T* wk = w + (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
        for (int dy = 0; dy < kh; ++dy) {
          for (int dx = 0; dx < kw; ++dx) {
            const T wv = wk[dy * kw + dx];
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride + dy - pad;
              if (iy < 0 || iy >= H) continue;
              T* gin_row = gin_plane + static_cast<int64_t>(iy) * W;
              const T* gout_row = gout_plane + static_cast<int64_t>(oy) * Wo;
              if (stride == 1) {
                const int off = dx - pad;
                const int x0 = std::max(0, -off);
                const int x1 = std::min(Wo, W - off);
                for (int ox = x0; ox < x1; ++ox) gin_row[ox + off] += wv * gout_row[ox];
              } else {
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride + dx - pad;
                  if (ix >= 0 && ix < W) gin_row[ix] += wv * gout_row[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const T* in, const T* gout, T* gw, int N, int Cin, int H, int W,
                            int Cout, int kh, int kw, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < Cin; ++ci) {
      T* gwk = gw + (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
      for (int dy = 0; dy < kh; ++dy) {
        for (int dx = 0; dx < kw; ++dx) {
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* in_plane = in + (static_cast<int64_t>(n) * Cin + ci) * H * W;
            const T* gout_plane = gout + (static_cast<int64_t>(n) * Cout + co) * Ho * Wo;
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride + dy - pad;
              if (iy < 0 || iy >= H) continue;
              const T* in_row = in_plane + static_cast<int64_t>(iy) * W;
              const T* gout_row = gout_plane + static_cast<int64_t>(oy) * Wo;
              if (stride == 1) {
                const int off = dx - pad;
                const int x0 = std::max(0, -off);
                const int x1 = std::min(Wo, W - off);
                for (int ox = x0; ox < x1; ++ox) acc += gout_row[ox] * in_row[ox + off];
              } else {
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride + dx - pad;
                  if (ix >= 0 && ix < W) acc += gout_row[ox] * in_row[ix];
                }
              }
            }
          }
          gwk[dy * kw + dx] += acc;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  require_image(input, "conv2d input");
  require_image(weight, "conv2d weight");
  if (!bias.defined() || bias.ndim() != 1)
    throw std::invalid_argument("conv2d: bias must be 1-d");
  const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin)
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                " input channels (weight " + shape_str(weight.shape()) +
                                ") but input has " + std::to_string(Cin) + " (input " +
                                shape_str(input.shape()) + ")");
  if (bias.dim(0) != Cout)
    throw std::invalid_argument("conv2d: bias size " + std::to_string(bias.dim(0)) +
                                " does not match " + std::to_string(Cout) + " output channels");
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int hn = H + 2 * padding - kh;
  const int wn = W + 2 * padding - kw;
  if (hn < 0 || wn < 0)
    throw std::invalid_argument("conv2d: kernel " + shape_str(weight.shape()) +
                                " larger than padded input " + shape_str(input.shape()));
  // floor semantics: trailing rows/cols that do not fit a full stride are dropped
  const int Ho = hn / stride + 1;
  const int Wo = wn / stride + 1;

  const bool rg = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  auto out = new_impl<T>({N, Cout, Ho, Wo}, rg);
  conv2d_forward_kernel(input.values().data(), weight.values().data(), bias.values().data(),
                        out->values.data(), N, Cin, H, W, Cout, kh, kw, stride, padding, Ho, Wo);
  debug_check_finite(*out);

  if (rg) {
    out->parents = {input.impl(), weight.impl(), bias.impl()};
    auto in_impl = input.impl();
    auto w_impl = weight.impl();
    auto b_impl = bias.impl();
    const int s = stride, p = padding;
    out->backward_fn = [=](TensorImpl<T>& self) {
      if (in_impl->requires_grad)
        conv2d_backward_input(w_impl->values.data(), self.grad.data(), in_impl->grad.data(), N,
                              Cin, H, W, Cout, kh, kw, s, p, Ho, Wo);
      if (w_impl->requires_grad)
        conv2d_backward_weight(in_impl->values.data(), self.grad.data(), w_impl->grad.data(), N,
                               Cin, H, W, Cout, kh, kw, s, p, Ho, Wo);
      if (b_impl->requires_grad) {
        for (int co = 0; co < Cout; ++co) {
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* g = self.grad.data() + (static_cast<int64_t>(n) * Cout + co) * Ho * Wo;
            for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) acc += g[i];
          }
          b_impl->grad[co] += acc;
        }
      }
    };
  }
  return make_tensor(std::move(out));
}

// ---------------------------------------------------------------------------
// batch_norm
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double epsilon) {
  require_image(input, "batch_norm");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  for (const Tensor<T>* t :
       std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var})
    if (!t->defined() || t->ndim() != 1 || t->dim(0) != C)
      throw std::invalid_argument("batch_norm: per-channel tensors must have shape [" +
                                  std::to_string(C) + "]");
  const int64_t M = static_cast<int64_t>(N) * H * W;
  if (training && M < 2)
    throw std::invalid_argument("batch_norm: train mode needs at least 2 elements per channel "
                                "statistic, got " + std::to_string(M));

  const int64_t plane = static_cast<int64_t>(H) * W;
  std::vector<T> mean(C), invstd(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double m = 0;
      for (int n = 0; n < N; ++n) {
        const T* x = input.values().data() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) m += x[i];
      }
      m /= static_cast<double>(M);
      double v = 0;
      for (int n = 0; n < N; ++n) {
        const T* x = input.values().data() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = x[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(M);  // biased, used for normalization
      mean[c] = static_cast<T>(m);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(v + epsilon));
      // running stats keep the unbiased variance
      const double unbiased = v * static_cast<double>(M) / static_cast<double>(M - 1);
      running_mean.raw()[c] =
          static_cast<T>((1.0 - momentum) * running_mean.values()[c] + momentum * m);
      running_var.raw()[c] =
          static_cast<T>((1.0 - momentum) * running_var.values()[c] + momentum * unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.values()[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.values()[c]) +
                                                 epsilon));
    }
  }

  const bool rg = input.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  auto out = new_impl<T>({N, C, H, W}, rg);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* x = input.values().data() + (static_cast<int64_t>(n) * C + c) * plane;
      T* y = out->values.data() + (static_cast<int64_t>(n) * C + c) * plane;
      const T g = gamma.values()[c], b = beta.values()[c], mu = mean[c], is = invstd[c];
      for (int64_t i = 0; i < plane; ++i) y[i] = g * (x[i] - mu) * is + b;
    }
  }
  debug_check_finite(*out);

  if (rg) {
    out->parents = {input.impl(), gamma.impl(), beta.impl()};
    auto in_impl = input.impl();
    auto g_impl = gamma.impl();
    auto b_impl = beta.impl();
    // snapshots: running stats may be overwritten by later forwards
    out->backward_fn = [=, mean = std::move(mean), invstd = std::move(invstd)](
                           TensorImpl<T>& self) {
      for (int c = 0; c < C; ++c) {
        const T mu = mean[c], is = invstd[c], g = g_impl->values[c];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < N; ++n) {
          const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
          const T* x = in_impl->values.data() + base;
          const T* dy = self.grad.data() + base;
          for (int64_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * (x[i] - mu) * is;
          }
        }
        if (g_impl->requires_grad) g_impl->grad[c] += static_cast<T>(sum_dy_xhat);
        if (b_impl->requires_grad) b_impl->grad[c] += static_cast<T>(sum_dy);
        if (in_impl->requires_grad) {
          if (training) {
            const double inv_m = 1.0 / static_cast<double>(M);
            for (int n = 0; n < N; ++n) {
              const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
              const T* x = in_impl->values.data() + base;
              const T* dy = self.grad.data() + base;
              T* dx = in_impl->grad.data() + base;
              for (int64_t i = 0; i < plane; ++i) {
                const double xhat = (x[i] - mu) * is;
                dx[i] += static_cast<T>(static_cast<double>(g) * is *
                                        (dy[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat));
              }
            }
          } else {
            for (int n = 0; n < N; ++n) {
              const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
              const T* dy = self.grad.data() + base;
              T* dx = in_impl->grad.data() + base;
              for (int64_t i = 0; i < plane; ++i) dx[i] += g * is * dy[i];
            }
          }
        }
      }
    };
  }
  return make_tensor(std::move(out));
}

// ---------------------------------------------------------------------------
// relu / concat / pooling / pixel shuffle
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  if (!input.defined()) throw std::invalid_argument("relu: undefined tensor");
  auto out = new_impl<T>(input.shape(), input.requires_grad());
  const T* x = input.values().data();
  T* y = out->values.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  if (input.requires_grad()) {
    out->parents = {input.impl()};
    auto in_impl = input.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      T* dx = in_impl->grad.data();
      const T* xv = in_impl->values.data();
      for (int64_t i = 0; i < n; ++i)
        if (xv[i] > T(0)) dx[i] += self.grad[i];
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  for (const auto& t : inputs) require_image(t, "concat_channels");
  const int N = inputs[0].dim(0), H = inputs[0].dim(2), W = inputs[0].dim(3);
  int Ctot = 0;
  bool rg = false;
  for (const auto& t : inputs) {
    if (t.dim(0) != N || t.dim(2) != H || t.dim(3) != W)
      throw std::invalid_argument("concat_channels: spatial/batch mismatch " +
                                  shape_str(inputs[0].shape()) + " vs " + shape_str(t.shape()));
    Ctot += t.dim(1);
    rg = rg || t.requires_grad();
  }
  auto out = new_impl<T>({N, Ctot, H, W}, rg);
  const int64_t plane = static_cast<int64_t>(H) * W;
  int c0 = 0;
  for (const auto& t : inputs) {
    const int C = t.dim(1);
    for (int n = 0; n < N; ++n)
      std::memcpy(out->values.data() + ((static_cast<int64_t>(n) * Ctot + c0) * plane),
                  t.values().data() + (static_cast<int64_t>(n) * C * plane),
                  sizeof(T) * static_cast<size_t>(C * plane));
    c0 += C;
  }
  if (rg) {
    std::vector<int> channels;
    for (const auto& t : inputs) {
      out->parents.push_back(t.impl());
      channels.push_back(t.dim(1));
    }
    out->backward_fn = [=, parents = out->parents](TensorImpl<T>& self) {
      int off = 0;
      for (size_t k = 0; k < parents.size(); ++k) {
        const int C = channels[k];
        if (parents[k]->requires_grad) {
          for (int n = 0; n < N; ++n) {
            const T* g = self.grad.data() + ((static_cast<int64_t>(n) * Ctot + off) * plane);
            T* dst = parents[k]->grad.data() + (static_cast<int64_t>(n) * C * plane);
            for (int64_t i = 0; i < static_cast<int64_t>(C) * plane; ++i) dst[i] += g[i];
          }
        }
        off += C;
      }
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input) {
  require_image(input, "avg_pool2");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("avg_pool2: H and W must be even, got " +
                                shape_str(input.shape()));
  const int Ho = H / 2, Wo = W / 2;
  auto out = new_impl<T>({N, C, Ho, Wo}, input.requires_grad());
  const T* x = input.values().data();
  T* y = out->values.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* xp = x + (static_cast<int64_t>(n) * C + c) * H * W;
      T* yp = y + (static_cast<int64_t>(n) * C + c) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
          yp[oy * Wo + ox] = static_cast<T>(0.25) *
                             (xp[(2 * oy) * W + 2 * ox] + xp[(2 * oy) * W + 2 * ox + 1] +
                              xp[(2 * oy + 1) * W + 2 * ox] + xp[(2 * oy + 1) * W + 2 * ox + 1]);
    }
  }
  if (input.requires_grad()) {
    out->parents = {input.impl()};
    auto in_impl = input.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      T* dx = in_impl->grad.data();
      const T* g = self.grad.data();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T* dxp = dx + (static_cast<int64_t>(n) * C + c) * H * W;
          const T* gp = g + (static_cast<int64_t>(n) * C + c) * Ho * Wo;
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              const T v = static_cast<T>(0.25) * gp[oy * Wo + ox];
              dxp[(2 * oy) * W + 2 * ox] += v;
              dxp[(2 * oy) * W + 2 * ox + 1] += v;
              dxp[(2 * oy + 1) * W + 2 * ox] += v;
              dxp[(2 * oy + 1) * W + 2 * ox + 1] += v;
            }
        }
    };
  }
  return make_tensor(std::move(out));
}

namespace {

// dir=+1: shuffle [N,C*r^2,H,W] -> [N,C,rH,rW]; dir=-1: inverse mapping.
template <typename T>
void shuffle_copy(const T* src, T* dst, int N, int C, int H, int W, int r, bool inverse,
                  bool accumulate) {
  const int Cr = C * r * r;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const int64_t src_plane = (static_cast<int64_t>(n) * Cr + c * r * r + i * r + j) *
                                    static_cast<int64_t>(H) * W;
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
              const int64_t lo = src_plane + static_cast<int64_t>(h) * W + w;
              const int64_t hi =
                  ((static_cast<int64_t>(n) * C + c) * (static_cast<int64_t>(H) * r) +
                   (static_cast<int64_t>(h) * r + i)) *
                      (static_cast<int64_t>(W) * r) +
                  (static_cast<int64_t>(w) * r + j);
              const int64_t s = inverse ? hi : lo;
              const int64_t d = inverse ? lo : hi;
              if (accumulate)
                dst[d] += src[s];
              else
                dst[d] = src[s];
            }
        }
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int r) {
  require_image(input, "pixel_shuffle");
  if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be positive");
  const int N = input.dim(0), Cr = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (Cr % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: " + std::to_string(Cr) +
                                " channels not divisible by r^2=" + std::to_string(r * r));
  const int C = Cr / (r * r);
  auto out = new_impl<T>({N, C, H * r, W * r}, input.requires_grad());
  shuffle_copy(input.values().data(), out->values.data(), N, C, H, W, r, false, false);
  if (input.requires_grad()) {
    out->parents = {input.impl()};
    auto in_impl = input.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      shuffle_copy(self.grad.data(), in_impl->grad.data(), N, C, H, W, r, true, true);
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, int r) {
  require_image(input, "pixel_unshuffle");
  if (r < 1) throw std::invalid_argument("pixel_unshuffle: r must be positive");
  const int N = input.dim(0), C = input.dim(1), Hr = input.dim(2), Wr = input.dim(3);
  if (Hr % r != 0 || Wr % r != 0)
    throw std::invalid_argument("pixel_unshuffle: spatial dims not divisible by r");
  const int H = Hr / r, W = Wr / r;
  auto out = new_impl<T>({N, C * r * r, H, W}, input.requires_grad());
  shuffle_copy(input.values().data(), out->values.data(), N, C, H, W, r, true, false);
  if (input.requires_grad()) {
    out->parents = {input.impl()};
    auto in_impl = input.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      shuffle_copy(self.grad.data(), in_impl->grad.data(), N, C, H, W, r, false, true);
    };
  }
  return make_tensor(std::move(out));
}

// ---------------------------------------------------------------------------
// elementwise / reductions
// ---------------------------------------------------------------------------

namespace {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = new_impl<T>(a.shape(), rg);
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* y = out->values.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = fwd(av[i], bv[i]);
  if (rg) {
    out->parents = {a.impl(), b.impl()};
    auto ai = a.impl();
    auto bi = b.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      for (int64_t i = 0; i < n; ++i)
        bwd(self.grad[i], ai->values[i], bi->values[i],
            ai->requires_grad ? &ai->grad[i] : nullptr,
            bi->requires_grad ? &bi->grad[i] : nullptr);
    };
  }
  return make_tensor(std::move(out));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T g, T, T, T* da, T* db) {
        if (da) *da += g;
        if (db) *db += g;
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T g, T, T, T* da, T* db) {
        if (da) *da += g;
        if (db) *db -= g;
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T g, T x, T y, T* da, T* db) {
        if (da) *da += g * y;
        if (db) *db += g * x;
      });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, "div", [](T x, T y) { return x / y; },
      [](T g, T x, T y, T* da, T* db) {
        if (da) *da += g / y;
        if (db) *db -= g * x / (y * y);
      });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  if (!a.defined()) throw std::invalid_argument("sqrt: undefined tensor");
  auto out = new_impl<T>(a.shape(), a.requires_grad());
  const T* x = a.values().data();
  T* y = out->values.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = std::sqrt(x[i]);
  if (a.requires_grad()) {
    out->parents = {a.impl()};
    auto ai = a.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      for (int64_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i] / (T(2) * self.values[i]);
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = new_impl<T>(a.shape(), a.requires_grad());
  const T* x = a.values().data();
  T* y = out->values.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = s * x[i];
  if (a.requires_grad()) {
    out->parents = {a.impl()};
    auto ai = a.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      for (int64_t i = 0; i < n; ++i) ai->grad[i] += s * self.grad[i];
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  auto out = new_impl<T>(a.shape(), a.requires_grad());
  const T* x = a.values().data();
  T* y = out->values.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] + s;
  if (a.requires_grad()) {
    out->parents = {a.impl()};
    auto ai = a.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      for (int64_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i];
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = new_impl<T>({1}, a.requires_grad());
  const T* x = a.values().data();
  const int64_t n = a.numel();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  out->values[0] = acc;
  if (a.requires_grad()) {
    out->parents = {a.impl()};
    auto ai = a.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      const T g = self.grad[0];
      for (int64_t i = 0; i < n; ++i) ai->grad[i] += g;
    };
  }
  return make_tensor(std::move(out));
}

namespace {

// axis=0: width (innermost), axis=1: height. Central difference inside,
// one-sided step-1 difference at the two borders; zero when the axis has
// a single element.
template <typename T>
void diff_forward(const T* x, T* y, int64_t rows, int len, int64_t stride) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x;
    T* yr = y;
    if (len == 1) {
      yr[0] = T(0);
    } else {
      yr[0] = xr[stride] - xr[0];
      for (int i = 1; i < len - 1; ++i)
        yr[static_cast<int64_t>(i) * stride] = static_cast<T>(0.5) *
                                               (xr[static_cast<int64_t>(i + 1) * stride] -
                                                xr[static_cast<int64_t>(i - 1) * stride]);
      yr[static_cast<int64_t>(len - 1) * stride] =
          xr[static_cast<int64_t>(len - 1) * stride] - xr[static_cast<int64_t>(len - 2) * stride];
    }
    x += (stride == 1) ? len : 1;
    y += (stride == 1) ? len : 1;
  }
}

template <typename T>
void diff_backward(const T* g, T* dx, int64_t rows, int len, int64_t stride) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* gr = g;
    T* dr = dx;
    if (len > 1) {
      dr[stride] += gr[0];
      dr[0] -= gr[0];
      for (int i = 1; i < len - 1; ++i) {
        const T h = static_cast<T>(0.5) * gr[static_cast<int64_t>(i) * stride];
        dr[static_cast<int64_t>(i + 1) * stride] += h;
        dr[static_cast<int64_t>(i - 1) * stride] -= h;
      }
      dr[static_cast<int64_t>(len - 1) * stride] += gr[static_cast<int64_t>(len - 1) * stride];
      dr[static_cast<int64_t>(len - 2) * stride] -= gr[static_cast<int64_t>(len - 1) * stride];
    }
    g += (stride == 1) ? len : 1;
    dx += (stride == 1) ? len : 1;
  }
}

}  // namespace

template <typename T>
Tensor<T> diff_w(const Tensor<T>& a) {
  require_image(a, "diff_w");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  auto out = new_impl<T>(a.shape(), a.requires_grad());
  diff_forward(a.values().data(), out->values.data(),
               static_cast<int64_t>(N) * C * H, W, 1);
  if (a.requires_grad()) {
    out->parents = {a.impl()};
    auto ai = a.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      diff_backward(self.grad.data(), ai->grad.data(), static_cast<int64_t>(N) * C * H, W, 1);
    };
  }
  return make_tensor(std::move(out));
}

template <typename T>
Tensor<T> diff_h(const Tensor<T>& a) {
  require_image(a, "diff_h");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  auto out = new_impl<T>(a.shape(), a.requires_grad());
  // walk columns: for each (n,c) plane, W columns of height H with stride W
  const T* x = a.values().data();
  T* y = out->values.data();
  for (int64_t p = 0; p < static_cast<int64_t>(N) * C; ++p)
    diff_forward(x + p * H * W, y + p * H * W, W, H, W);
  if (a.requires_grad()) {
    out->parents = {a.impl()};
    auto ai = a.impl();
    out->backward_fn = [=](TensorImpl<T>& self) {
      for (int64_t p = 0; p < static_cast<int64_t>(N) * C; ++p)
        diff_backward(self.grad.data() + p * H * W, ai->grad.data() + p * H * W, W, H, W);
    };
  }
  return make_tensor(std::move(out));
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

#define DEPTHFILL_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,    \
                               int);                                                          \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                   Tensor<T>&, Tensor<T>&, bool, double, double);             \
  template Tensor<T> relu<T>(const Tensor<T>&);                                               \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                      \
  template Tensor<T> avg_pool2<T>(const Tensor<T>&);                                          \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                                 \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int);                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sqrt<T>(const Tensor<T>&);                                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                      \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                \
  template Tensor<T> diff_w<T>(const Tensor<T>&);                                             \
  template Tensor<T> diff_h<T>(const Tensor<T>&);

DEPTHFILL_INSTANTIATE(float)
DEPTHFILL_INSTANTIATE(double)

#undef DEPTHFILL_INSTANTIATE

}  // namespace depthfill
