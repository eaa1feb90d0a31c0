#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace depthfill {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense tensor with reverse-mode autodiff. Canonical image layout is
// [N, C, H, W]. Values are immutable once an op has produced the tensor;
// only grad buffers mutate afterwards. A graph instance belongs to one
// thread of execution.
template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // sized lazily, same length as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl<T>>> parents;
  std::function<void(TensorImpl<T>&)> backward_fn;  // scatter this->grad into parents

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->values.size()); }

  std::span<const T> values() const { return impl_->values; }
  // Mutable access; intended for filling leaf tensors before they enter a graph.
  std::span<T> raw() { return impl_->values; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  std::span<const T> grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  std::span<T> raw_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.assign(impl_->values.size(), T(0)); }

  // Reverse-mode sweep from a scalar. Populates grad on every requires_grad
  // node reachable through recorded ops; repeated calls accumulate.
  void backward();

  std::shared_ptr<TensorImpl<T>>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  T item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return impl_->values[0];
  }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl<T>> impl_;

  template <typename U>
  friend Tensor<U> make_tensor(std::shared_ptr<TensorImpl<U>> impl);
};

template <typename T>
Tensor<T> make_tensor(std::shared_ptr<TensorImpl<T>> impl) {
  return Tensor<T>(std::move(impl));
}

// ---- network ops ----

// Cross-correlation (no kernel flip). input [N,Cin,H,W], weight
// [Cout,Cin,kh,kw], bias [Cout]. Requires (H + 2*padding - kh) % stride == 0
// and likewise for W.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

// Batch normalization over (N,H,W) per channel. Train mode normalizes with
// batch statistics (biased variance) and updates running stats in place with
// the given momentum; eval mode uses the running stats.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum = 0.1, double epsilon = 1e-5);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

// Channel-axis concatenation in argument order; all inputs share N,H,W.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs);

// Non-overlapping 2x2 mean pool; H and W must be even.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input);

// Sub-pixel rearrangement: [N, C*r^2, H, W] -> [N, C, r*H, r*W] with
// out(n,c,r*h+i,r*w+j) = in(n, c*r^2 + i*r + j, h, w).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int r);

// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, int r);

// ---- elementwise / reduction ops (loss plumbing) ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s);
// Full reduction to a scalar tensor of shape {1}.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

// Finite differences along the width/height axis of [N,C,H,W] tensors:
// central in the interior, one-sided (step 1) at the borders. Matches the
// stencil used by geometry::normals_from_depth.
template <typename T>
Tensor<T> diff_w(const Tensor<T>& a);
template <typename T>
Tensor<T> diff_h(const Tensor<T>& a);

// ---- parameter store ----

// Ordered collection of named leaf tensors (weights plus BN running stats).
// Names are '.'-separated hierarchical paths; iteration order is insertion
// order, which keeps optimizer sweeps and serialization deterministic.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& [name, t] : entries_)
      if (t.requires_grad()) t.zero_grad();
  }
  int64_t numel() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }
  int64_t trainable_numel() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_)
      if (t.requires_grad()) n += t.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace depthfill
