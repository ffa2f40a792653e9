#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oplanes/errors.hpp"

namespace oplanes::nn {

// Dense row-major array. Image tensors use channels x height x width, with an
// optional leading batch/plane dimension. The scalar type doubles as the
// precision mode: Tensor<double> for gradient checks, Tensor<float> for
// training and inference.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0));
  Tensor(std::vector<int> shape, std::vector<T> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(i < 0 ? shape_.size() + i : i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // CHW view helpers; valid on 3-D tensors.
  int channels() const { return dim(-3); }
  int height() const { return dim(-2); }
  int width() const { return dim(-1); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height() + y) * width() + x]; }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }

  // Sub-tensor along the leading dimension (copy).
  Tensor slice(int index) const;
  void set_slice(int index, const Tensor& value);

  Tensor reshaped(std::vector<int> shape) const;
  void fill(T value);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

std::size_t shape_product(const std::vector<int>& shape);

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op);

// ---------------------------------------------------------------------------
// Convolution (stride 1, zero "same" padding, cross-correlation).
// weight: out x in x k x k, bias: out.

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

// Accumulates into grad_weight/grad_bias; returns the gradient w.r.t. input
// unless need_input_grad is false (then an empty tensor).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          Tensor<T>& grad_weight, Tensor<T>& grad_bias, bool need_input_grad = true);

// ---------------------------------------------------------------------------
// Group normalization over (channels/groups) x H x W per group.

template <typename T>
struct GroupNormCache {
  Tensor<T> normalized;         // x_hat
  std::vector<T> inv_std;       // one per group
  int groups = 1;
};

template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, int groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps, GroupNormCache<T>* cache = nullptr);

template <typename T>
Tensor<T> group_norm_backward(const GroupNormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& grad_out,
                              Tensor<T>& grad_gamma, Tensor<T>& grad_beta);

// Group count rule: 32 groups when there are at least 32 channels, one group
// per channel otherwise. Channels must still divide evenly.
int default_group_count(int channels);

// ---------------------------------------------------------------------------
// Elementwise and structural helpers.

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// grad_in = grad_out where the forward output was positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out);

template <typename T>
T sigmoid(T x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first_channels);

// ---------------------------------------------------------------------------
// Resampling.

// Bilinear, align_corners = false, edge clamped.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int out_h, int out_w);
template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& grad_out, int in_h, int in_w);

// 2x2 mean pooling; H and W must be even.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input);
template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// out[0, y, x] = sum_c a[c, y, x] * b[c, y, x]

template <typename T>
Tensor<T> pixelwise_inner_product(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void pixelwise_inner_product_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out,
                                      Tensor<T>& grad_a, Tensor<T>& grad_b);

// ---------------------------------------------------------------------------
// Parameters and optimizer.

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}
  void zero_grad() { grad.fill(T(0)); }
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  long step = 0;
};

// Bias-corrected Adam. Moments are lazily sized on the first call. Gradients
// are left untouched. Throws UpdateError naming the first parameter holding a
// non-finite gradient, before anything is modified.
template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, const AdamOptions& opts = {});

// ---------------------------------------------------------------------------
// Gradient verification.

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::size_t below_floor = 0;  // coordinates excused by noise_floor
};

// Central differences of `loss` around `input`, compared against `analytic`
// (the gradient the implementation computed at `input`). When max_coords is
// nonzero only that many coordinates (chosen with `seed`) are probed. The
// relative error denominator is max(|analytic|, |numeric|, 1e-8).
// Coordinates where both the analytic and the numeric value are within
// `noise_floor` of zero count as exact: a parameter the output does not
// depend on (a conv bias cancelled by a following normalization) has a zero
// gradient, and central differences only return rounding noise there.
GradCheckResult finite_difference_check(const std::function<double(const Tensor<double>&)>& loss,
                                        const Tensor<double>& input, const Tensor<double>& analytic,
                                        double epsilon = 1e-4, std::size_t max_coords = 0,
                                        unsigned long long seed = 0, double noise_floor = 0.0);

}  // namespace oplanes::nn
