#include "oplanes/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace oplanes::nn {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
  data_.assign(shape_product(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string());
}

template <typename T>
Tensor<T> Tensor<T>::slice(int index) const {
  if (shape_.empty() || index < 0 || index >= shape_[0]) throw ShapeError("slice index out of range");
  std::vector<int> sub(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_product(sub);
  std::vector<T> out(data_.begin() + index * n, data_.begin() + (index + 1) * n);
  return Tensor(std::move(sub), std::move(out));
}

template <typename T>
void Tensor<T>::set_slice(int index, const Tensor& value) {
  if (shape_.empty() || index < 0 || index >= shape_[0]) throw ShapeError("slice index out of range");
  std::vector<int> sub(shape_.begin() + 1, shape_.end());
  if (value.shape() != sub) throw ShapeError("slice shape mismatch: " + value.shape_string() + " vs " + shape_string());
  std::copy(value.data_.begin(), value.data_.end(), data_.begin() + index * value.size());
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(std::vector<int> shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
std::string Tensor<T>::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_chw(int ndim, const char* op) {
  if (ndim != 3) throw ShapeError(std::string(op) + ": expected a channels x height x width tensor");
}

// Rows of the output image processed per im2col block; bounds the scratch
// buffer for large inputs.
int rows_per_block(int cols_per_row, int patch) {
  constexpr std::size_t kMaxScratch = std::size_t(1) << 24;
  const std::size_t per_row = std::size_t(cols_per_row) * patch;
  return static_cast<int>(std::max<std::size_t>(1, kMaxScratch / std::max<std::size_t>(per_row, 1)));
}

// Per-thread im2col buffer, reused across calls to avoid reallocating
// megabytes per convolution.
template <typename T>
std::vector<T>& scratch_cols() {
  static thread_local std::vector<T> cols;
  return cols;
}

template <typename T>
void im2col(const Tensor<T>& input, int k, int row0, int row1, std::vector<T>& cols) {
  const int c_in = input.channels(), h = input.height(), w = input.width();
  const int pad = (k - 1) / 2;
  const int n = (row1 - row0) * w;
  cols.assign(std::size_t(c_in) * k * k * n, T(0));
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.data() + std::size_t((c * k + ky) * k + kx) * n;
        for (int y = row0; y < row1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const T* src = input.data() + (std::size_t(c) * h + sy) * w;
          T* row = dst + std::size_t(y - row0) * w;
          const int x_lo = std::max(0, pad - kx), x_hi = std::min(w, w + pad - kx);
          for (int x = x_lo; x < x_hi; ++x) row[x] = src[x + kx - pad];
        }
      }
}

template <typename T>
void col2im_add(const T* cols, int k, int row0, int row1, Tensor<T>& grad_input) {
  const int c_in = grad_input.channels(), h = grad_input.height(), w = grad_input.width();
  const int pad = (k - 1) / 2;
  const int n = (row1 - row0) * w;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols + std::size_t((c * k + ky) * k + kx) * n;
        for (int y = row0; y < row1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          T* dst = grad_input.data() + (std::size_t(c) * h + sy) * w;
          const T* row = src + std::size_t(y - row0) * w;
          const int x_lo = std::max(0, pad - kx), x_hi = std::min(w, w + pad - kx);
          for (int x = x_lo; x < x_hi; ++x) dst[x + kx - pad] += row[x];
        }
      }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_chw(input.ndim(), "conv2d");
  if (weight.ndim() != 4) throw ShapeError("conv2d: weight must be out x in x k x k");
  const int k = weight.dim(2);
  if (weight.dim(3) != k) throw ConfigError("conv2d: kernel must be square");
  if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (weight.dim(1) != input.channels())
    throw ShapeError("conv2d: input has " + std::to_string(input.channels()) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  if (bias.ndim() != 1 || bias.dim(0) != weight.dim(0)) throw ShapeError("conv2d: bias length must equal out channels");
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_conv_shapes(input, weight, bias);
  const int c_out = weight.dim(0), k = weight.dim(2);
  const int h = input.height(), w = input.width();
  const int patch = input.channels() * k * k;
  Tensor<T> out({c_out, h, w});
  MapMat<T> out_mat(out.data(), c_out, std::size_t(h) * w);
  ConstMapMat<T> w_mat(weight.data(), c_out, patch);

  if (k == 1) {
    ConstMapMat<T> in_mat(input.data(), patch, std::size_t(h) * w);
    out_mat.noalias() = w_mat * in_mat;
  } else {
    std::vector<T>& cols = scratch_cols<T>();
    const int block = rows_per_block(w, patch);
    for (int r0 = 0; r0 < h; r0 += block) {
      const int r1 = std::min(h, r0 + block);
      im2col(input, k, r0, r1, cols);
      ConstMapMat<T> col_mat(cols.data(), patch, std::size_t(r1 - r0) * w);
      out_mat.middleCols(std::size_t(r0) * w, std::size_t(r1 - r0) * w).noalias() = w_mat * col_mat;
    }
  }
  for (int o = 0; o < c_out; ++o) out_mat.row(o).array() += bias[o];
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          Tensor<T>& grad_weight, Tensor<T>& grad_bias, bool need_input_grad) {
  check_conv_shapes(input, weight, grad_bias);
  require_same_shape(weight, grad_weight, "conv2d_backward");
  const int c_out = weight.dim(0), k = weight.dim(2);
  const int h = input.height(), w = input.width();
  const int patch = input.channels() * k * k;
  if (grad_out.shape() != std::vector<int>{c_out, h, w}) throw ShapeError("conv2d_backward: grad_out shape mismatch");

  ConstMapMat<T> g_mat(grad_out.data(), c_out, std::size_t(h) * w);
  ConstMapMat<T> w_mat(weight.data(), c_out, patch);
  MapMat<T> gw_mat(grad_weight.data(), c_out, patch);
  // Plain loop: Eigen's vectorized sum peels by address alignment, which
  // makes the rounding depend on where the buffer happened to be allocated.
  for (int o = 0; o < c_out; ++o) {
    const T* g = grad_out.data() + std::size_t(o) * h * w;
    T s = T(0);
    for (std::size_t i = 0; i < std::size_t(h) * w; ++i) s += g[i];
    grad_bias[o] += s;
  }

  Tensor<T> grad_in;
  if (need_input_grad) grad_in = Tensor<T>::zeros_like(input);

  if (k == 1) {
    ConstMapMat<T> in_mat(input.data(), patch, std::size_t(h) * w);
    gw_mat.noalias() += g_mat * in_mat.transpose();
    if (need_input_grad) {
      MapMat<T> gi_mat(grad_in.data(), patch, std::size_t(h) * w);
      gi_mat.noalias() = w_mat.transpose() * g_mat;
    }
    return grad_in;
  }

  std::vector<T>& cols = scratch_cols<T>();
  static thread_local std::vector<T> grad_cols;
  const int block = rows_per_block(w, patch);
  for (int r0 = 0; r0 < h; r0 += block) {
    const int r1 = std::min(h, r0 + block);
    const std::size_t n = std::size_t(r1 - r0) * w;
    im2col(input, k, r0, r1, cols);
    ConstMapMat<T> col_mat(cols.data(), patch, n);
    auto g_block = g_mat.middleCols(std::size_t(r0) * w, n);
    gw_mat.noalias() += g_block * col_mat.transpose();
    if (need_input_grad) {
      if (grad_cols.size() < std::size_t(patch) * n) grad_cols.resize(std::size_t(patch) * n);
      MapMat<T> gc_mat(grad_cols.data(), patch, n);
      gc_mat.noalias() = w_mat.transpose() * g_block;
      col2im_add(grad_cols.data(), k, r0, r1, grad_in);
    }
  }
  return grad_in;
}

int default_group_count(int channels) { return channels >= 32 ? 32 : channels; }

template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, int groups, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     GroupNormCache<T>* cache) {
  require_chw(input.ndim(), "group_norm");
  const int c = input.channels();
  if (groups <= 0 || c % groups != 0)
    throw ConfigError("group_norm: " + std::to_string(c) + " channels not divisible by " + std::to_string(groups) +
                      " groups");
  if (gamma.size() != std::size_t(c) || beta.size() != std::size_t(c))
    throw ShapeError("group_norm: gamma/beta length must equal channel count");
  const std::size_t hw = std::size_t(input.height()) * input.width();
  const int per_group = c / groups;
  const std::size_t n = hw * per_group;

  Tensor<T> out = Tensor<T>::zeros_like(input);
  Tensor<T> xhat = Tensor<T>::zeros_like(input);
  std::vector<T> inv_stds(groups);
  for (int g = 0; g < groups; ++g) {
    const T* x = input.data() + g * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += x[i];
    const double mean = sum / double(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i] - mean;
      sq += d * d;
    }
    const double var = sq / double(n);
    const double inv_std = 1.0 / std::sqrt(var + double(eps));
    inv_stds[g] = T(inv_std);
    T* xh = xhat.data() + g * n;
    T* y = out.data() + g * n;
    for (int cc = 0; cc < per_group; ++cc) {
      const int ch = g * per_group + cc;
      const T scale = gamma[ch], shift = beta[ch];
      for (std::size_t i = cc * hw; i < (cc + 1) * hw; ++i) {
        xh[i] = T((x[i] - mean) * inv_std);
        y[i] = scale * xh[i] + shift;
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_stds);
    cache->groups = groups;
  }
  return out;
}

template <typename T>
Tensor<T> group_norm_backward(const GroupNormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& grad_out,
                              Tensor<T>& grad_gamma, Tensor<T>& grad_beta) {
  const Tensor<T>& xhat = cache.normalized;
  require_same_shape(xhat, grad_out, "group_norm_backward");
  const int c = xhat.channels(), groups = cache.groups, per_group = c / groups;
  const std::size_t hw = std::size_t(xhat.height()) * xhat.width();
  const std::size_t n = hw * per_group;

  Tensor<T> grad_in = Tensor<T>::zeros_like(grad_out);
  std::vector<double> dxhat(n);
  for (int g = 0; g < groups; ++g) {
    const T* xh = xhat.data() + g * n;
    const T* go = grad_out.data() + g * n;
    double sum_d = 0.0, sum_dx = 0.0;
    for (int cc = 0; cc < per_group; ++cc) {
      const int ch = g * per_group + cc;
      double gg = 0.0, gb = 0.0;
      for (std::size_t i = cc * hw; i < (cc + 1) * hw; ++i) {
        gg += double(go[i]) * xh[i];
        gb += go[i];
        dxhat[i] = double(go[i]) * gamma[ch];
        sum_d += dxhat[i];
        sum_dx += dxhat[i] * xh[i];
      }
      grad_gamma[ch] += T(gg);
      grad_beta[ch] += T(gb);
    }
    const double inv_std = cache.inv_std[g];
    T* gi = grad_in.data() + g * n;
    const double inv_n = 1.0 / double(n);
    for (std::size_t i = 0; i < n; ++i)
      gi[i] = T(inv_std * (dxhat[i] - inv_n * sum_d - xh[i] * inv_n * sum_dx));
  }
  return grad_in;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  require_same_shape(output, grad_out, "relu_backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(output[i] > T(0))) g[i] = T(0);
  return g;
}

template <typename T>
T sigmoid(T x) {
  // Split by sign so exp never overflows.
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = sigmoid(v);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
  require_same_shape(acc, b, "add");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_chw(a.ndim(), "concat_channels");
  require_chw(b.ndim(), "concat_channels");
  if (a.height() != b.height() || a.width() != b.width())
    throw ShapeError("concat_channels: spatial size mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor<T> out({a.channels() + b.channels(), a.height(), a.width()});
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first_channels) {
  require_chw(x.ndim(), "split_channels");
  if (first_channels < 0 || first_channels > x.channels()) throw ShapeError("split_channels: bad split point");
  const std::size_t hw = std::size_t(x.height()) * x.width();
  Tensor<T> a({first_channels, x.height(), x.width()});
  Tensor<T> b({x.channels() - first_channels, x.height(), x.width()});
  std::copy(x.data(), x.data() + a.size(), a.data());
  std::copy(x.data() + first_channels * hw, x.data() + x.size(), b.data());
  return {std::move(a), std::move(b)};
}

namespace {

struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = double(in) / double(out);
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[i] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int out_h, int out_w) {
  require_chw(input.ndim(), "bilinear_upsample");
  if (out_h <= 0 || out_w <= 0) throw ConfigError("bilinear_upsample: output size must be positive");
  if (out_h < input.height() || out_w < input.width())
    throw ConfigError("bilinear_upsample: output must not be smaller than input");
  const auto ty = bilinear_taps(input.height(), out_h);
  const auto tx = bilinear_taps(input.width(), out_w);
  Tensor<T> out({input.channels(), out_h, out_w});
  for (int c = 0; c < input.channels(); ++c)
    for (int y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const double top = (1 - b.w1) * input.at(c, a.i0, b.i0) + b.w1 * input.at(c, a.i0, b.i1);
        const double bottom = (1 - b.w1) * input.at(c, a.i1, b.i0) + b.w1 * input.at(c, a.i1, b.i1);
        out.at(c, y, x) = T((1 - a.w1) * top + a.w1 * bottom);
      }
    }
  return out;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& grad_out, int in_h, int in_w) {
  require_chw(grad_out.ndim(), "bilinear_upsample_backward");
  const auto ty = bilinear_taps(in_h, grad_out.height());
  const auto tx = bilinear_taps(in_w, grad_out.width());
  Tensor<T> grad_in({grad_out.channels(), in_h, in_w});
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < grad_out.width(); ++x) {
        const auto& b = tx[x];
        const double g = grad_out.at(c, y, x);
        grad_in.at(c, a.i0, b.i0) += T(g * (1 - a.w1) * (1 - b.w1));
        grad_in.at(c, a.i0, b.i1) += T(g * (1 - a.w1) * b.w1);
        grad_in.at(c, a.i1, b.i0) += T(g * a.w1 * (1 - b.w1));
        grad_in.at(c, a.i1, b.i1) += T(g * a.w1 * b.w1);
      }
    }
  return grad_in;
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input) {
  require_chw(input.ndim(), "avg_pool2");
  if (input.height() % 2 || input.width() % 2) throw ShapeError("avg_pool2: spatial size must be even");
  const int h = input.height() / 2, w = input.width() / 2;
  Tensor<T> out({input.channels(), h, w});
  for (int c = 0; c < input.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = T(0.25) * (input.at(c, 2 * y, 2 * x) + input.at(c, 2 * y, 2 * x + 1) +
                                     input.at(c, 2 * y + 1, 2 * x) + input.at(c, 2 * y + 1, 2 * x + 1));
  return out;
}

template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& grad_out) {
  require_chw(grad_out.ndim(), "avg_pool2_backward");
  Tensor<T> grad_in({grad_out.channels(), grad_out.height() * 2, grad_out.width() * 2});
  for (int c = 0; c < grad_in.channels(); ++c)
    for (int y = 0; y < grad_in.height(); ++y)
      for (int x = 0; x < grad_in.width(); ++x) grad_in.at(c, y, x) = T(0.25) * grad_out.at(c, y / 2, x / 2);
  return grad_in;
}

template <typename T>
Tensor<T> pixelwise_inner_product(const Tensor<T>& a, const Tensor<T>& b) {
  require_chw(a.ndim(), "pixelwise_inner_product");
  require_same_shape(a, b, "pixelwise_inner_product");
  const std::size_t hw = std::size_t(a.height()) * a.width();
  Tensor<T> out({1, a.height(), a.width()});
  for (int c = 0; c < a.channels(); ++c) {
    const T* pa = a.data() + c * hw;
    const T* pb = b.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) out[i] += pa[i] * pb[i];
  }
  return out;
}

template <typename T>
void pixelwise_inner_product_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out,
                                      Tensor<T>& grad_a, Tensor<T>& grad_b) {
  require_same_shape(a, b, "pixelwise_inner_product_backward");
  const std::size_t hw = std::size_t(a.height()) * a.width();
  if (grad_out.size() != hw) throw ShapeError("pixelwise_inner_product_backward: grad_out must be 1 x h x w");
  if (grad_a.empty()) grad_a = Tensor<T>::zeros_like(a);
  if (grad_b.empty()) grad_b = Tensor<T>::zeros_like(b);
  for (int c = 0; c < a.channels(); ++c)
    for (std::size_t i = 0; i < hw; ++i) {
      grad_a[c * hw + i] += grad_out[i] * b[c * hw + i];
      grad_b[c * hw + i] += grad_out[i] * a[c * hw + i];
    }
}

template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, const AdamOptions& opts) {
  for (const Param<T>* p : params)
    if (!p->grad.all_finite()) throw UpdateError("non-finite gradient in parameter '" + p->name + "'");
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const Param<T>* p : params) {
      state.first_moment.push_back(Tensor<T>::zeros_like(p->value));
      state.second_moment.push_back(Tensor<T>::zeros_like(p->value));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opts.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(opts.beta2, double(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    Tensor<T>& m = state.first_moment[k];
    Tensor<T>& v = state.second_moment[k];
    require_same_shape(m, p.value, "adam_step");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
      const double vi = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
      m[i] = T(mi);
      v[i] = T(vi);
      const double m_hat = mi / bc1, v_hat = vi / bc2;
      p.value[i] = T(p.value[i] - opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps));
    }
  }
}

GradCheckResult finite_difference_check(const std::function<double(const Tensor<double>&)>& loss,
                                        const Tensor<double>& input, const Tensor<double>& analytic,
                                        double epsilon, std::size_t max_coords, unsigned long long seed,
                                        double noise_floor) {
  require_same_shape(input, analytic, "finite_difference_check");
  std::vector<std::size_t> coords(input.size());
  std::iota(coords.begin(), coords.end(), std::size_t(0));
  if (max_coords > 0 && max_coords < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }
  GradCheckResult result;
  Tensor<double> x = input;
  for (std::size_t i : coords) {
    const double orig = x[i];
    x[i] = orig + epsilon;
    const double up = loss(x);
    x[i] = orig - epsilon;
    const double down = loss(x);
    x[i] = orig;
    const double numeric = (up - down) / (2 * epsilon);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const bool unresolved = std::abs(a) <= noise_floor && std::abs(numeric) <= noise_floor;
    result.below_floor += unresolved;
    const double err = unresolved ? 0.0 : std::abs(a - numeric) / denom;
    if (result.checked == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
    ++result.checked;
  }
  return result;
}

#define OPLANES_INSTANTIATE(T)                                                                                     \
  template class Tensor<T>;                                                                                        \
  template void require_same_shape(const Tensor<T>&, const Tensor<T>&, const char*);                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&, \
                                     bool);                                                                        \
  template Tensor<T> group_norm(const Tensor<T>&, int, const Tensor<T>&, const Tensor<T>&, T, GroupNormCache<T>*); \
  template Tensor<T> group_norm_backward(const GroupNormCache<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,  \
                                         Tensor<T>&);                                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                                       \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                            \
  template T sigmoid(T);                                                                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                      \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                                                         \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                          \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);                                  \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int, int);                                                \
  template Tensor<T> bilinear_upsample_backward(const Tensor<T>&, int, int);                                       \
  template Tensor<T> avg_pool2(const Tensor<T>&);                                                                  \
  template Tensor<T> avg_pool2_backward(const Tensor<T>&);                                                         \
  template Tensor<T> pixelwise_inner_product(const Tensor<T>&, const Tensor<T>&);                                  \
  template void pixelwise_inner_product_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, \
                                                 Tensor<T>&);                                                      \
  template void adam_step(std::span<Param<T>* const>, AdamState<T>&, const AdamOptions&);

OPLANES_INSTANTIATE(float)
OPLANES_INSTANTIATE(double)

#undef OPLANES_INSTANTIATE

}  // namespace oplanes::nn
