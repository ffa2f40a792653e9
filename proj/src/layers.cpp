#include "oplanes/layers.hpp"

#include <cmath>

namespace oplanes::nn {

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
    : weight(name + ".weight", Tensor<T>({out_channels, in_channels, kernel, kernel})),
      bias(name + ".bias", Tensor<T>({out_channels})) {
  if (kernel % 2 == 0) throw ConfigError("conv kernel size must be odd: " + name);
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
  const int fan_in = in_channels() * kernel() * kernel();
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : weight.value.values()) v = T(dist(rng));
  bias.value.fill(T(0));
}

template <typename T>
GroupNorm<T>::GroupNorm(const std::string& name, int channels)
    : gamma(name + ".gamma", Tensor<T>({channels}, T(1))),
      beta(name + ".beta", Tensor<T>({channels}, T(0))),
      groups(default_group_count(channels)) {}

template <typename T>
ConvBlock<T>::ConvBlock(const std::string& name, int in_channels, int out_channels, int kernel, bool norm_on,
                        bool relu_on)
    : conv(name + ".conv", in_channels, out_channels, kernel), use_norm(norm_on), use_relu(relu_on) {
  if (use_norm) norm = GroupNorm<T>(name + ".norm", out_channels);
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, Cache* cache) const {
  Tensor<T> y = conv.forward(x);
  if (use_norm) y = norm.forward(y, cache ? &cache->norm : nullptr);
  if (use_relu) y = relu(y);
  if (cache) {
    cache->input = x;
    cache->output = y;
  }
  return y;
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const Cache& cache, const Tensor<T>& grad_out, bool need_input_grad) {
  Tensor<T> g = use_relu ? relu_backward(cache.output, grad_out) : grad_out;
  if (use_norm) g = norm.backward(cache.norm, g);
  return conv.backward(cache.input, g, need_input_grad);
}

template <typename T>
void ConvBlock<T>::collect(std::vector<Param<T>*>& out) {
  conv.collect(out);
  if (use_norm) norm.collect(out);
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct GroupNorm<float>;
template struct GroupNorm<double>;
template struct ConvBlock<float>;
template struct ConvBlock<double>;

}  // namespace oplanes::nn
