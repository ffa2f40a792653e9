#pragma once

#include <random>
#include <string>
#include <vector>

#include "oplanes/tensor.hpp"

namespace oplanes::nn {

// Convolution layer with its own parameters. Kaiming-uniform (fan-in)
// weights, zero bias.
template <typename T>
struct Conv2d {
  Param<T> weight;
  Param<T> bias;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel);

  int in_channels() const { return weight.value.dim(1); }
  int out_channels() const { return weight.value.dim(0); }
  int kernel() const { return weight.value.dim(2); }

  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight.value, bias.value); }
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out, bool need_input_grad = true) {
    return conv2d_backward(x, weight.value, grad_out, weight.grad, bias.grad, need_input_grad);
  }
  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename T>
struct GroupNorm {
  Param<T> gamma;
  Param<T> beta;
  int groups = 1;
  T eps = T(1e-5);

  GroupNorm() = default;
  GroupNorm(const std::string& name, int channels);

  Tensor<T> forward(const Tensor<T>& x, GroupNormCache<T>* cache) const {
    return group_norm(x, groups, gamma.value, beta.value, eps, cache);
  }
  Tensor<T> backward(const GroupNormCache<T>& cache, const Tensor<T>& grad_out) {
    return group_norm_backward(cache, gamma.value, grad_out, gamma.grad, beta.grad);
  }
  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// conv -> group norm -> relu, the unit every head is built from. `norm` and
// `activate` switch the trailing stages off.
template <typename T>
struct ConvBlock {
  Conv2d<T> conv;
  GroupNorm<T> norm;
  bool use_norm = true;
  bool use_relu = true;

  struct Cache {
    Tensor<T> input;
    GroupNormCache<T> norm;
    Tensor<T> output;
  };

  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_channels, int out_channels, int kernel, bool norm_on, bool relu_on);

  void init(std::mt19937_64& rng) { conv.init(rng); }
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out, bool need_input_grad = true);
  void collect(std::vector<Param<T>*>& out);
};

}  // namespace oplanes::nn
