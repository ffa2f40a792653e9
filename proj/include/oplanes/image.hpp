#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oplanes/errors.hpp"

namespace oplanes {

// Row-major interleaved image; (x, y) = (column, row).
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{}) : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

  T& at(int x, int y, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
  const T& at(int x, int y, int c = 0) const { return data[(std::size_t(y) * width + x) * channels + c]; }
  std::size_t pixels() const { return std::size_t(width) * height; }
  bool same_size(int w, int h) const { return width == w && height == h; }
  bool operator==(const Image&) const = default;
};

// Metric depth along the optical axis; +inf where nothing was hit.
using DepthMap = Image<float>;
// 0 background, 1 foreground.
using Mask = Image<std::uint8_t>;
// Three channels in [0, 1].
using RgbImage = Image<float>;

template <typename A, typename B>
void require_same_size(const Image<A>& a, const Image<B>& b, const std::string& what) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError(what + ": resolution mismatch " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

}  // namespace oplanes
