#pragma once

#include <cmath>
#include <random>

#include "oplanes/camera.hpp"
#include "oplanes/mesh.hpp"
#include "oplanes/tensor.hpp"

namespace oplanes::fixtures {

template <typename T>
nn::Tensor<T> random_tensor(std::vector<int> shape, std::uint64_t seed, double scale = 1.0) {
  nn::Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.values()) v = T(u(rng));
  return t;
}

// Sum of weights * out, the usual scalar probe for backward passes.
inline double dot(const nn::Tensord& a, const nn::Tensord& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline CameraIntrinsics square_camera(int size, double fov_degrees = 50.0) {
  CameraIntrinsics c;
  c.width = c.height = size;
  c.fx = c.fy = 0.5 * size / std::tan(0.5 * fov_degrees * M_PI / 180.0);
  c.cx = c.cy = 0.5 * (size - 1);
  return c;
}

// Analytic sphere occupancy, the reference for representation round trips.
struct Sphere {
  Vec3 center{0.0, 0.0, 2.0};
  double radius = 0.3;
  bool inside(const Vec3& p) const { return (p - center).squaredNorm() <= radius * radius; }
};

}  // namespace oplanes::fixtures
