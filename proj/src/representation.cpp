#include "oplanes/representation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oplanes/parallel.hpp"

namespace oplanes {

std::vector<double> OPlaneStack::depths() const {
  std::vector<double> z;
  z.reserve(planes.size());
  for (const OPlane& p : planes) z.push_back(p.z);
  return z;
}

void OPlaneStack::validate() const {
  for (std::size_t i = 0; i < planes.size(); ++i) {
    if (!planes[i].values.same_size(camera.width, camera.height))
      throw ShapeError("OPlane " + std::to_string(i) + " resolution differs from the stack camera");
    if (i > 0 && !(planes[i].z > planes[i - 1].z)) throw ValidationError("OPlane depths must be strictly increasing");
  }
}

CameraIntrinsics camera_at_resolution(const CameraIntrinsics& full, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0 || full.width % out_w || full.height % out_h)
    throw ConfigError("plane resolution must divide the image resolution by an integer factor");
  const int fx = full.width / out_w, fy = full.height / out_h;
  if (fx != fy) throw ConfigError("plane resolution must use the same factor on both axes");
  return full.downscaled(fx);
}

OccupancyRaster::OccupancyRaster(const InsideTester& tester, const CameraIntrinsics& camera) : camera_(camera) {
  camera_.validate();
  const std::size_t n_pix = std::size_t(camera.width) * camera.height;
  std::vector<std::vector<Crossing>> per_row(camera.height);
  std::vector<std::uint32_t> counts(n_pix, 0);
  const TriangleMesh& mesh = tester.mesh();
  parallel_for(camera.height, [&](std::size_t row) {
    std::vector<std::pair<double, int>> hits;
    auto& out = per_row[row];
    for (int u = 0; u < camera.width; ++u) {
      const Vec3 dir = unproject(camera, {double(u), double(row)}, 1.0);
      hits.clear();
      tester.bvh().for_each_hit(Vec3::Zero(), dir, 0.0, [&](const RayHit& h) {
        hits.emplace_back(h.t, mesh.face_normal(h.face).dot(dir) > 0 ? 1 : -1);
      });
      std::sort(hits.begin(), hits.end());
      int beyond = 0;
      std::vector<Crossing> px(hits.size());
      for (std::size_t i = hits.size(); i-- > 0;) {
        beyond += hits[i].second;
        px[i] = {float(hits[i].first), beyond};
      }
      counts[row * camera.width + u] = std::uint32_t(px.size());
      out.insert(out.end(), px.begin(), px.end());
    }
  });
  offsets_.resize(n_pix + 1, 0);
  for (std::size_t i = 0; i < n_pix; ++i) offsets_[i + 1] = offsets_[i] + counts[i];
  crossings_.reserve(offsets_.back());
  for (auto& row : per_row) crossings_.insert(crossings_.end(), row.begin(), row.end());
}

bool OccupancyRaster::occupied(int u, int v, double z) const {
  const std::size_t pix = std::size_t(v) * camera_.width + u;
  const Crossing* first = crossings_.data() + offsets_[pix];
  const Crossing* last = crossings_.data() + offsets_[pix + 1];
  const Crossing* it = std::lower_bound(first, last, z, [](const Crossing& c, double d) { return double(c.depth) < d; });
  return it != last && it->winding_beyond >= 1;
}

OPlane OccupancyRaster::plane(double z) const {
  OPlane p{z, Image<float>(camera_.width, camera_.height)};
  for (int v = 0; v < camera_.height; ++v)
    for (int u = 0; u < camera_.width; ++u) p.values.at(u, v) = occupied(u, v, z) ? 1.0f : 0.0f;
  return p;
}

OPlaneStack OccupancyRaster::stack(const std::vector<double>& depths, const FrustumRange& range) const {
  OPlaneStack s;
  s.camera = camera_;
  s.range = range;
  s.binary = true;
  s.planes.reserve(depths.size());
  for (double z : depths) s.planes.push_back(plane(z));
  return s;
}

OPlane gt_oplane(const TriangleMesh& mesh, const CameraIntrinsics& cam, double z, int out_w, int out_h) {
  if (!(z > 0)) throw DomainError("gt_oplane: plane depth must be positive");
  const InsideTester tester(mesh);
  return OccupancyRaster(tester, camera_at_resolution(cam, out_w, out_h)).plane(z);
}

std::vector<double> sample_train_depths(const FrustumRange& range, int n, Rng& rng) {
  if (n < 1) throw ConfigError("sample_train_depths: need at least one plane");
  std::vector<double> z(n);
  for (double& d : z) d = uniform(rng, range.z_min, range.z_max);
  std::sort(z.begin(), z.end());
  return z;
}

std::vector<double> uniform_inference_depths(const FrustumRange& range, int n) {
  if (n < 2) throw ConfigError("uniform_inference_depths: need at least two planes");
  range.validate();
  std::vector<double> z(n);
  const double step = range.extent() / (n - 1);
  for (int i = 0; i < n; ++i) z[i] = range.z_min + step * i;
  z.back() = range.z_max;
  return z;
}

namespace {

const std::array<double, kPeChannels / 2>& pe_frequencies() {
  static const auto freq = [] {
    std::array<double, kPeChannels / 2> f{};
    for (int t = 0; t < kPeChannels / 2; ++t) f[t] = 50.0 / std::pow(200.0, 2.0 * t / 64.0);
    return f;
  }();
  return freq;
}

}  // namespace

std::array<double, kPeChannels> positional_encode(double pos) {
  std::array<double, kPeChannels> pe{};
  const auto& freq = pe_frequencies();
  for (int t = 0; t < kPeChannels / 2; ++t) {
    const double angle = freq[t] * pos;
    pe[2 * t] = std::sin(angle);
    pe[2 * t + 1] = std::cos(angle);
  }
  return pe;
}

namespace {

template <typename P>
Image<P> nearest_downsample(const Image<P>& img, int out_w, int out_h, const char* what) {
  if (out_w <= 0 || out_h <= 0 || img.width % out_w || img.height % out_h)
    throw ConfigError(std::string(what) + ": downscale factor must be an integer");
  const int fx = img.width / out_w, fy = img.height / out_h;
  Image<P> out(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x * fx, y * fy, c);
  return out;
}

}  // namespace

DepthMap downsample_depth(const DepthMap& depth, int out_w, int out_h) {
  return nearest_downsample(depth, out_w, out_h, "downsample_depth");
}

Mask downsample_binary(const Mask& mask, int out_w, int out_h) {
  return nearest_downsample(mask, out_w, out_h, "downsample_binary");
}

Image<float> downsample_binary(const Image<float>& img, int out_w, int out_h) {
  return nearest_downsample(img, out_w, out_h, "downsample_binary");
}

template <typename T>
nn::Tensor<T> depth_diff_image(const DepthMap& depth, double z, double missing_depth) {
  const int h = depth.height, w = depth.width;
  nn::Tensor<T> out({kPeChannels, h, w});
  const std::size_t hw = std::size_t(h) * w;
  for (std::size_t i = 0; i < hw; ++i) {
    const double d = std::isfinite(depth.data[i]) ? double(depth.data[i]) : missing_depth;
    const auto pe = positional_encode(z - d);
    for (int c = 0; c < kPeChannels; ++c) out[c * hw + i] = T(pe[c]);
  }
  return out;
}

template <typename T>
nn::Tensor<T> depth_diff_image(const DepthMap& depth, double z, int out_h, int out_w, double missing_depth) {
  return depth_diff_image<T>(downsample_depth(depth, out_w, out_h), z, missing_depth);
}

DepthEncoding::DepthEncoding(const DepthMap& depth, double missing_depth) : h_(depth.height), w_(depth.width) {
  const std::size_t hw = std::size_t(h_) * w_;
  const auto& freq = pe_frequencies();
  sin_.resize(hw * freq.size());
  cos_.resize(hw * freq.size());
  for (std::size_t i = 0; i < hw; ++i) {
    const double d = std::isfinite(depth.data[i]) ? double(depth.data[i]) : missing_depth;
    for (std::size_t t = 0; t < freq.size(); ++t) {
      sin_[t * hw + i] = std::sin(freq[t] * d);
      cos_[t * hw + i] = std::cos(freq[t] * d);
    }
  }
}

template <typename T>
nn::Tensor<T> DepthEncoding::at(double z) const {
  const std::size_t hw = std::size_t(h_) * w_;
  const auto& freq = pe_frequencies();
  nn::Tensor<T> out({kPeChannels, h_, w_});
  T* o = out.data();
  for (std::size_t t = 0; t < freq.size(); ++t) {
    // sin(a - b) and cos(a - b) with a = freq z, b = freq d.
    const double sa = std::sin(freq[t] * z), ca = std::cos(freq[t] * z);
    const double* sb = sin_.data() + t * hw;
    const double* cb = cos_.data() + t * hw;
    T* os = o + 2 * t * hw;
    T* oc = os + hw;
    for (std::size_t i = 0; i < hw; ++i) {
      os[i] = T(sa * cb[i] - ca * sb[i]);
      oc[i] = T(ca * cb[i] + sa * sb[i]);
    }
  }
  return out;
}

template nn::Tensor<float> DepthEncoding::at<float>(double) const;
template nn::Tensor<double> DepthEncoding::at<double>(double) const;

template nn::Tensor<float> depth_diff_image<float>(const DepthMap&, double, double);
template nn::Tensor<double> depth_diff_image<double>(const DepthMap&, double, double);
template nn::Tensor<float> depth_diff_image<float>(const DepthMap&, double, int, int, double);
template nn::Tensor<double> depth_diff_image<double>(const DepthMap&, double, int, int, double);

Mask mask_boundary(const Mask& mask) {
  Mask b(mask.width, mask.height, 1, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1 || !mask.at(x - 1, y) ||
                        !mask.at(x + 1, y) || !mask.at(x, y - 1) || !mask.at(x, y + 1);
      b.at(x, y) = edge ? 1 : 0;
    }
  return b;
}

namespace {

// Squared distance transform of a sampled 1-D function: lower envelope of
// the parabolas rooted at each sample.
void distance_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = int(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  auto intersect = [&](int q, int r) { return ((f[q] + double(q) * q) - (f[r] + double(r) * r)) / (2.0 * (q - r)); };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  d.assign(n, 0.0);
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double diff = q - v[k];
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

Image<float> boundary_distance(const Mask& mask) {
  const Mask boundary = mask_boundary(mask);
  const int w = mask.width, h = mask.height;
  Image<float> out(w, h, 1, 0.0f);
  if (std::none_of(boundary.data.begin(), boundary.data.end(), [](std::uint8_t b) { return b != 0; })) return out;
  // Large finite stand-in for "no boundary here" keeps the envelope arithmetic finite.
  const double far = 1e20;
  std::vector<double> grid(std::size_t(w) * h);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = boundary.data[i] ? 0.0 : far;
  std::vector<double> f, d;
  for (int x = 0; x < w; ++x) {
    f.resize(h);
    for (int y = 0; y < h; ++y) f[y] = grid[std::size_t(y) * w + x];
    distance_1d(f, d);
    for (int y = 0; y < h; ++y) grid[std::size_t(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    f.assign(grid.begin() + std::size_t(y) * w, grid.begin() + std::size_t(y + 1) * w);
    distance_1d(f, d);
    for (int x = 0; x < w; ++x) out.at(x, y) = float(std::sqrt(d[x]));
  }
  return out;
}

Image<float> farid_edges(const RgbImage& rgb) {
  if (rgb.channels != 3) throw ShapeError("farid_edges expects an RGB image");
  const int w = rgb.width, h = rgb.height;
  std::vector<double> gray(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      gray[std::size_t(y) * w + x] = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2);
  auto px = [&](const std::vector<double>& img, int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return img[std::size_t(y) * w + x];
  };
  // Horizontal pass with the derivative and interpolation taps.
  std::vector<double> dx_h(gray.size()), p_h(gray.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sd = 0, sp = 0;
      for (int k = 0; k < 5; ++k) {
        const double v = px(gray, x + k - 2, y);
        sd += kFaridDeriv[k] * v;
        sp += kFaridInterp[k] * v;
      }
      dx_h[std::size_t(y) * w + x] = sd;
      p_h[std::size_t(y) * w + x] = sp;
    }
  Image<float> mag(w, h, 1, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double gx = 0, gy = 0;
      for (int k = 0; k < 5; ++k) {
        gx += kFaridInterp[k] * px(dx_h, x, y + k - 2);
        gy += kFaridDeriv[k] * px(p_h, x, y + k - 2);
      }
      mag.at(x, y) = float(std::sqrt(gx * gx + gy * gy));
    }
  return mag;
}

nn::Tensor<float> augment_rgb(const RgbImage& rgb, const Mask& mask) {
  require_same_size(rgb, mask, "augment_rgb");
  if (rgb.channels != 3) throw ShapeError("augment_rgb expects an RGB image");
  const int w = rgb.width, h = rgb.height;
  nn::Tensor<float> out({5, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = rgb.at(x, y, c);
  const Image<float> dist = boundary_distance(mask);
  const double diag = std::hypot(double(w), double(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(3, y, x) = float(dist.at(x, y) / diag);
  const Image<float> edges = farid_edges(rgb);
  const float peak = *std::max_element(edges.data.begin(), edges.data.end());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(4, y, x) = peak > 0 ? edges.at(x, y) / peak : 0.0f;
  return out;
}

}  // namespace oplanes
