#include "oplanes/camera.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "oplanes/random.hpp"

namespace oplanes {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw ConfigError("camera principal point must lie inside the image");
}

CameraIntrinsics CameraIntrinsics::downscaled(int factor) const {
  if (factor <= 0 || width % factor || height % factor)
    throw ConfigError("camera downscale factor must divide the image size");
  return {fx / factor, fy / factor, cx / factor, cy / factor, width / factor, height / factor};
}

void FrustumRange::validate() const {
  if (!(z_min > 0) || !(z_max > z_min)) throw ConfigError("frustum range requires 0 < z_min < z_max");
}

Vec2 project(const CameraIntrinsics& cam, const Vec3& p) {
  if (!(p.z() > 0)) throw DomainError("project: point is behind the camera");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Vec3 unproject(const CameraIntrinsics& cam, const Vec2& pixel, double z) {
  if (!(z > 0)) throw DomainError("unproject: depth must be positive");
  return {(pixel.x() - cam.cx) * z / cam.fx, (pixel.y() - cam.cy) * z / cam.fy, z};
}

FrustumRange compute_depth_range(const DepthMap& depth, const Mask& mask, std::optional<double> gt_max_depth,
                                 double inference_range) {
  require_same_size(depth, mask, "compute_depth_range");
  double z_min = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (!mask.data[i]) continue;
    const double d = depth.data[i];
    if (!std::isfinite(d)) throw DataError("compute_depth_range: non-finite depth inside the mask");
    any = true;
    z_min = std::min(z_min, d);
  }
  if (!any) throw EmptyTargetError("compute_depth_range: mask has no foreground pixels");
  FrustumRange range{z_min, gt_max_depth ? *gt_max_depth : z_min + inference_range};
  range.validate();
  return range;
}

std::vector<Vec3> frustum_sample_points(const CameraIntrinsics& cam, const FrustumRange& range, std::size_t n,
                                        std::uint64_t seed) {
  range.validate();
  Rng rng = make_rng(seed);
  const double a = std::pow(range.z_min, 3), b = std::pow(range.z_max, 3);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform(rng, -0.5, cam.width - 0.5);
    const double v = uniform(rng, -0.5, cam.height - 0.5);
    double z = std::cbrt(a + (b - a) * uniform01(rng));
    z = std::clamp(z, range.z_min, range.z_max);
    pts.push_back(unproject(cam, {u, v}, z));
  }
  return pts;
}

CameraIntrinsics load_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open camera file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("camera file " + path.string() + ": expected key=value", line_no);
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> double {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("camera file " + path.string() + ": missing key '" + key + "'");
    return std::stod(it->second);
  };
  CameraIntrinsics cam{get("fx"), get("fy"), get("cx"), get("cy"), int(get("width")), int(get("height"))};
  cam.validate();
  return cam;
}

void save_camera(const CameraIntrinsics& cam, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write camera file " + path.string());
  out << std::setprecision(17);
  out << "fx=" << cam.fx << "\nfy=" << cam.fy << "\ncx=" << cam.cx << "\ncy=" << cam.cy << "\nwidth=" << cam.width
      << "\nheight=" << cam.height << "\n";
}

}  // namespace oplanes
