#include "oplanes/synth.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "oplanes/image_io.hpp"
#include "oplanes/marching_cubes.hpp"
#include "oplanes/metrics.hpp"
#include "oplanes/parallel.hpp"
#include "oplanes/random.hpp"
#include "oplanes/render.hpp"

namespace oplanes {

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "sphere") return ShapeFamily::sphere;
  if (s == "capsule") return ShapeFamily::capsule;
  if (s == "box") return ShapeFamily::box;
  if (s == "stick" || s == "stick_figure" || s == "figure") return ShapeFamily::stick_figure;
  throw ConfigError("unknown shape family '" + s + "' (sphere, capsule, box, stick)");
}

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::sphere: return "sphere";
    case ShapeFamily::capsule: return "capsule";
    case ShapeFamily::box: return "box";
    case ShapeFamily::stick_figure: return "stick";
  }
  return "?";
}

VisibilityMode parse_visibility_mode(const std::string& s) {
  if (s == "none") return VisibilityMode::none;
  if (s == "crop") return VisibilityMode::crop;
  if (s == "occluder") return VisibilityMode::occluder;
  throw ConfigError("unknown visibility mode '" + s + "' (none, crop, occluder)");
}

std::string to_string(VisibilityMode m) {
  switch (m) {
    case VisibilityMode::none: return "none";
    case VisibilityMode::crop: return "crop";
    case VisibilityMode::occluder: return "occluder";
  }
  return "?";
}

void SceneSpec::validate() const {
  if (!(size_min > 0.0 && size_min <= size_max)) throw ConfigError("scene size range must satisfy 0 < min <= max");
  if (!(depth_min > 0.0 && depth_min <= depth_max)) throw ConfigError("scene depth range must satisfy 0 < min <= max");
  if (depth_min <= 2.0 * size_max) throw ConfigError("shapes would reach behind the camera; move them further away");
  if (!(lateral_jitter >= 0.0 && lateral_jitter < 1.0)) throw ConfigError("lateral jitter must be in [0, 1)");
  if (!(max_rotation >= 0.0)) throw ConfigError("max rotation must be non-negative");
  if (width < 16 || height < 16) throw ConfigError("scene images must be at least 16 x 16");
  if (!(fov_degrees > 1.0 && fov_degrees < 170.0)) throw ConfigError("field of view must be in (1, 170) degrees");
  if (grid_cells < 4) throw ConfigError("grid_cells must be at least 4");
}

CameraIntrinsics SceneSpec::camera() const {
  CameraIntrinsics c;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_degrees * std::numbers::pi / 180.0);
  c.cx = 0.5 * (width - 1);
  c.cy = 0.5 * (height - 1);
  c.width = width;
  c.height = height;
  return c;
}

namespace {

// Signed distance primitives in the shape's local frame (+y down, like the
// camera).
struct Capsule {
  Vec3 a, b;
  double r;
  double sdf(const Vec3& p) const {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm() - r;
  }
};

struct Box {
  Vec3 half;
  double sdf(const Vec3& p) const {
    const Vec3 q = p.cwiseAbs() - half;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }
};

struct Shape {
  std::vector<Capsule> capsules;  // spheres are zero-length capsules
  std::vector<Box> boxes;
  double finest = 1.0;  // smallest feature radius

  double sdf(const Vec3& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : capsules) d = std::min(d, c.sdf(p));
    for (const auto& b : boxes) d = std::min(d, b.sdf(p));
    return d;
  }
  AABB bounds() const {
    AABB box{Vec3::Constant(std::numeric_limits<double>::infinity()),
             Vec3::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto& c : capsules) {
      box.min = box.min.cwiseMin(c.a.cwiseMin(c.b) - Vec3::Constant(c.r));
      box.max = box.max.cwiseMax(c.a.cwiseMax(c.b) + Vec3::Constant(c.r));
    }
    for (const auto& b : boxes) {
      box.min = box.min.cwiseMin(-b.half);
      box.max = box.max.cwiseMax(b.half);
    }
    return box;
  }
};

Shape make_shape(ShapeFamily family, double size, Rng& rng) {
  Shape s;
  switch (family) {
    case ShapeFamily::sphere:
      s.capsules.push_back({Vec3::Zero(), Vec3::Zero(), size});
      s.finest = size;
      break;
    case ShapeFamily::capsule: {
      const double r = size * uniform(rng, 0.35, 0.55);
      s.capsules.push_back({Vec3(0, -size, 0), Vec3(0, size, 0), r});
      s.finest = r;
      break;
    }
    case ShapeFamily::box: {
      const Vec3 half(size * uniform(rng, 0.5, 1.0), size * uniform(rng, 0.5, 1.0), size * uniform(rng, 0.5, 1.0));
      s.boxes.push_back({half});
      s.finest = half.minCoeff();
      break;
    }
    case ShapeFamily::stick_figure: {
      const double h = 2.6 * size;  // figure height, pelvis at the origin
      const double torso_r = 0.085 * h, limb_r = 0.05 * h, arm_r = 0.042 * h;
      s.capsules.push_back({Vec3(0, 0, 0), Vec3(0, -0.42 * h, 0), torso_r});
      s.capsules.push_back({Vec3(0, -0.58 * h, 0), Vec3(0, -0.58 * h, 0), 0.095 * h});
      for (int side : {-1, 1}) {
        const double leg = uniform(rng, 0.0, 0.35), fwd = uniform(rng, -0.3, 0.3);
        const Vec3 hip(side * 0.06 * h, 0.02 * h, 0);
        const Vec3 dir = Vec3(side * std::sin(leg), std::cos(leg), std::sin(fwd)).normalized();
        s.capsules.push_back({hip, hip + 0.46 * h * dir, limb_r});
        const double arm = uniform(rng, 0.2, 1.6), arm_fwd = uniform(rng, -0.5, 0.5);
        const Vec3 shoulder(side * 0.12 * h, -0.4 * h, 0);
        const Vec3 adir = Vec3(side * std::sin(arm), std::cos(arm), std::sin(arm_fwd)).normalized();
        s.capsules.push_back({shoulder, shoulder + 0.4 * h * adir, arm_r});
      }
      s.capsules.push_back({Vec3(-0.12 * h, -0.4 * h, 0), Vec3(0.12 * h, -0.4 * h, 0), arm_r});
      s.finest = arm_r;
      break;
    }
  }
  return s;
}

// Watertight polygonization of the shape's zero level set on a local grid.
TriangleMesh polygonize(const Shape& shape, double size, int cells_per_size, const Eigen::Matrix3d& rot,
                        const Vec3& center) {
  const double h = std::min(size / cells_per_size, shape.finest / 4.0);
  const AABB box = shape.bounds();
  const Vec3 lo = box.min - Vec3::Constant(2 * h);
  const Vec3 ext = box.max - box.min + Vec3::Constant(4 * h);
  const int nx = int(std::ceil(ext.x() / h)) + 1, ny = int(std::ceil(ext.y() / h)) + 1,
            nz = int(std::ceil(ext.z() / h)) + 1;
  std::vector<float> values(std::size_t(nx) * ny * nz);
  parallel_for(std::size_t(nz), [&](std::size_t k) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        values[(k * ny + j) * nx + i] = float(-shape.sdf(lo + h * Vec3(i, j, double(k))));
  });
  auto to_world = [&](double i, double j, double k) { return Vec3(rot * (lo + h * Vec3(i, j, k)) + center); };
  TriangleMesh mesh = marching_cubes_lattice(values, nx, ny, nz, 0.0, to_world, -1.0f);
  if (!is_closed(mesh)) throw ValidationError("polygonized scene mesh is not closed");
  return mesh;
}

Eigen::Matrix3d random_rotation(double max_angle, Rng& rng) {
  const double ax = uniform(rng, -max_angle, max_angle), ay = uniform(rng, -max_angle, max_angle),
               az = uniform(rng, -max_angle, max_angle);
  return (Eigen::AngleAxisd(ay, Vec3::UnitY()) * Eigen::AngleAxisd(ax, Vec3::UnitX()) *
          Eigen::AngleAxisd(az, Vec3::UnitZ()))
      .toRotationMatrix();
}

bool fully_in_view(const TriangleMesh& mesh, const CameraIntrinsics& cam, double margin_px) {
  for (const Vec3& v : mesh.vertices) {
    if (v.z() <= 0.05) return false;
    const Vec2 uv = project(cam, v);
    if (uv.x() < margin_px - 0.5 || uv.x() > cam.width - 0.5 - margin_px || uv.y() < margin_px - 0.5 ||
        uv.y() > cam.height - 0.5 - margin_px)
      return false;
  }
  return true;
}

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h * 6, 2.0) - 1)), m = v - c;
  const int sector = int(h * 6) % 6;
  static const int perm[6][3] = {{0, 1, 2}, {1, 0, 2}, {2, 0, 1}, {2, 1, 0}, {1, 2, 0}, {0, 2, 1}};
  const double vals[3] = {c, x, 0.0};
  return Vec3(vals[perm[sector][0]], vals[perm[sector][1]], vals[perm[sector][2]]) + Vec3::Constant(m);
}

}  // namespace

SceneSample generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, 0x7363656eULL);
  const CameraIntrinsics cam = spec.camera();
  SceneSample s;
  s.family = spec.family;
  s.mode = spec.visibility;
  s.seed = seed;
  s.camera = cam;

  constexpr int kMaxAttempts = 32;
  double size = 0.0;
  Vec3 center = Vec3::Zero();
  bool placed = false;
  for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
    size = uniform(rng, spec.size_min, spec.size_max);
    const Shape shape = make_shape(spec.family, size, rng);
    const Eigen::Matrix3d rot = random_rotation(spec.max_rotation, rng);
    const double zc = uniform(rng, spec.depth_min, spec.depth_max);
    double u, v;
    if (spec.visibility == VisibilityMode::crop) {
      // Center on the left or right image border: half the (centrally
      // symmetric) shape falls outside the frustum.
      u = uniform01(rng) < 0.5 ? -0.5 : cam.width - 0.5;
      v = cam.cy + uniform(rng, -0.1, 0.1) * cam.height;
    } else {
      u = cam.cx + uniform(rng, -1.0, 1.0) * spec.lateral_jitter * 0.5 * cam.width;
      v = cam.cy + uniform(rng, -1.0, 1.0) * spec.lateral_jitter * 0.5 * cam.height;
    }
    // The shape's bounding-box center lands on the chosen pixel.
    const Vec3 local_center = shape.bounds().center();
    center = unproject(cam, {u, v}, zc) - rot * local_center;
    TriangleMesh mesh = polygonize(shape, size, spec.grid_cells, rot, center);
    if (aabb(mesh).min.z() <= 0.1) continue;
    if (spec.visibility != VisibilityMode::crop && !fully_in_view(mesh, cam, 1.0)) continue;
    s.mesh = std::move(mesh);
    placed = true;
  }
  if (!placed) throw ConfigError("could not place a " + to_string(spec.family) + " inside the view after " +
                                 std::to_string(kMaxAttempts) + " attempts; reduce size or move it further away");

  TriangleMesh scene = s.mesh;
  const std::size_t target_faces = s.mesh.faces.size();
  if (spec.visibility == VisibilityMode::occluder) {
    // A thin upright slab between the camera and the shape, covering one side.
    const AABB box = aabb(s.mesh);
    const double side = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    const double zc = box.min.z() - uniform(rng, 0.15, 0.35);
    const double x0 = box.center().x() * zc / box.center().z() + side * uniform(rng, 0.0, 0.35) * box.extent().x();
    const double half_w = 0.25 * box.extent().x() * zc / box.center().z();
    const double half_h = 0.75 * box.extent().y() * zc / box.center().z();
    const double y0 = box.center().y() * zc / box.center().z();
    scene = merged(scene, make_box(Vec3(x0 - half_w, y0 - half_h, zc - 0.02), Vec3(x0 + half_w, y0 + half_h, zc + 0.02)));
  }

  const RenderResult r = raycast_render(scene, cam);
  s.depth = r.depth;
  s.mask = Mask(cam.width, cam.height, 1, 0);
  s.rgb = RgbImage(cam.width, cam.height, 3, 0.0f);
  const Vec3 albedo = hsv_to_rgb(uniform01(rng), uniform(rng, 0.35, 0.8), uniform(rng, 0.65, 0.95));
  const Vec3 occluder_albedo = Vec3::Constant(uniform(rng, 0.3, 0.5));
  const Vec3 light = Vec3(-0.4, -0.6, -1.0).normalized();
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const int f = r.face.at(x, y);
      Vec3 color;
      if (f < 0) {
        const double t = double(y) / (cam.height - 1);
        color = Vec3(0.62, 0.66, 0.7) * (1.0 - 0.25 * t);
      } else {
        const bool target = std::size_t(f) < target_faces;
        if (target) s.mask.at(x, y) = 1;
        const Vec3 n(r.normals.at(x, y, 0), r.normals.at(x, y, 1), r.normals.at(x, y, 2));
        const double shade = 0.3 + 0.7 * std::max(0.0, n.dot(light));
        color = (target ? albedo : occluder_albedo) * shade;
      }
      for (int c = 0; c < 3; ++c) s.rgb.at(x, y, c) = float(std::clamp(color[c], 0.0, 1.0));
    }
  if (std::none_of(s.mask.data.begin(), s.mask.data.end(), [](std::uint8_t m) { return m != 0; }))
    throw ConfigError("generated scene has an empty mask");

  double z_far = 0.0;
  for (const Vec3& v : s.mesh.vertices) z_far = std::max(z_far, v.z());
  s.train_range = compute_depth_range(s.depth, s.mask, z_far);
  s.visibility = visibility_level(InsideTester(s.mesh), cam, kMetricSamples, seed);
  s.name = to_string(spec.family);
  return s;
}

// ---------------------------------------------------------------------------
// Files.

namespace {

std::string fmt17(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::map<std::string, std::string> read_kv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value in " + path.string(), n);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void write_sample(const SceneSample& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_png(s.rgb, dir / "rgb.png");
  save_pfm(s.depth, dir / "depth.pfm");
  save_mask_pgm(s.mask, dir / "mask.pgm");
  save_camera(s.camera, dir / "camera.txt");
  save_mesh(s.mesh, dir / "mesh.obj");
  std::ofstream meta(dir / "meta.txt");
  if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
  meta << "name=" << s.name << "\nfamily=" << to_string(s.family) << "\nvisibility_mode=" << to_string(s.mode)
       << "\nseed=" << s.seed << "\nz_min=" << fmt17(s.train_range.z_min) << "\nz_max=" << fmt17(s.train_range.z_max)
       << "\nvisibility=" << fmt17(s.visibility) << "\n";
  if (!meta) throw IoError("failed writing " + (dir / "meta.txt").string());
}

SceneSample load_sample(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("sample directory not found: " + dir.string());
  SceneSample s;
  s.rgb = load_png(dir / "rgb.png");
  s.depth = load_depth(dir / "depth.pfm");
  s.mask = load_mask_pgm(dir / "mask.pgm");
  s.camera = load_camera(dir / "camera.txt");
  s.mesh = load_mesh(dir / "mesh.obj");
  require_same_size(s.rgb, s.depth, "sample rgb/depth");
  require_same_size(s.mask, s.depth, "sample mask/depth");
  if (s.camera.width != s.depth.width || s.camera.height != s.depth.height)
    throw ValidationError("camera size disagrees with images in " + dir.string());
  const auto kv = read_kv(dir / "meta.txt");
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(std::string("meta.txt lacks ") + key + " in " + dir.string());
    return it->second;
  };
  try {
    s.name = get("name");
    s.family = parse_shape_family(get("family"));
    s.mode = parse_visibility_mode(get("visibility_mode"));
    s.seed = std::stoull(get("seed"));
    s.train_range = {std::stod(get("z_min")), std::stod(get("z_max"))};
    s.visibility = std::stod(get("visibility"));
  } catch (const std::invalid_argument&) {
    throw ParseError("malformed number in " + (dir / "meta.txt").string());
  }
  return s;
}

Manifest write_dataset(const std::vector<SceneSpec>& specs, int n_per_spec, const std::filesystem::path& out_dir,
                       std::uint64_t seed, int holdout_every) {
  if (specs.empty() || n_per_spec < 1) throw ConfigError("dataset needs at least one spec and one sample per spec");
  for (const auto& sp : specs) sp.validate();
  std::filesystem::create_directories(out_dir);
  Manifest m;
  m.root = out_dir;
  const std::size_t total = specs.size() * std::size_t(n_per_spec);
  m.entries.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const SceneSpec& sp = specs[i / n_per_spec];
    char name[64];
    std::snprintf(name, sizeof name, "%04zu_%s", i, to_string(sp.family).c_str());
    const bool test = holdout_every > 0 && (i + 1) % std::size_t(holdout_every) == 0;
    m.entries[i] = {name, test ? "test" : "train", to_string(sp.family)};
  }
  // One RNG stream per sample keeps the output independent of scheduling.
  parallel_for(total, [&](std::size_t i) {
    Rng stream = make_rng(seed, i);
    SceneSample s = generate_scene(specs[i / n_per_spec], stream());
    s.name = m.entries[i].path;
    write_sample(s, out_dir / m.entries[i].path);
  });
  std::ofstream out(out_dir / kManifestName);
  if (!out) throw IoError("cannot write " + (out_dir / kManifestName).string());
  out << "# path split family\n";
  for (const auto& e : m.entries) out << e.path << ' ' << e.split << ' ' << e.family << '\n';
  if (!out) throw IoError("failed writing manifest in " + out_dir.string());
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  const std::filesystem::path file = std::filesystem::is_directory(path) ? path / kManifestName : path;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.path >> e.split)) throw ParseError("manifest line needs a path and a split tag", n);
    ls >> e.family;
    m.entries.push_back(e);
  }
  if (m.entries.empty()) throw DataError("manifest lists no samples: " + file.string());
  return m;
}

}  // namespace oplanes
