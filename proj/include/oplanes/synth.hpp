#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oplanes/mesh.hpp"

namespace oplanes {

enum class ShapeFamily { sphere, capsule, box, stick_figure };
enum class VisibilityMode { none, crop, occluder };

ShapeFamily parse_shape_family(const std::string& s);
std::string to_string(ShapeFamily f);
VisibilityMode parse_visibility_mode(const std::string& s);
std::string to_string(VisibilityMode m);

struct SceneSpec {
  ShapeFamily family = ShapeFamily::sphere;
  // Characteristic size in meters: sphere radius, capsule half length, box
  // half extent, stick figure height / 2.6.
  double size_min = 0.28;
  double size_max = 0.42;
  // Depth of the shape's center.
  double depth_min = 1.5;
  double depth_max = 2.5;
  // Max offset of the projected center from the principal point, as a
  // fraction of the half image size (unused in crop mode).
  double lateral_jitter = 0.15;
  // Random rotation (radians) about each axis, uniform in [-r, r].
  double max_rotation = 0.6;
  int width = 128;
  int height = 128;
  double fov_degrees = 50.0;  // horizontal
  VisibilityMode visibility = VisibilityMode::none;
  // Local polygonization grid cells per characteristic size.
  int grid_cells = 20;

  void validate() const;
  CameraIntrinsics camera() const;
};

struct SceneSample {
  std::string name;
  ShapeFamily family = ShapeFamily::sphere;
  VisibilityMode mode = VisibilityMode::none;
  std::uint64_t seed = 0;
  RgbImage rgb;             // [0, 1]
  DepthMap depth;           // nearest surface, +inf on background
  Mask mask;                // target shape pixels
  CameraIntrinsics camera;
  TriangleMesh mesh;        // closed, camera coordinates
  FrustumRange train_range;  // z_max = furthest mesh depth
  double visibility = 1.0;
};

SceneSample generate_scene(const SceneSpec& spec, std::uint64_t seed);

// Files: rgb.png, depth.pfm, mask.pgm, camera.txt, mesh.obj, meta.txt.
void write_sample(const SceneSample& sample, const std::filesystem::path& dir);
SceneSample load_sample(const std::filesystem::path& dir);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string split;
  std::string family;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::filesystem::path sample_dir(std::size_t i) const { return root / entries.at(i).path; }
};

inline constexpr const char* kManifestName = "manifest.txt";

// n_per_spec samples for each spec; sample i draws its seed from stream i of
// `seed`. Every holdout_every-th sample (when > 0) is tagged "test".
Manifest write_dataset(const std::vector<SceneSpec>& specs, int n_per_spec, const std::filesystem::path& out_dir,
                       std::uint64_t seed, int holdout_every = 0);
// Accepts the manifest file or the directory holding it.
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace oplanes
