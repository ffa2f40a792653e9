#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oplanes/inside.hpp"

namespace oplanes {

inline constexpr std::size_t kMetricSamples = 100000;

struct MetricReport {
  std::string name;
  double iou = 0.0;
  double chamfer_l1 = 0.0;
  double normal_consistency = 0.0;
  std::size_t volume_samples = 0;
  std::size_t surface_samples = 0;
  std::uint64_t seed = 0;
  std::optional<double> visibility;
};

// Frustum-sampled IoU: n volume-uniform points between range.z_min and
// range.z_max; |inside both| / |inside either|, 0 when the union is empty.
double volumetric_iou(const InsideTester& pred, const InsideTester& gt, const CameraIntrinsics& cam,
                      const FrustumRange& range, std::size_t n = kMetricSamples, std::uint64_t seed = 0);
double volumetric_iou(const TriangleMesh& pred, const TriangleMesh& gt, const CameraIntrinsics& cam,
                      const FrustumRange& range, std::size_t n = kMetricSamples, std::uint64_t seed = 0);

// 0.5 * (mean pred->gt + mean gt->pred nearest distance), in units of one
// tenth of the longest edge of gt's bounding box.
double chamfer_l1(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n = kMetricSamples,
                  std::uint64_t seed = 0);

// Mean |n_a . n_b| between each sample and its nearest sample on the other
// mesh, averaged over both directions.
double normal_consistency(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n = kMetricSamples,
                          std::uint64_t seed = 0);

// Chamfer and normal consistency share samples and nearest-neighbour work.
struct SurfaceMetrics {
  double chamfer_l1 = 0.0;
  double normal_consistency = 0.0;
};
SurfaceMetrics surface_metrics(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n = kMetricSamples,
                               std::uint64_t seed = 0);

MetricReport evaluate(const TriangleMesh& pred, const TriangleMesh& gt, const CameraIntrinsics& cam,
                      const FrustumRange& range, std::uint64_t seed = 0, std::size_t n = kMetricSamples);

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  TriangleMesh apply(const TriangleMesh& mesh) const;
  double rotation_angle() const;  // radians
};

struct IcpResult {
  RigidTransform transform;  // maps src onto dst
  double mse = 0.0;          // mean squared match distance of the returned transform
  int iterations = 0;
  bool converged = false;
};

// Point-to-point ICP. Source points are the source vertices; targets are the
// destination vertices plus surface samples. Each iteration matches nearest
// targets and solves the rigid update in closed form (SVD). Stops when the
// relative change of the mean squared error drops below tol.
IcpResult icp_register(const TriangleMesh& src, const TriangleMesh& dst, int max_iters = 50, double tol = 1e-6,
                       std::uint64_t seed = 0);

// Closed-form least-squares rigid transform mapping a[i] onto b[i].
// Throws RegistrationError for (near) collinear input.
RigidTransform kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Fraction of volume-uniform samples of the mesh (AABB rejection sampling)
// whose projection lies inside the image rectangle with z > 0. Occlusion by
// other geometry is not modelled.
double visibility_level(const InsideTester& mesh, const CameraIntrinsics& cam, std::size_t n = kMetricSamples,
                        std::uint64_t seed = 0);
double visibility_level(const TriangleMesh& mesh, const CameraIntrinsics& cam, std::size_t n = kMetricSamples,
                        std::uint64_t seed = 0);

struct VisibilityBin {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;  // exclusive; the last bin holds exactly 1.0
  std::size_t count = 0;
  double iou = 0.0;
  double chamfer_l1 = 0.0;
  double normal_consistency = 0.0;
};

// Rows [0, e0), [e0, e1), [e1, 1) and exactly 1 (fully visible); empty bins
// keep count 0 and zero means.
std::vector<VisibilityBin> visibility_binning(const std::vector<double>& levels,
                                              const std::vector<MetricReport>& reports,
                                              std::pair<double, double> edges = {1.0 / 3.0, 2.0 / 3.0});

// CSV with one row per report plus a "mean" row.
void write_report_csv(std::ostream& out, const std::vector<MetricReport>& reports);
std::string format_report_table(const std::vector<MetricReport>& reports);
void write_binning_csv(std::ostream& out, const std::vector<VisibilityBin>& bins);
std::string format_binning_table(const std::vector<VisibilityBin>& bins);

}  // namespace oplanes
