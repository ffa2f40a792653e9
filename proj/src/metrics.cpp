#include "oplanes/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "oplanes/parallel.hpp"
#include "oplanes/random.hpp"
#include "oplanes/spatial_index.hpp"

namespace oplanes {

double volumetric_iou(const InsideTester& pred, const InsideTester& gt, const CameraIntrinsics& cam,
                      const FrustumRange& range, std::size_t n, std::uint64_t seed) {
  const auto pts = frustum_sample_points(cam, range, n, seed);
  std::vector<std::uint8_t> flags(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    flags[i] = std::uint8_t((pred.inside(pts[i]) ? 1 : 0) | (gt.inside(pts[i]) ? 2 : 0));
  });
  std::size_t both = 0, either = 0;
  for (auto f : flags) {
    both += f == 3;
    either += f != 0;
  }
  return either ? double(both) / double(either) : 0.0;
}

double volumetric_iou(const TriangleMesh& pred, const TriangleMesh& gt, const CameraIntrinsics& cam,
                      const FrustumRange& range, std::size_t n, std::uint64_t seed) {
  return volumetric_iou(InsideTester(pred), InsideTester(gt), cam, range, n, seed);
}

namespace {

struct DirectedStats {
  double mean_distance = 0.0;
  double mean_abs_cos = 0.0;
};

DirectedStats directed(const std::vector<SurfaceSample>& from, const std::vector<SurfaceSample>& to,
                       const PointIndex& to_index) {
  std::vector<double> dist(from.size()), cosv(from.size());
  parallel_for(from.size(), [&](std::size_t i) {
    const auto hit = to_index.nearest(from[i].point);
    dist[i] = hit.distance;
    cosv[i] = std::abs(from[i].normal.dot(to[hit.index].normal));
  });
  DirectedStats s;
  for (std::size_t i = 0; i < from.size(); ++i) {
    s.mean_distance += dist[i];
    s.mean_abs_cos += cosv[i];
  }
  s.mean_distance /= double(from.size());
  s.mean_abs_cos /= double(from.size());
  return s;
}

std::vector<Vec3> points_of(const std::vector<SurfaceSample>& s) {
  std::vector<Vec3> p;
  p.reserve(s.size());
  for (const auto& x : s) p.push_back(x.point);
  return p;
}

}  // namespace

SurfaceMetrics surface_metrics(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n, std::uint64_t seed) {
  if (pred.empty() || gt.empty()) throw ValidationError("surface metrics need non-empty meshes");
  if (n == 0) throw ConfigError("surface metrics need at least one sample");
  const double unit = aabb(gt).longest_edge() / 10.0;
  if (!(unit > 0.0)) throw ValidationError("ground-truth mesh has a degenerate bounding box");
  // Both meshes draw from the same stream (common random numbers): identical
  // meshes give identical samples, and small differences between meshes are
  // not drowned in sampling noise.
  const auto sp = sample_surface(pred, n, seed);
  const auto sg = sample_surface(gt, n, seed);
  const PointIndex ip(points_of(sp)), ig(points_of(sg));
  const DirectedStats a = directed(sp, sg, ig), b = directed(sg, sp, ip);
  return {0.5 * (a.mean_distance + b.mean_distance) / unit, 0.5 * (a.mean_abs_cos + b.mean_abs_cos)};
}

double chamfer_l1(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n, std::uint64_t seed) {
  return surface_metrics(pred, gt, n, seed).chamfer_l1;
}

double normal_consistency(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n, std::uint64_t seed) {
  return surface_metrics(pred, gt, n, seed).normal_consistency;
}

MetricReport evaluate(const TriangleMesh& pred, const TriangleMesh& gt, const CameraIntrinsics& cam,
                      const FrustumRange& range, std::uint64_t seed, std::size_t n) {
  MetricReport r;
  r.seed = seed;
  r.volume_samples = n;
  r.surface_samples = n;
  r.iou = pred.empty() ? 0.0 : volumetric_iou(pred, gt, cam, range, n, seed);
  if (pred.empty()) {
    r.chamfer_l1 = std::numeric_limits<double>::infinity();
    r.normal_consistency = 0.0;
  } else {
    const auto s = surface_metrics(pred, gt, n, seed);
    r.chamfer_l1 = s.chamfer_l1;
    r.normal_consistency = s.normal_consistency;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Registration.

TriangleMesh RigidTransform::apply(const TriangleMesh& mesh) const { return transformed(mesh, rotation, translation); }

double RigidTransform::rotation_angle() const {
  return std::acos(std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0));
}

RigidTransform kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size()) throw RegistrationError("point sets differ in size");
  if (a.size() < 3) throw RegistrationError("rigid registration needs at least 3 points");
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= double(a.size());
  cb /= double(b.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero(), spread = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    h += (a[i] - ca) * (b[i] - cb).transpose();
    spread += (a[i] - ca) * (a[i] - ca).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> spread_svd(spread);
  const Vec3 sv = spread_svd.singularValues();
  if (!(sv[1] > 1e-12 * std::max(sv[0], 1e-300))) throw RegistrationError("source points are collinear");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = cb - t.rotation * ca;
  return t;
}

IcpResult icp_register(const TriangleMesh& src, const TriangleMesh& dst, int max_iters, double tol,
                       std::uint64_t seed) {
  if (src.empty() || dst.empty()) throw RegistrationError("ICP needs non-empty meshes");
  if (max_iters < 1) throw ConfigError("ICP needs at least one iteration");
  constexpr std::size_t kMaxSource = 20000;
  std::vector<Vec3> source;
  const std::size_t stride = (src.vertices.size() + kMaxSource - 1) / kMaxSource;
  for (std::size_t i = 0; i < src.vertices.size(); i += stride) source.push_back(src.vertices[i]);

  std::vector<Vec3> targets = dst.vertices;
  for (const auto& s : sample_surface(dst, std::max<std::size_t>(dst.vertices.size(), 20000), seed))
    targets.push_back(s.point);
  const PointIndex index(std::move(targets));

  IcpResult best;
  best.mse = std::numeric_limits<double>::infinity();
  RigidTransform current;
  double prev = std::numeric_limits<double>::infinity();
  std::vector<Vec3> matched(source.size());
  std::vector<double> sq(source.size());
  for (int it = 0; it < max_iters; ++it) {
    parallel_for(source.size(), [&](std::size_t i) {
      const auto hit = index.nearest(current.apply(source[i]));
      matched[i] = index.point(hit.index);
      sq[i] = hit.distance * hit.distance;
    });
    double mse = 0.0;
    for (double v : sq) mse += v;
    mse /= double(sq.size());
    if (mse < best.mse) {
      best.mse = mse;
      best.transform = current;
      best.iterations = it;
    }
    if (mse == 0.0 || (std::isfinite(prev) && std::abs(prev - mse) <= tol * prev)) {
      best.converged = true;
      break;
    }
    prev = mse;
    current = kabsch(source, matched);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Visibility.

double visibility_level(const InsideTester& tester, const CameraIntrinsics& cam, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("visibility needs at least one sample");
  const AABB box = aabb(tester.mesh());
  Rng rng = make_rng(seed, 0x766973ULL);
  // Proposals are drawn in fixed-size rounds so the accepted sequence only
  // depends on the seed, then tested in parallel.
  const std::size_t round = 8192, max_proposals = 2000 * n + 1000000;
  std::size_t accepted = 0, visible = 0, proposed = 0;
  std::vector<Vec3> props(round);
  std::vector<std::uint8_t> in(round);
  while (accepted < n) {
    if (proposed >= max_proposals) throw ValidationError("mesh has no measurable volume for visibility sampling");
    for (auto& p : props)
      p = Vec3(uniform(rng, box.min.x(), box.max.x()), uniform(rng, box.min.y(), box.max.y()),
               uniform(rng, box.min.z(), box.max.z()));
    proposed += round;
    parallel_for(round, [&](std::size_t i) { in[i] = tester.inside(props[i]) ? 1 : 0; });
    for (std::size_t i = 0; i < round && accepted < n; ++i) {
      if (!in[i]) continue;
      ++accepted;
      const Vec3& p = props[i];
      if (p.z() > 0.0) {
        const Vec2 uv = project(cam, p);
        if (cam.in_image(uv.x(), uv.y())) ++visible;
      }
    }
  }
  return double(visible) / double(n);
}

double visibility_level(const TriangleMesh& mesh, const CameraIntrinsics& cam, std::size_t n, std::uint64_t seed) {
  return visibility_level(InsideTester(mesh), cam, n, seed);
}

std::vector<VisibilityBin> visibility_binning(const std::vector<double>& levels,
                                              const std::vector<MetricReport>& reports,
                                              std::pair<double, double> edges) {
  if (levels.size() != reports.size())
    throw ValidationError("visibility binning: " + std::to_string(levels.size()) + " levels for " +
                          std::to_string(reports.size()) + " reports");
  if (!(0.0 < edges.first && edges.first < edges.second && edges.second < 1.0))
    throw ConfigError("visibility bin edges must satisfy 0 < e0 < e1 < 1");
  std::vector<VisibilityBin> bins = {{"low", 0.0, edges.first},
                                     {"medium", edges.first, edges.second},
                                     {"high", edges.second, 1.0},
                                     {"full", 1.0, 1.0}};
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double v = levels[i];
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("visibility level outside [0, 1]: " + std::to_string(v));
    VisibilityBin& b = v == 1.0 ? bins[3] : v < edges.first ? bins[0] : v < edges.second ? bins[1] : bins[2];
    ++b.count;
    b.iou += reports[i].iou;
    b.chamfer_l1 += reports[i].chamfer_l1;
    b.normal_consistency += reports[i].normal_consistency;
  }
  for (auto& b : bins)
    if (b.count) {
      b.iou /= double(b.count);
      b.chamfer_l1 /= double(b.count);
      b.normal_consistency /= double(b.count);
    }
  return bins;
}

// ---------------------------------------------------------------------------
// Reports.

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string range_label(const VisibilityBin& b) {
  if (b.lo == b.hi) return "= " + fmt(b.hi).substr(0, 4);
  return "[" + fmt(b.lo).substr(0, 4) + ", " + fmt(b.hi).substr(0, 4) + ")";
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  m.name = "mean";
  for (const auto& r : reports) {
    m.iou += r.iou;
    m.chamfer_l1 += r.chamfer_l1;
    m.normal_consistency += r.normal_consistency;
  }
  if (!reports.empty()) {
    m.iou /= double(reports.size());
    m.chamfer_l1 /= double(reports.size());
    m.normal_consistency /= double(reports.size());
  }
  return m;
}

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "name,iou,chamfer_l1,normal_consistency,visibility,seed\n";
  auto row = [&](const MetricReport& r) {
    out << r.name << ',' << fmt(r.iou) << ',' << fmt(r.chamfer_l1) << ',' << fmt(r.normal_consistency) << ','
        << (r.visibility ? fmt(*r.visibility) : "") << ',' << r.seed << '\n';
  };
  for (const auto& r : reports) row(r);
  if (reports.size() > 1) row(mean_report(reports));
}

std::string format_report_table(const std::vector<MetricReport>& reports) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %10s %12s %10s\n", "sample", "IoU (+)", "Chamfer (-)", "Normal (+)");
  s << line;
  auto row = [&](const MetricReport& r) {
    std::snprintf(line, sizeof line, "%-24s %10.3f %12.3f %10.3f\n", r.name.c_str(), r.iou, r.chamfer_l1,
                  r.normal_consistency);
    s << line;
  };
  for (const auto& r : reports) row(r);
  if (reports.size() > 1) row(mean_report(reports));
  return s.str();
}

void write_binning_csv(std::ostream& out, const std::vector<VisibilityBin>& bins) {
  out << "bin,range,count,iou,chamfer_l1,normal_consistency\n";
  for (const auto& b : bins)
    out << b.label << ",\"" << range_label(b) << "\"," << b.count << ',' << fmt(b.iou) << ',' << fmt(b.chamfer_l1)
        << ',' << fmt(b.normal_consistency) << '\n';
}

std::string format_binning_table(const std::vector<VisibilityBin>& bins) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-14s %6s %10s %12s %10s\n", "bin", "visibility", "count", "IoU (+)",
                "Chamfer (-)", "Normal (+)");
  s << line;
  for (const auto& b : bins) {
    if (b.count)
      std::snprintf(line, sizeof line, "%-8s %-14s %6zu %10.3f %12.3f %10.3f\n", b.label.c_str(),
                    range_label(b).c_str(), b.count, b.iou, b.chamfer_l1, b.normal_consistency);
    else
      std::snprintf(line, sizeof line, "%-8s %-14s %6zu %10s %12s %10s\n", b.label.c_str(), range_label(b).c_str(),
                    b.count, "-", "-", "-");
    s << line;
  }
  return s.str();
}

}  // namespace oplanes
