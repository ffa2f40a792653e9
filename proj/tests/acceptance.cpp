// Acceptance checks. One criterion per invocation:
//   oplanes_acceptance --criterion N [--work DIR]
// prints "CRITERION N: PASS|FAIL <summary>" and exits 0 on PASS, 1 on FAIL.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "oplanes/checkpoint.hpp"
#include "oplanes/inference.hpp"
#include "oplanes/inside.hpp"
#include "oplanes/layers.hpp"
#include "oplanes/loss.hpp"
#include "oplanes/marching_cubes.hpp"
#include "oplanes/metrics.hpp"
#include "oplanes/random.hpp"
#include "oplanes/render.hpp"
#include "oplanes/synth.hpp"
#include "oplanes/train.hpp"
#include "test_support.hpp"

using namespace oplanes;
namespace fs = std::filesystem;
using fixtures::dot;
using fixtures::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void info(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Gradients of every trainable op and of the composed desk model.

struct GradTally {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  std::vector<std::string> excused;
  void add(const std::string& name, const nn::GradCheckResult& r) {
    ++checks;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = name;
    }
    if (r.below_floor > 0) excused.push_back(name);
    if (r.max_relative_error >= 1e-4)
      info(name + ": relative error " + fmt("%.3g", r.max_relative_error) + " (analytic " + fmt("%.6g", r.analytic) +
           ", numeric " + fmt("%.6g", r.numeric) + ")");
  }
};

void check_ops(GradTally& t) {
  using nn::Tensord;
  for (int k : {1, 3}) {
    const auto x = random_tensor<double>({3, 6, 5}, 10 + k);
    const auto w = random_tensor<double>({4, 3, k, k}, 20 + k);
    const auto b = random_tensor<double>({4}, 30 + k);
    const auto probe = random_tensor<double>({4, 6, 5}, 40 + k);
    Tensord gw = Tensord::zeros_like(w), gb = Tensord::zeros_like(b);
    const auto gx = nn::conv2d_backward(x, w, probe, gw, gb);
    const std::string n = "conv" + std::to_string(k) + "x" + std::to_string(k);
    t.add(n + " input", nn::finite_difference_check([&](const Tensord& v) { return dot(nn::conv2d(v, w, b), probe); }, x, gx));
    t.add(n + " weight", nn::finite_difference_check([&](const Tensord& v) { return dot(nn::conv2d(x, v, b), probe); }, w, gw));
    t.add(n + " bias", nn::finite_difference_check([&](const Tensord& v) { return dot(nn::conv2d(x, w, v), probe); }, b, gb));
  }
  {
    const auto x = random_tensor<double>({4, 3, 4}, 8);
    const auto gamma = random_tensor<double>({4}, 9), beta = random_tensor<double>({4}, 10);
    const auto probe = random_tensor<double>({4, 3, 4}, 11);
    nn::GroupNormCache<double> cache;
    nn::group_norm(x, 2, gamma, beta, 1e-5, &cache);
    Tensord gg = Tensord::zeros_like(gamma), gbeta = Tensord::zeros_like(beta);
    const auto gx = nn::group_norm_backward(cache, gamma, probe, gg, gbeta);
    t.add("group norm input",
          nn::finite_difference_check([&](const Tensord& v) { return dot(nn::group_norm(v, 2, gamma, beta, 1e-5), probe); }, x, gx));
    t.add("group norm gamma",
          nn::finite_difference_check([&](const Tensord& v) { return dot(nn::group_norm(x, 2, v, beta, 1e-5), probe); }, gamma, gg));
    t.add("group norm beta",
          nn::finite_difference_check([&](const Tensord& v) { return dot(nn::group_norm(x, 2, gamma, v, 1e-5), probe); }, beta, gbeta));
  }
  {
    const auto x = random_tensor<double>({2, 4, 6}, 12);
    const auto up = random_tensor<double>({2, 8, 12}, 13);
    t.add("bilinear upsample", nn::finite_difference_check([&](const Tensord& v) { return dot(nn::bilinear_upsample(v, 8, 12), up); },
                                                           x, nn::bilinear_upsample_backward(up, 4, 6)));
    const auto pool = random_tensor<double>({2, 2, 3}, 14);
    t.add("avg pool", nn::finite_difference_check([&](const Tensord& v) { return dot(nn::avg_pool2(v), pool); }, x,
                                                  nn::avg_pool2_backward(pool)));
  }
  {
    auto x = random_tensor<double>({3, 4, 4}, 15);
    for (auto& v : x.values())
      if (std::abs(v) < 1e-2) v = 0.5;  // off the kink
    const auto probe = random_tensor<double>({3, 4, 4}, 16);
    t.add("relu", nn::finite_difference_check([&](const Tensord& v) { return dot(nn::relu(v), probe); }, x,
                                              nn::relu_backward(nn::relu(x), probe)));
    const auto a = random_tensor<double>({3, 4, 4}, 17), b = random_tensor<double>({3, 4, 4}, 18);
    const auto p1 = random_tensor<double>({1, 4, 4}, 19);
    Tensord ga, gb;
    nn::pixelwise_inner_product_backward(a, b, p1, ga, gb);
    t.add("inner product a",
          nn::finite_difference_check([&](const Tensord& v) { return dot(nn::pixelwise_inner_product(v, b), p1); }, a, ga));
    t.add("inner product b",
          nn::finite_difference_check([&](const Tensord& v) { return dot(nn::pixelwise_inner_product(a, v), p1); }, b, gb));
  }
  {
    nn::ConvBlock<double> block("blk", 4, 4, 3, true, true);
    std::mt19937_64 rng(3);
    block.init(rng);
    const auto x = random_tensor<double>({4, 5, 5}, 22);
    const auto probe = random_tensor<double>({4, 5, 5}, 23);
    nn::ConvBlock<double>::Cache cache;
    block.forward(x, &cache);
    const auto gx = block.backward(cache, probe);
    t.add("conv block", nn::finite_difference_check([&](const Tensord& v) { return dot(block.forward(v, nullptr), probe); }, x, gx));
  }
}

// Loss gradients on a small disc-shaped target.
void check_losses(GradTally& t) {
  const int w = 8, h = 8;
  LossTargets tg;
  tg.mask = Mask(w, h);
  DepthMap depth(w, h, 1, std::numeric_limits<float>::infinity());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - 3.5) * (x - 3.5) + (y - 3.5) * (y - 3.5) < 10.0) {
        tg.mask.at(x, y) = 1;
        depth.at(x, y) = y < 4 ? 1.0f : 1.5f;
      }
  tg.gt.camera = fixtures::square_camera(w);
  tg.gt.range = {1.0, 3.0};
  for (double z : {1.2, 2.0}) {
    OPlane p{z, Image<float>(w, h)};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < 4; ++x) p.values.at(x, y) = tg.mask.at(x, y) ? 1.0f : 0.0f;
    tg.gt.planes.push_back(p);
    tg.valid.push_back(valid_pixel_mask(tg.mask, depth, z));
  }
  const auto l = random_tensor<double>({2, 1, 8, 8}, 5, 2.0);
  nn::Tensord gb, gd, gf, gc;
  bce_loss(l, tg, &gb);
  dice_loss(l, tg, &gd);
  t.add("bce loss", nn::finite_difference_check([&](const nn::Tensord& x) { return bce_loss(x, tg).value; }, l, gb, 1e-5));
  t.add("dice loss", nn::finite_difference_check([&](const nn::Tensord& x) { return dice_loss(x, tg); }, l, gd, 1e-5));
  const LossWeights lw{0.7, 1.3};
  total_loss(ForwardOutput<double>{l, l, {}, {}}, tg, tg, lw, true, &gf, &gc);
  t.add("total loss", nn::finite_difference_check(
                          [&](const nn::Tensord& x) { return total_loss(ForwardOutput<double>{x, l, {}, {}}, tg, tg, lw).total; },
                          l, gf, 1e-5));
}

void check_desk_model(GradTally& t, bool spatial_1x1, std::size_t coords) {
  ModelConfig c = ModelConfig::desk_scale();
  c.spatial_1x1 = spatial_1x1;
  OPlanesModel<double> model(c);
  model.init(11);
  // Zero biases sit exactly on ReLU kinks wherever the input vanishes.
  Rng rng = make_rng(10);
  for (auto* p : model.parameters())
    for (auto& v : p->value.values()) v += 0.05 * (uniform01(rng) - 0.5);

  SceneSpec spec;
  spec.family = ShapeFamily::capsule;
  const SceneSample scene = generate_scene(spec, 5);
  const auto range = compute_depth_range(scene.depth, scene.mask);
  const auto s = make_sample_inputs<double>(c, scene.rgb, scene.depth, scene.mask, range);
  const std::vector<double> depths{range.z_min + 0.12, range.z_min + 0.31};
  const int n = int(depths.size());
  const auto probe_f = random_tensor<double>({n, 1, c.fine_h, c.fine_w}, 13);
  const auto probe_c = random_tensor<double>({n, 1, c.coarse_h, c.coarse_w}, 14);
  auto objective = [&] {
    const auto out = model.predict_planes(s, depths);
    return dot(out.fine_logits, probe_f) + dot(out.coarse_logits, probe_c);
  };
  model.zero_grad();
  model.forward_backward(s, depths, [&](std::size_t i, const nn::Tensord&, const nn::Tensord&, nn::Tensord& gf,
                                        nn::Tensord& gc) {
    gf = probe_f.slice(int(i)).reshaped(gf.shape());
    gc = probe_c.slice(int(i)).reshaped(gc.shape());
  });
  // ReLUs without a following normalization (the 1x1 head) leave many
  // pre-activations near their kink; a small step keeps the central
  // difference from straddling them.
  const double eps = 1e-7;
  // Parameters whose true gradient is zero (a bias cancelled by the group
  // norm after it) give pure rounding noise in the central difference, a few
  // hundred ulps of the objective over 2 eps. Coordinates where both values
  // stay below 4096 such units are unresolvable and excused; the tensors they
  // belong to are listed.
  const double f0 = objective();
  const double ulp = std::nextafter(std::abs(f0), INFINITY) - std::abs(f0);
  const double floor = 4096.0 * ulp / (2.0 * eps);
  info(std::string(spatial_1x1 ? "1x1" : "3x3") + ": objective " + fmt("%.4g", f0) + ", noise floor " +
       fmt("%.3g", floor));
  const std::string tag = spatial_1x1 ? " (1x1)" : " (3x3)";
  std::uint64_t seed = 17;
  for (auto* p : model.parameters()) {
    auto loss = [&](const nn::Tensord& v) {
      const nn::Tensord saved = p->value;
      p->value = v;
      const double r = objective();
      p->value = saved;
      return r;
    };
    t.add(p->name + tag, nn::finite_difference_check(loss, p->value, p->grad, eps, coords, seed++, floor));
  }
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  GradTally ops, model;
  check_ops(ops);
  check_losses(ops);
  info("ops and losses: " + std::to_string(ops.checks) + " checks, worst " + fmt("%.3g", ops.worst) + " (" +
       ops.worst_name + ")");
  check_desk_model(model, false, 3);
  check_desk_model(model, true, 3);
  std::string excused;
  for (const auto& e : model.excused) excused += (excused.empty() ? "" : ", ") + e;
  info("below the noise floor: " + (excused.empty() ? std::string("none") : excused));
  info("desk model: " + std::to_string(model.checks) + " parameter tensors, worst " + fmt("%.3g", model.worst) + " (" +
       model.worst_name + ")");
  const double secs = seconds_since(t0);
  const double worst = std::max(ops.worst, model.worst);
  return {worst < 1e-4 && secs < 120.0,
          "max relative error " + fmt("%.3g", worst) + " (< 1e-4), " + fmt("%.1f", secs) + " s (< 120 s)"};
}

// ---------------------------------------------------------------------------
// 2. GT planes against the analytic sphere; winding number against parity.

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const fixtures::Sphere sphere;
  const auto mesh = make_icosphere(4, sphere.radius, sphere.center);
  const auto cam = fixtures::square_camera(256);
  // Pixels whose ray can meet the sphere at all, plus a margin: comparing the
  // empty rest of the plane would only inflate the agreement.
  const double reach = sphere.radius / std::sqrt(sphere.center.squaredNorm() - sphere.radius * sphere.radius);
  const double half = reach * cam.fx + 4.0;
  std::size_t agree = 0, total = 0, agree_all = 0, total_all = 0;
  for (double z : uniform_inference_depths({sphere.center.z() - sphere.radius, sphere.center.z() + sphere.radius}, 64)) {
    const OPlane p = gt_oplane(mesh, cam, z, 256, 256);
    for (int v = 0; v < 256; ++v)
      for (int u = 0; u < 256; ++u) {
        const bool same = (p.values.at(u, v) > 0.5f) == sphere.inside(unproject(cam, Vec2(u, v), z));
        agree_all += same;
        ++total_all;
        if (std::abs(u - cam.cx) <= half && std::abs(v - cam.cy) <= half) {
          agree += same;
          ++total;
        }
      }
  }
  const double frac = double(agree) / double(total);
  info("vertices " + std::to_string(mesh.vertices.size()) + ", agreement " + fmt("%.5f", frac) + " over " +
       std::to_string(total) + " pixels near the sphere, " + fmt("%.6f", double(agree_all) / double(total_all)) +
       " over all pixels");

  Rng rng = make_rng(3);
  std::size_t same = 0, inside = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Vec3 q = sphere.center + Vec3(uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4));
    const Vec3 dir = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)).normalized();
    const bool w = winding_number(mesh, q) >= 0.5;
    same += w == ray_parity_inside(mesh, q, dir);
    inside += w;
  }
  info("winding vs parity: " + std::to_string(same) + "/" + std::to_string(n) + " agree (" + std::to_string(inside) +
       " inside)");
  const double secs = seconds_since(t0);
  return {mesh.vertices.size() == 2562 && frac >= 0.995 && same == std::size_t(n) && secs < 60.0,
          "plane agreement " + fmt("%.4f", frac) + " (>= 0.995), inside tests " + std::to_string(same) + "/" +
              std::to_string(n) + ", " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 3. GT planes -> voxel grid -> marching cubes recovers the mesh.

double round_trip_iou(const TriangleMesh& mesh, const CameraIntrinsics& cam) {
  const auto view = raycast_render(mesh, cam);
  const auto range = compute_depth_range(view.depth, view.mask);
  const OccupancyRaster raster(InsideTester(mesh), cam);
  auto stack = raster.stack(uniform_inference_depths(range, 256), range);
  const auto rec = marching_cubes(planes_to_grid(stack), 0.5);
  return volumetric_iou(rec, mesh, cam, range, kMetricSamples, 1);
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cam = fixtures::square_camera(256);
  const auto sphere = make_icosphere(4, 0.3, Vec3(0, 0, 2));
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.5, Vec3(1, 2, 0.5).normalized()).toRotationMatrix();
  const auto box = transformed(make_box(Vec3(-0.25, -0.15, -0.1), Vec3(0.25, 0.15, 0.1)), r, Vec3(0.1, -0.05, 2.2));
  const double a = round_trip_iou(sphere, cam), b = round_trip_iou(box, cam);
  info("sphere IoU " + fmt("%.4f", a) + ", rotated box IoU " + fmt("%.4f", b));
  const double secs = seconds_since(t0);
  return {std::min(a, b) >= 0.95 && secs < 60.0,
          "IoU sphere " + fmt("%.4f", a) + ", box " + fmt("%.4f", b) + " (>= 0.95), " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 4. Metric oracles.

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cam = fixtures::square_camera(256);
  const auto a = make_box(Vec3(-0.75, -0.5, 3.0), Vec3(0.25, 0.5, 4.0));
  const auto b = make_box(Vec3(-0.25, -0.5, 3.0), Vec3(0.75, 0.5, 4.0));
  const double iou = volumetric_iou(a, b, cam, {3.0, 4.0}, 100000, 1);
  const auto self = surface_metrics(a, a, kMetricSamples, 2);

  const auto ellipsoid = transformed(make_icosphere(4), Eigen::Matrix3d(Vec3(0.3, 0.2, 0.12).asDiagonal()), Vec3(0, 0, 2));
  const auto dst = merged(ellipsoid, make_icosphere(2, 0.05, Vec3(0.25, 0.2, 2.0)));
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(5.0 * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix();
  const Vec3 c(0, 0, 2);
  const auto src = transformed(dst, rot, c - rot * c + Vec3(0.01, 0, 0));
  const auto reg = icp_register(src, dst, 100, 1e-10, 3);
  const auto back = reg.transform.apply(src);
  double worst = 0.0;
  for (std::size_t i = 0; i < dst.vertices.size(); ++i) worst = std::max(worst, (back.vertices[i] - dst.vertices[i]).norm());
  const double angle_err = std::abs(reg.transform.rotation_angle() - 5.0 * M_PI / 180.0);

  info("IoU of offset cubes " + fmt("%.4f", iou) + ", self chamfer " + fmt("%.3g", self.chamfer_l1) + ", self NC " +
       fmt("%.5f", self.normal_consistency));
  info("ICP: " + std::to_string(reg.iterations) + " iterations, worst vertex error " + fmt("%.3g", worst) +
       " m, angle error " + fmt("%.3g", angle_err) + " rad");
  const double secs = seconds_since(t0);
  const bool ok = std::abs(iou - 1.0 / 3.0) <= 0.01 && self.chamfer_l1 < 1e-3 && self.normal_consistency >= 0.999 &&
                  worst < 1e-3 && angle_err < 1e-3 && secs < 60.0;
  return {ok, "IoU " + fmt("%.4f", iou) + ", chamfer(A,A) " + fmt("%.2g", self.chamfer_l1) + ", NC(A,A) " +
                  fmt("%.4f", self.normal_consistency) + ", ICP error " + fmt("%.2g", worst) + ", " +
                  fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 5. Loss semantics.

Outcome criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  // A real scene: valid pixels are the mask minus pixels in front of the surface.
  SceneSpec spec;
  spec.width = spec.height = 64;
  const SceneSample s = generate_scene(spec, 4);
  const OccupancyRaster raster(InsideTester(s.mesh), s.camera);
  const std::vector<double> depths{s.train_range.z_min + 0.05, 0.5 * (s.train_range.z_min + s.train_range.z_max),
                                   s.train_range.z_max - 0.02};
  const auto t = make_loss_targets(raster, s.mask, s.depth, depths, s.train_range);
  const int n = int(depths.size()), hw = 64 * 64;

  const auto logits = random_tensor<double>({n, 1, 64, 64}, 1, 4.0);
  nn::Tensord gb1, gd1, gb2, gd2;
  const double b1 = bce_loss(logits, t, &gb1).value, d1 = dice_loss(logits, t, &gd1);
  auto other = logits;
  std::size_t changed = 0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < hw; ++i)
      if (!t.valid[k].data[i]) {
        other.data()[k * hw + i] = (i % 3 ? 1e3 : -1e3);
        ++changed;
      }
  const double b2 = bce_loss(other, t, &gb2).value, d2 = dice_loss(other, t, &gd2);
  bool invariant = b1 == b2 && d1 == d2 && changed > 0;
  for (std::size_t i = 0; i < gb1.size(); ++i) invariant &= gb1[i] == gb2[i] && gd1[i] == gd2[i];
  info("changed " + std::to_string(changed) + " invalid logits: losses and gradients " +
       (invariant ? "bitwise identical" : "DIFFER"));

  nn::Tensord perfect({n, 1, 64, 64});
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < hw; ++i) perfect.data()[k * hw + i] = t.gt.planes[k].values.data[i] > 0.5f ? 40.0 : -40.0;
  const double bce_perfect = bce_loss(perfect, t).value, dice_perfect = dice_loss(perfect, t);
  info("perfect prediction: BCE " + fmt("%.3g", bce_perfect) + ", DICE " + fmt("%.3g", dice_perfect));

  // Empty planes: no valid pixel at all, and an empty GT plane predicted
  // empty (zero denominator either way).
  auto no_valid = t;
  for (auto& m : no_valid.valid) std::fill(m.data.begin(), m.data.end(), 0);
  nn::Tensord ge;
  const double dice_no_valid = dice_loss(logits, no_valid, &ge);
  bool zero_grad = true;
  for (std::size_t i = 0; i < ge.size(); ++i) zero_grad &= ge[i] == 0.0;
  auto empty_gt = t;
  for (auto& p : empty_gt.gt.planes) std::fill(p.values.data.begin(), p.values.data.end(), 0.0f);
  const nn::Tensord off({n, 1, 64, 64}, -1000.0);
  const double dice_empty = dice_loss(off, empty_gt);
  info("empty planes: DICE " + fmt("%.3g", dice_no_valid) + " (no valid pixels), " + fmt("%.3g", dice_empty) +
       " (empty GT, zero prediction)");

  const double secs = seconds_since(t0);
  const bool ok = invariant && bce_perfect < 1e-6 && dice_perfect == 0.0 && dice_no_valid == 0.0 && zero_grad &&
                  dice_empty == 0.0 && secs < 10.0;
  return {ok, std::string("invariance ") + (invariant ? "bitwise" : "broken") + ", BCE perfect " +
                  fmt("%.2g", bce_perfect) + ", DICE perfect " + fmt("%.2g", dice_perfect) + ", DICE empty " +
                  fmt("%.2g", std::max(dice_no_valid, dice_empty)) + ", " + fmt("%.2f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 6-8. Overfit protocol: desk model, 3 synthetic scenes, 500 iterations.

constexpr long kOverfitIterations = 500;

struct OverfitScenes {
  std::vector<SceneSample> scenes;
  std::vector<TrainingSample> train;
};

const OverfitScenes& overfit_scenes(const fs::path& work) {
  static OverfitScenes d = [&] {
    OverfitScenes o;
    std::vector<SceneSpec> specs(3);
    specs[0].family = ShapeFamily::sphere;
    specs[1].family = ShapeFamily::capsule;
    specs[2].family = ShapeFamily::box;
    const auto manifest = write_dataset(specs, 1, work / "overfit_data", 7);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) o.scenes.push_back(load_sample(manifest.sample_dir(i)));
    o.train = load_training_set(manifest, ModelConfig::desk_scale());
    return o;
  }();
  return d;
}

fs::path overfit_checkpoint(const fs::path& work, bool spatial_1x1, std::uint64_t seed) {
  return work / ("overfit_" + std::string(spatial_1x1 ? "1x1" : "3x3") + "_seed" + std::to_string(seed) + ".opck");
}

std::unique_ptr<OPlanesModel<float>> train_overfit(const fs::path& work, bool spatial_1x1, std::uint64_t seed,
                                                   bool reuse) {
  const fs::path ck = overfit_checkpoint(work, spatial_1x1, seed);
  if (reuse && fs::exists(ck)) {
    auto c = load_checkpoint(ck);
    if (c.state.iteration == kOverfitIterations) {
      info("reusing " + ck.filename().string());
      return std::move(c.model);
    }
  }
  ModelConfig mc = ModelConfig::desk_scale();
  mc.spatial_1x1 = spatial_1x1;
  auto model = std::make_unique<OPlanesModel<float>>(mc);
  model->init(seed);
  TrainConfig cfg;
  cfg.iterations = kOverfitIterations;
  cfg.seed = seed;
  cfg.deterministic = true;
  TrainingState state;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = fit(*model, state, overfit_scenes(work).train, cfg);
  info(std::string(spatial_1x1 ? "1x1" : "3x3") + " seed " + std::to_string(seed) + ": " +
       std::to_string(r.history.size()) + " iterations in " + fmt("%.0f", seconds_since(t0)) + " s, final loss " +
       fmt("%.4f", r.history.back().total));
  save_checkpoint(ck, *model, state);
  return model;
}

// Mean reconstruction IoU over the scenes, sampled in the inference frustum
// [z_min, z_min + 2 m] unless a training-frustum comparison is asked for.
double mean_iou(const OPlanesModel<float>& model, const fs::path& work, int planes, bool training_frustum = false,
                bool print = true) {
  double sum = 0.0;
  for (const auto& s : overfit_scenes(work).scenes) {
    ReconstructionConfig rc;
    rc.n_planes = planes;
    const auto rec = reconstruct(model, s.rgb, s.depth, s.mask, s.camera, rc);
    const FrustumRange range = training_frustum ? s.train_range : compute_depth_range(s.depth, s.mask);
    const double iou = rec.empty ? 0.0 : volumetric_iou(rec.mesh, s.mesh, s.camera, range);
    if (print) info(s.name + " @" + std::to_string(planes) + " planes: IoU " + fmt("%.4f", iou));
    sum += iou;
  }
  return sum / double(overfit_scenes(work).scenes.size());
}

Outcome criterion6(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = train_overfit(work, false, 1, false);
  const double iou = mean_iou(*model, work, 64);
  const double train_iou = mean_iou(*model, work, 64, true, false);
  info("for reference, IoU over the supervised frustum [z_min, GT far depth]: " + fmt("%.4f", train_iou));
  const double secs = seconds_since(t0);
  return {iou >= 0.7 && secs < 1200.0,
          "mean IoU " + fmt("%.4f", iou) + " (>= 0.7) at 64 planes, " + fmt("%.0f", secs) + " s (< 1200 s)"};
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Outcome criterion7(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> full, ablated;
  for (std::uint64_t seed : {1, 2, 3}) {
    full.push_back(mean_iou(*train_overfit(work, false, seed, true), work, 64, false, false));
    ablated.push_back(mean_iou(*train_overfit(work, true, seed, true), work, 64, false, false));
    info("seed " + std::to_string(seed) + ": 3x3 IoU " + fmt("%.4f", full.back()) + ", 1x1 IoU " +
         fmt("%.4f", ablated.back()));
  }
  const double a = median3(full), b = median3(ablated);
  const double secs = seconds_since(t0);
  return {a >= b && secs < 3600.0, "median IoU 3x3 " + fmt("%.4f", a) + " vs 1x1 " + fmt("%.4f", b) + ", " +
                                       fmt("%.0f", secs) + " s (< 3600 s)"};
}

Outcome criterion8(const fs::path& work) {
  // The overfit model trains with 10 planes per sample (the default).
  const auto model = train_overfit(work, false, 1, true);
  const auto t0 = std::chrono::steady_clock::now();
  const double low = mean_iou(*model, work, 32), high = mean_iou(*model, work, 256);
  const double secs = seconds_since(t0);
  return {high >= low && secs < 300.0, "IoU@256 " + fmt("%.4f", high) + " vs IoU@32 " + fmt("%.4f", low) +
                                           ", inference and evaluation " + fmt("%.0f", secs) + " s (< 300 s)"};
}

// ---------------------------------------------------------------------------
// 9. Visibility tooling.

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cam = fixtures::square_camera(128);
  const double z = 2.0;
  // The left image boundary plane passes through the cube's center.
  const double x = z * (-0.5 - cam.cx) / cam.fx;
  const double half = visibility_level(make_box(Vec3(x - 0.1, -0.1, z - 0.1), Vec3(x + 0.1, 0.1, z + 0.1)), cam);
  info("half-in-view cube: visibility " + fmt("%.4f", half));

  // Cropped and uncropped scenes, predictions offset by 2 cm, aggregated by
  // visibility.
  SceneSpec spec;
  spec.width = spec.height = 64;
  std::vector<MetricReport> reports;
  std::vector<double> levels;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    spec.family = ShapeFamily(seed % 3);
    spec.visibility = seed < 8 ? VisibilityMode::crop : VisibilityMode::none;
    const auto s = generate_scene(spec, seed);
    const auto pred = transformed(s.mesh, Eigen::Matrix3d::Identity(), Vec3(0.02, 0, 0));
    reports.push_back(evaluate(pred, s.mesh, s.camera, compute_depth_range(s.depth, s.mask), 0, 20000));
    reports.back().name = s.name;
    levels.push_back(s.visibility);
  }
  const auto bins = visibility_binning(levels, reports);
  std::ostringstream csv;
  write_binning_csv(csv, bins);
  const std::string text = csv.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  std::size_t counted = 0;
  for (const auto& b : bins) counted += b.count;
  std::printf("%s", format_binning_table(bins).c_str());
  const double secs = seconds_since(t0);
  const bool ok = std::abs(half - 0.5) <= 0.01 && bins.size() == 4 && lines == 5 && counted == reports.size() &&
                  secs < 60.0;
  return {ok, "visibility " + fmt("%.4f", half) + " (0.5 +- 0.01), binned table " + std::to_string(bins.size()) +
                  " rows, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 10. Determinism of the command line pipeline.

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), {}};
}

bool run(const std::string& cmd) {
  info("$ " + cmd);
  return std::system((cmd + " > /dev/null").c_str()) == 0;
}

Outcome criterion10(const fs::path& work, const std::string& cli) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> outputs{"run/model.opck", "run/last.opck", "run/loss.csv", "mesh.obj", "planes.opln",
                                         "eval.csv"};
  for (const char* name : {"a", "b"}) {
    const fs::path d = work / "determinism" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    // Identical command lines: each run works in its own directory with
    // relative paths (the checkpoint records the data path).
    const std::string det = "cd '" + d.string() + "' && '" + cli + "' --deterministic ";
    const bool ok = run(det + "gen-data --spec sphere,box --n 1 --seed 5 --out data") &&
                    run(det + "train --data data --desk --iters 20 --batch 2 --seed 3 --quiet --out run") &&
                    run(det + "infer --ckpt run/model.opck --sample data/0000_sphere --planes 48 --out mesh.obj "
                              "--dump-planes planes.opln") &&
                    run(det + "eval --pred mesh.obj --sample data/0000_sphere --csv eval.csv");
    if (!ok) return {false, std::string("command failed in run ") + name};
  }
  std::size_t same = 0;
  for (const auto& f : outputs) {
    const auto a = read_bytes(work / "determinism/a" / f), b = read_bytes(work / "determinism/b" / f);
    const bool eq = !a.empty() && a == b;
    info(f + ": " + std::to_string(a.size()) + " bytes, " + (eq ? "identical" : "DIFFERENT"));
    same += eq;
  }
  const double secs = seconds_since(t0);
  return {same == outputs.size(), std::to_string(same) + "/" + std::to_string(outputs.size()) +
                                      " outputs bitwise identical across two runs, " + fmt("%.0f", secs) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("OPlanes acceptance checks");
  int criterion = 0;
  std::string work = "acceptance_work";
  std::string cli = OPLANES_CLI_PATH;
  app.add_option("--criterion", criterion)->required()->check(CLI::Range(1, 10));
  app.add_option("--work", work, "scratch directory for criteria 6-8 and 10");
  app.add_option("--cli", cli, "oplanes executable for criterion 10");
  CLI11_PARSE(app, argc, argv);

  Outcome o;
  try {
    if (criterion >= 6 && criterion != 9) fs::create_directories(work);
    switch (criterion) {
      case 1: o = criterion1(); break;
      case 2: o = criterion2(); break;
      case 3: o = criterion3(); break;
      case 4: o = criterion4(); break;
      case 5: o = criterion5(); break;
      case 6: o = criterion6(work); break;
      case 7: o = criterion7(work); break;
      case 8: o = criterion8(work); break;
      case 9: o = criterion9(); break;
      case 10: o = criterion10(work, cli); break;
    }
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  std::printf("CRITERION %d: %s %s\n", criterion, o.pass ? "PASS" : "FAIL", o.summary.c_str());
  return o.pass ? 0 : 1;
}
