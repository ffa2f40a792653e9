#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oplanes/inside.hpp"
#include "oplanes/representation.hpp"
#include "test_support.hpp"

using namespace oplanes;
namespace fs = std::filesystem;

namespace {

const fixtures::Sphere kSphere;

TriangleMesh sphere_mesh() { return make_icosphere(4, kSphere.radius, kSphere.center); }

}  // namespace

TEST(GtOPlane, PlaneInFrontOfMeshIsEmpty) {
  const auto cam = fixtures::square_camera(64);
  const auto plane = gt_oplane(sphere_mesh(), cam, 1.5, 64, 64);
  for (float v : plane.values.data) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(gt_oplane(sphere_mesh(), cam, 0.0, 64, 64), DomainError);
}

TEST(GtOPlane, MatchesPointInsideAndAnalyticSphere) {
  const auto mesh = sphere_mesh();
  const auto cam = fixtures::square_camera(64);
  const InsideTester tester(mesh);
  const OccupancyRaster raster(tester, cam);
  std::size_t agree = 0, total = 0, mismatch_oracle = 0;
  for (double z : {1.75, 1.9, 2.0, 2.1, 2.25}) {
    const auto plane = raster.plane(z);
    for (int v = 0; v < 64; ++v)
      for (int u = 0; u < 64; ++u) {
        const Vec3 p = unproject(cam, Vec2(u, v), z);
        const bool got = plane.values.at(u, v) > 0.5f;
        mismatch_oracle += got != point_inside(mesh, p);
        agree += got == kSphere.inside(p);
        ++total;
      }
  }
  EXPECT_EQ(mismatch_oracle, 0u);
  // The icosphere is inscribed in the analytic sphere; only rim pixels differ.
  EXPECT_GT(double(agree) / double(total), 0.99);
}

TEST(GtOPlane, DownscaledPlaneSamplesTopLeftPixel) {
  const auto mesh = sphere_mesh();
  const auto cam = fixtures::square_camera(64);
  const auto full = gt_oplane(mesh, cam, 2.0, 64, 64);
  const auto half = gt_oplane(mesh, cam, 2.0, 32, 32);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u) EXPECT_EQ(half.values.at(u, v), full.values.at(2 * u, 2 * v));
  EXPECT_THROW(gt_oplane(mesh, cam, 2.0, 48, 48), ConfigError);
}

TEST(Depths, TrainingAndInferenceSampling) {
  const FrustumRange r{1.0, 3.0};
  Rng rng = make_rng(3);
  const auto d = sample_train_depths(r, 10, rng);
  ASSERT_EQ(d.size(), 10u);
  EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
  for (double z : d) {
    EXPECT_GE(z, 1.0);
    EXPECT_LE(z, 3.0);
  }
  const auto u = uniform_inference_depths(r, 256);
  EXPECT_DOUBLE_EQ(u.front(), 1.0);
  EXPECT_DOUBLE_EQ(u.back(), 3.0);
  EXPECT_NEAR(u[1] - u[0], 2.0 / 255.0, 1e-12);
}

TEST(PositionalEncoding, Formula) {
  const auto pe = positional_encode(0.0);
  for (int t = 0; t < 32; ++t) {
    EXPECT_DOUBLE_EQ(pe[2 * t], 0.0);
    EXPECT_DOUBLE_EQ(pe[2 * t + 1], 1.0);
  }
  const auto pe2 = positional_encode(0.3);
  EXPECT_NEAR(pe2[0], std::sin(15.0), 1e-12);
  EXPECT_NEAR(pe2[11], std::cos(50.0 * 0.3 / std::pow(200.0, 10.0 / 64.0)), 1e-12);
}

TEST(DepthDiff, ConstantDepthGivesIdenticalPixels) {
  DepthMap depth(6, 4, 1, 1.5f);
  const auto img = depth_diff_image<double>(depth, 2.0, 5.0);
  const auto pe = positional_encode(0.5);
  for (int c = 0; c < kPeChannels; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) EXPECT_NEAR(img.at(c, y, x), pe[c], 1e-7);
}

TEST(DepthDiff, EncodingMatchesDirectImage) {
  DepthMap depth(8, 8);
  Rng rng = make_rng(5);
  for (auto& d : depth.data) d = float(uniform(rng, 1.0, 2.0));
  depth.data[3] = std::numeric_limits<float>::infinity();
  const DepthEncoding enc(depth, 3.5);
  for (double z : {1.0, 1.37, 2.9}) {
    const auto a = enc.at<double>(z);
    const auto b = depth_diff_image<double>(depth, z, 3.5);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Downsample, NearestTopLeft) {
  DepthMap d(4, 4);
  for (int i = 0; i < 16; ++i) d.data[i] = float(i);
  const auto h = downsample_depth(d, 2, 2);
  EXPECT_EQ(h.data, (std::vector<float>{0, 2, 8, 10}));
  EXPECT_THROW(downsample_depth(d, 3, 3), ConfigError);
}

TEST(AugmentedInput, ChannelsAndRanges) {
  RgbImage rgb(16, 16, 3, 0.2f);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = 0.9f;
  Mask mask(16, 16);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) mask.at(x, y) = 1;
  const auto t = augment_rgb(rgb, mask);
  ASSERT_EQ(t.shape(), (std::vector<int>{5, 16, 16}));
  EXPECT_FLOAT_EQ(t.at(0, 0, 0), 0.2f);
  EXPECT_FLOAT_EQ(t.at(3, 4, 4), 0.0f);  // boundary pixel
  EXPECT_GT(t.at(3, 7, 7), 0.0f);        // interior
  float max_edge = 0.0f;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) max_edge = std::max(max_edge, t.at(4, y, x));
  EXPECT_FLOAT_EQ(max_edge, 1.0f);
  EXPECT_NEAR(t.at(4, 8, 2), 0.0f, 1e-6);  // flat region
}

TEST(BoundaryDistance, MatchesBruteForce) {
  Mask mask(20, 15);
  for (int y = 2; y < 13; ++y)
    for (int x = 3; x < 18; ++x) mask.at(x, y) = (x - 10) * (x - 10) + (y - 7) * (y - 7) < 40;
  const auto b = mask_boundary(mask);
  const auto d = boundary_distance(mask);
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 20; ++x) {
      double best = 1e9;
      for (int v = 0; v < 15; ++v)
        for (int u = 0; u < 20; ++u)
          if (b.at(u, v)) best = std::min(best, std::hypot(u - x, v - y));
      EXPECT_NEAR(d.at(x, y), best, 1e-5);
    }
}

TEST(OplnFile, BinaryAndProbabilityRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "oplanes_opln";
  fs::create_directories(dir);
  const auto cam = fixtures::square_camera(64);
  const InsideTester tester(sphere_mesh());
  const OccupancyRaster raster(tester, cam.downscaled(2));
  const FrustumRange range{1.6, 2.4};
  const auto stack = raster.stack(uniform_inference_depths(range, 9), range);
  save_oplane_stack(stack, dir / "b.opln");
  const auto back = load_oplane_stack(dir / "b.opln");
  EXPECT_TRUE(back.binary);
  EXPECT_EQ(back.camera, stack.camera);
  ASSERT_EQ(back.planes.size(), stack.planes.size());
  for (std::size_t i = 0; i < stack.planes.size(); ++i) {
    EXPECT_EQ(back.planes[i].z, double(float(stack.planes[i].z)));  // stored as f32
    EXPECT_EQ(back.planes[i].values, stack.planes[i].values);
  }

  auto prob = stack;
  prob.binary = false;
  for (auto& p : prob.planes)
    for (auto& v : p.values.data) v = 0.25f + 0.5f * v;
  save_oplane_stack(prob, dir / "p.opln");
  const auto pback = load_oplane_stack(dir / "p.opln");
  EXPECT_FALSE(pback.binary);
  EXPECT_EQ(pback.planes[4].values, prob.planes[4].values);

  std::ofstream(dir / "bad.opln") << "nope";
  EXPECT_THROW(load_oplane_stack(dir / "bad.opln"), ParseError);
}

TEST(OPlaneStack, ValidateRejectsUnsortedDepths) {
  const auto cam = fixtures::square_camera(8);
  OPlaneStack s;
  s.camera = cam;
  s.range = {1.0, 2.0};
  s.planes = {OPlane{1.5, Image<float>(8, 8)}, OPlane{1.2, Image<float>(8, 8)}};
  EXPECT_THROW(s.validate(), ValidationError);
}
