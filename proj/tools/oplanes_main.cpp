// oplanes: command-line driver for data generation, training, inference and
// evaluation.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "oplanes/checkpoint.hpp"
#include "oplanes/inference.hpp"
#include "oplanes/metrics.hpp"
#include "oplanes/parallel.hpp"
#include "oplanes/synth.hpp"
#include "oplanes/train.hpp"

namespace fs = std::filesystem;
using namespace oplanes;

namespace {

// Thrown for bad invocations that CLI11 cannot see (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// Camera for planes of res x (res * h / w) pixels. Integer downscales keep
// the top-left pixel of each block; integer upscales split pixels evenly.
CameraIntrinsics plane_camera(const CameraIntrinsics& cam, int res) {
  if (res <= 0) throw UsageError("--res must be positive");
  if (res <= cam.width) {
    if (cam.width % res) throw UsageError("--res must divide or be a multiple of the image width");
    return camera_at_resolution(cam, res, cam.height / (cam.width / res));
  }
  if (res % cam.width) throw UsageError("--res must divide or be a multiple of the image width");
  const int s = res / cam.width;
  CameraIntrinsics c = cam;
  c.fx *= s;
  c.fy *= s;
  c.cx = (cam.cx + 0.5) * s - 0.5;
  c.cy = (cam.cy + 0.5) * s - 0.5;
  c.width = cam.width * s;
  c.height = cam.height * s;
  return c;
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::string spec = "sphere";
  int n = 4;
  std::uint64_t seed = 0;
  std::string out;
  int res = 128;
  std::string visibility = "none";
  int holdout_every = 0;
  double size_min = 0.28, size_max = 0.42;
};

int cmd_gen_data(const GenDataOptions& o, const std::string& resolved) {
  std::vector<SceneSpec> specs;
  for (const auto& fam : split_list(o.spec)) {
    SceneSpec s;
    s.family = parse_shape_family(fam);
    s.visibility = parse_visibility_mode(o.visibility);
    s.width = s.height = o.res;
    s.size_min = o.size_min;
    s.size_max = o.size_max;
    specs.push_back(s);
  }
  if (specs.empty()) throw UsageError("--spec lists no shape family");
  const Manifest m = write_dataset(specs, o.n, o.out, o.seed, o.holdout_every);
  write_text(fs::path(o.out) / "config.ini", resolved);
  std::printf("wrote %zu samples to %s\n", m.entries.size(), o.out.c_str());
  return 0;
}

struct GtOptions {
  std::string sample;
  int planes = 64;
  int res = 256;
  std::string out;
};

int cmd_gt_oplanes(const GtOptions& o) {
  const SceneSample s = load_sample(o.sample);
  const InsideTester tester(s.mesh);  // throws OracleUnavailable for open meshes
  const CameraIntrinsics cam = plane_camera(s.camera, o.res);
  const OccupancyRaster raster(tester, cam);
  const auto depths = uniform_inference_depths(s.train_range, o.planes);
  save_oplane_stack(raster.stack(depths, s.train_range), o.out);
  std::printf("wrote %d planes of %dx%d to %s\n", o.planes, cam.width, cam.height, o.out.c_str());
  return 0;
}

struct TrainOptions {
  std::string data;
  std::string out = "run";
  bool desk = false;
  long iters = 0;
  int epochs = 15;
  int batch = 4;
  int planes = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool spatial_1x1 = false;
  bool no_coarse = false;
  std::string resume;
  std::string split = "train";
  double lambda_bce = 1.0, lambda_dice = 1.0;
  bool quiet = false;
};

int cmd_train(const TrainOptions& o, bool deterministic, const std::string& resolved) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.iterations = o.iters;
  cfg.planes = o.planes;
  cfg.seed = o.seed;
  cfg.deterministic = deterministic;
  cfg.use_coarse_loss = !o.no_coarse;
  cfg.weights = {o.lambda_bce, o.lambda_dice};
  cfg.out_dir = o.out;
  cfg.validate();

  std::unique_ptr<OPlanesModel<float>> model;
  TrainingState state;
  if (!o.resume.empty()) {
    Checkpoint ck = load_checkpoint(o.resume);
    if (ck.model->config().spatial_1x1 != o.spatial_1x1)
      throw UsageError("--ablate-spatial-1x1 disagrees with the checkpoint being resumed");
    model = std::move(ck.model);
    state = std::move(ck.state);
  } else {
    ModelConfig mc = o.desk ? ModelConfig::desk_scale() : ModelConfig::full();
    mc.spatial_1x1 = o.spatial_1x1;
    model = std::make_unique<OPlanesModel<float>>(mc);
    model->init(o.seed);
  }
  state.extra["seed"] = std::to_string(o.seed);
  state.extra["data"] = o.data;

  const auto data = load_training_set(load_manifest(o.data), model->config(), o.split);
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "config.ini", resolved);
  std::printf("training on %zu samples, %zu parameters\n", data.size(), model->parameter_count());
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = fit(*model, state, data, cfg, [&](long it, const LossBreakdown& l) {
    if (!o.quiet && (it % 10 == 0 || it == 1))
      std::printf("iter %6ld  loss %.5f  (bce %.4f dice %.4f | coarse bce %.4f dice %.4f)\n", it, l.total,
                  l.bce_fine, l.dice_fine, l.bce_coarse, l.dice_coarse);
    std::fflush(stdout);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("done: %zu iterations in %.1f s, checkpoint %s\n", result.history.size(), secs,
              (fs::path(o.out) / "model.opck").c_str());
  return 0;
}

struct InferOptions {
  std::string ckpt;
  std::string sample;
  int planes = 256;
  std::string out = "mesh.obj";
  std::string dump_planes;
  double iso = 0.5;
  double z_range = kInferenceDepthRange;
  bool no_mask_gating = false;
  bool zero_in_front = false;
  int chunk = 16;
};

int cmd_infer(const InferOptions& o, const std::string& resolved) {
  const Checkpoint ck = load_checkpoint(o.ckpt);
  const SceneSample s = load_sample(o.sample);
  ReconstructionConfig rc;
  rc.n_planes = o.planes;
  rc.iso = o.iso;
  rc.z_range = o.z_range;
  rc.mask_gating = !o.no_mask_gating;
  rc.zero_in_front = o.zero_in_front;
  rc.chunk_size = o.chunk;
  const Reconstruction rec = reconstruct(*ck.model, s.rgb, s.depth, s.mask, s.camera, rc, !o.dump_planes.empty());
  if (rec.empty) std::fprintf(stderr, "warning: no voxel above iso %.3f; writing an empty mesh\n", o.iso);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_mesh(rec.mesh, out);
  if (!o.dump_planes.empty()) save_oplane_stack(rec.planes, o.dump_planes);
  write_text(fs::path(out).replace_extension(".config.ini"), resolved);
  std::printf("wrote %zu faces to %s (depth range %.3f..%.3f m, %d planes)\n", rec.mesh.faces.size(), o.out.c_str(),
              rec.range.z_min, rec.range.z_max, o.planes);
  return 0;
}

struct EvalOptions {
  std::string pred;
  std::string sample;
  std::string pred_dir;
  std::string data;
  std::uint64_t seed = 0;
  std::size_t n = kMetricSamples;
  double z_range = kInferenceDepthRange;
  bool icp = false;
  bool by_visibility = false;
  std::string csv;
  std::string split;
};

MetricReport evaluate_one(const fs::path& pred_path, const SceneSample& s, const EvalOptions& o) {
  TriangleMesh pred = load_mesh(pred_path);
  if (o.icp && !pred.empty()) pred = icp_register(pred, s.mesh, 50, 1e-6, o.seed).transform.apply(pred);
  // Same window the reconstruction was swept over: nearest observed depth
  // plus z_range, so anything predicted behind the object counts.
  const FrustumRange range = compute_depth_range(s.depth, s.mask, std::nullopt, o.z_range);
  MetricReport r = evaluate(pred, s.mesh, s.camera, range, o.seed, o.n);
  r.visibility = s.visibility;
  return r;
}

int cmd_eval(const EvalOptions& o) {
  std::vector<MetricReport> reports;
  std::vector<double> levels;
  if (!o.pred.empty()) {
    if (o.sample.empty()) throw UsageError("--pred needs --sample");
    const SceneSample s = load_sample(o.sample);
    reports.push_back(evaluate_one(o.pred, s, o));
    reports.back().name = fs::path(o.sample).filename().string();
    levels.push_back(s.visibility);
  } else {
    if (o.pred_dir.empty() || o.data.empty()) throw UsageError("give --pred/--sample or --pred-dir/--data");
    const Manifest m = load_manifest(o.data);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      if (!o.split.empty() && m.entries[i].split != o.split) continue;
      const fs::path pred = fs::path(o.pred_dir) / (m.entries[i].path + ".obj");
      if (!fs::exists(pred)) throw IoError("missing prediction " + pred.string());
      const SceneSample s = load_sample(m.sample_dir(i));
      reports.push_back(evaluate_one(pred, s, o));
      reports.back().name = m.entries[i].path;
      levels.push_back(s.visibility);
    }
    if (reports.empty()) throw DataError("no samples to evaluate");
  }
  std::ostringstream csv;
  if (o.by_visibility)
    write_binning_csv(csv, visibility_binning(levels, reports));
  else
    write_report_csv(csv, reports);
  if (!o.csv.empty()) {
    write_text(o.csv, csv.str());
    std::printf("%s", o.by_visibility ? format_binning_table(visibility_binning(levels, reports)).c_str()
                                      : format_report_table(reports).c_str());
  } else {
    std::printf("%s", csv.str().c_str());
  }
  return 0;
}

struct VisibilityOptions {
  std::string mesh;
  std::string camera;
  std::string sample;
  std::size_t n = kMetricSamples;
  std::uint64_t seed = 0;
};

int cmd_visibility(const VisibilityOptions& o) {
  TriangleMesh mesh;
  CameraIntrinsics cam;
  if (!o.sample.empty()) {
    const SceneSample s = load_sample(o.sample);
    mesh = s.mesh;
    cam = s.camera;
  } else {
    if (o.mesh.empty() || o.camera.empty()) throw UsageError("give --sample or both --mesh and --camera");
    mesh = load_mesh(o.mesh);
    cam = load_camera(o.camera);
  }
  std::printf("%.6f\n", visibility_level(mesh, cam, o.n, o.seed));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  oplanes::tune_allocator();
  CLI::App app{"OPlanes: single-view 3D reconstruction with occupancy planes"};
  app.set_config("--config", "", "INI file with one [section] per subcommand");
  app.require_subcommand(1);
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic, "single-threaded, bitwise reproducible runs");

  GenDataOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "generate a synthetic RGB-D dataset");
  c_gen->add_option("--spec", gen.spec, "shape families, comma separated (sphere, capsule, box, stick)");
  c_gen->add_option("--n", gen.n, "samples per family")->check(CLI::PositiveNumber);
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--res", gen.res, "image width and height")->check(CLI::PositiveNumber);
  c_gen->add_option("--visibility", gen.visibility, "none, crop or occluder");
  c_gen->add_option("--holdout-every", gen.holdout_every, "tag every k-th sample as test");
  c_gen->add_option("--size-min", gen.size_min);
  c_gen->add_option("--size-max", gen.size_max);

  GtOptions gt;
  auto* c_gt = app.add_subcommand("gt-oplanes", "ground-truth occupancy planes of a sample");
  c_gt->add_option("--sample", gt.sample)->required()->check(CLI::ExistingDirectory);
  c_gt->add_option("--planes", gt.planes)->check(CLI::Range(2, 65535));
  c_gt->add_option("--res", gt.res, "plane width in pixels");
  c_gt->add_option("--out", gt.out, "OPLN file")->required();

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "train a model");
  c_train->add_option("--data", tr.data, "dataset directory or manifest")->required()->check(CLI::ExistingPath);
  c_train->add_option("--out", tr.out, "run directory");
  c_train->add_flag("--desk", tr.desk, "128x128 input, narrow widths");
  c_train->add_option("--iters", tr.iters, "iterations (overrides --epochs)");
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  c_train->add_option("--planes", tr.planes, "planes per sample and iteration")->check(CLI::PositiveNumber);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--split", tr.split, "manifest split to train on (empty: all)");
  c_train->add_option("--lambda-bce", tr.lambda_bce);
  c_train->add_option("--lambda-dice", tr.lambda_dice);
  c_train->add_flag("--ablate-spatial-1x1", tr.spatial_1x1, "1x1 kernels in the spatial network");
  c_train->add_flag("--ablate-no-coarse-loss", tr.no_coarse, "drop the coarse-resolution loss");
  c_train->add_option("--resume", tr.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  c_train->add_flag("--quiet", tr.quiet);

  InferOptions inf;
  auto* c_infer = app.add_subcommand("infer", "reconstruct a mesh from one sample");
  c_infer->add_option("--ckpt", inf.ckpt)->required()->check(CLI::ExistingFile);
  c_infer->add_option("--sample", inf.sample)->required()->check(CLI::ExistingDirectory);
  c_infer->add_option("--planes", inf.planes)->check(CLI::Range(2, 65535));
  c_infer->add_option("--out", inf.out, "OBJ output");
  c_infer->add_option("--dump-planes", inf.dump_planes, "also write the probability planes (OPLN)");
  c_infer->add_option("--iso", inf.iso);
  c_infer->add_option("--z-range", inf.z_range, "depth window beyond the nearest observed point (m)");
  c_infer->add_flag("--no-mask-gating", inf.no_mask_gating);
  c_infer->add_flag("--zero-in-front", inf.zero_in_front, "zero voxels in front of the observed depth");
  c_infer->add_option("--chunk", inf.chunk, "planes per forward pass")->check(CLI::PositiveNumber);

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "IoU, Chamfer-L1 and normal consistency against ground truth");
  c_eval->add_option("--pred", ev.pred)->check(CLI::ExistingFile);
  c_eval->add_option("--sample", ev.sample)->check(CLI::ExistingDirectory);
  c_eval->add_option("--pred-dir", ev.pred_dir, "directory of <sample>.obj predictions")->check(CLI::ExistingDirectory);
  c_eval->add_option("--data", ev.data, "dataset for --pred-dir")->check(CLI::ExistingPath);
  c_eval->add_option("--split", ev.split, "only samples with this split tag");
  c_eval->add_option("--seed", ev.seed);
  c_eval->add_option("--samples", ev.n, "point samples per metric")->check(CLI::PositiveNumber);
  c_eval->add_option("--z-range", ev.z_range, "depth of the evaluation frustum beyond the nearest observed point (m)")
      ->check(CLI::PositiveNumber);
  c_eval->add_flag("--icp", ev.icp, "rigidly register the prediction to the ground truth first");
  c_eval->add_flag("--by-visibility", ev.by_visibility, "aggregate by visibility level");
  c_eval->add_option("--csv", ev.csv, "write CSV here and print a table");

  VisibilityOptions vis;
  auto* c_vis = app.add_subcommand("visibility", "fraction of a mesh's volume inside the image");
  c_vis->add_option("--mesh", vis.mesh)->check(CLI::ExistingFile);
  c_vis->add_option("--camera", vis.camera)->check(CLI::ExistingFile);
  c_vis->add_option("--sample", vis.sample)->check(CLI::ExistingDirectory);
  c_vis->add_option("--samples", vis.n)->check(CLI::PositiveNumber);
  c_vis->add_option("--seed", vis.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (deterministic) set_deterministic_mode(true);
    const std::string resolved = app.config_to_str(true, false);
    if (c_gen->parsed()) return cmd_gen_data(gen, resolved);
    if (c_gt->parsed()) return cmd_gt_oplanes(gt);
    if (c_train->parsed()) return cmd_train(tr, deterministic_mode(), resolved);
    if (c_infer->parsed()) return cmd_infer(inf, resolved);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_vis->parsed()) return cmd_visibility(vis);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const OracleUnavailable& e) {
    std::fprintf(stderr, "oracle unavailable: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
