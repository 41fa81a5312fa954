// splatworld — synthetic-data generation, Gaussian world-model training,
// rendering, future prediction, evaluation, and PLY export in one binary.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "splatworld/io/ply.hpp"
#include "splatworld/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace splatworld;

namespace {

int log_level() {
  const char* v = std::getenv("SPLATWORLD_LOG");
  if (!v) return 1;
  try {
    return std::stoi(v);
  } catch (...) {
    return 1;
  }
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cout << msg << "\n";
}

// Shared flags. Flag overrides win over the config file.
struct Common {
  std::string config_path;
  long long seed = -1;
  int threads = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file (JSON)");
    cmd->add_option("--seed", seed, "RNG seed override");
    cmd->add_option("--threads", threads, "Worker threads (1 = deterministic reference)");
    cmd->add_option("--out", out, "Output directory");
  }

  io::RunConfig resolve() const {
    io::RunConfig cfg;
    if (!config_path.empty()) cfg = io::load_config(config_path);
    if (seed >= 0) cfg.seed = uint64_t(seed);
    if (threads > 0) cfg.threads = threads;
    if (!out.empty()) cfg.out_dir = out;
    validate(cfg);
    return cfg;
  }
};

ImageF plane_to_image(const std::vector<float>& data, int w, int h, int channels) {
  ImageF img(w, h, channels);
  std::copy(data.begin(), data.end(), img.data.begin());
  return img;
}

void write_bundle(const ImageBundle<float>& b, const std::string& dir, const std::string& stem) {
  fs::create_directories(dir);
  ImageD rgb(b.width, b.height, 3);
  for (size_t i = 0; i < b.rgb.size(); ++i) rgb.data[i] = double(b.rgb[i]);
  io::write_png(io::to_rgb8(rgb), dir + "/" + stem + "_rgb.png");
  io::write_pfm(plane_to_image(b.rgb, b.width, b.height, 3), dir + "/" + stem + "_rgb.pfm");
  io::write_pfm(plane_to_image(b.feature, b.width, b.height, 3),
                dir + "/" + stem + "_feature.pfm");
  io::write_pfm(plane_to_image(b.depth, b.width, b.height, 1), dir + "/" + stem + "_depth.pfm");
  io::write_pfm(plane_to_image(b.alpha, b.width, b.height, 1), dir + "/" + stem + "_alpha.pfm");
}

// The observation/action context of one dataset sample.
struct SampleContext {
  io::DatasetManifest manifest;
  std::vector<Camera> rig;
  Observation obs;
  DiscreteAction action;
  int task_id = 0;
};

SampleContext load_sample(const std::string& dataset, int sample) {
  SampleContext ctx;
  ctx.manifest = io::load_manifest(dataset);
  ctx.rig = io::load_cameras(dataset + "/cameras.json");
  if (sample < 0 || sample >= int(ctx.manifest.samples.size()))
    throw InvalidParameterError("sample index out of range (dataset has " +
                                std::to_string(ctx.manifest.samples.size()) + " samples)");
  const io::SampleRecord& rec = ctx.manifest.samples[size_t(sample)];
  const io::View front = io::load_view(dataset, rec, 0);
  ctx.obs.rgb = front.rgb;
  ctx.obs.depth = front.depth;
  ctx.obs.proprioception = rec.proprioception;
  ctx.action = rec.action;
  const auto it = std::find(ctx.manifest.tasks.begin(), ctx.manifest.tasks.end(), rec.task);
  ctx.task_id = it == ctx.manifest.tasks.end() ? 0 : int(it - ctx.manifest.tasks.begin());
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splatting world model for tabletop manipulation"};
  app.require_subcommand(1);

  Common c_gen, c_fit, c_train, c_render, c_predict, c_eval, c_ply;

  auto* gen = app.add_subcommand("gen-data", "Generate a scripted-episode dataset");
  c_gen.attach(gen);

  auto* fit = app.add_subcommand("fit-scene", "Fit free Gaussians to one keyframe");
  c_fit.attach(fit);
  std::string fit_dataset;
  int fit_frame = 0, fit_gaussians = 2048, fit_heldout = 4;
  long fit_iterations = 5000;
  fit->add_option("--dataset", fit_dataset, "Dataset directory")->required();
  fit->add_option("--frame", fit_frame, "Sample index to fit");
  fit->add_option("--gaussians", fit_gaussians, "Free Gaussian count");
  fit->add_option("--iterations", fit_iterations, "Optimization iterations");
  fit->add_option("--heldout", fit_heldout, "Number of trailing cameras held out");

  auto* train = app.add_subcommand("train-world", "Train the full world model");
  c_train.attach(train);
  std::string train_dataset;
  long train_ckpt_every = 2000;
  int train_cams = 3;
  bool train_act_only = false;
  train->add_option("--dataset", train_dataset, "Dataset directory")->required();
  train->add_option("--checkpoint-every", train_ckpt_every, "Checkpoint interval (iterations)");
  train->add_option("--cameras-per-step", train_cams, "Supervision cameras per sample");
  train->add_flag("--act-only", train_act_only, "Behavior cloning only (skip rendering terms)");

  auto* rnd = app.add_subcommand("render", "Render the regressed scene for one sample");
  c_render.attach(rnd);
  std::string rnd_checkpoint, rnd_dataset;
  int rnd_sample = 0, rnd_camera = 0;
  rnd->add_option("--checkpoint", rnd_checkpoint, "Checkpoint file")->required();
  rnd->add_option("--dataset", rnd_dataset, "Dataset directory")->required();
  rnd->add_option("--sample", rnd_sample, "Sample index (observation source)");
  rnd->add_option("--camera", rnd_camera, "Rig camera index to render from");

  auto* pred = app.add_subcommand("predict-future", "Render current and predicted next frame");
  c_predict.attach(pred);
  std::string pred_checkpoint, pred_dataset;
  int pred_sample = 0, pred_camera = 0;
  pred->add_option("--checkpoint", pred_checkpoint, "Checkpoint file")->required();
  pred->add_option("--dataset", pred_dataset, "Dataset directory")->required();
  pred->add_option("--sample", pred_sample, "Sample index (observation + action source)");
  pred->add_option("--camera", pred_camera, "Rig camera index to render from");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  c_eval.attach(ev);
  std::string ev_checkpoint, ev_dataset;
  int ev_max = 0, ev_camera = 0;
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint file")->required();
  ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
  ev->add_option("--max-transitions", ev_max, "Cap on evaluated transitions (0 = all)");
  ev->add_option("--camera", ev_camera, "Rig camera index for image metrics");

  auto* ply = app.add_subcommand("export-ply", "Export the regressed scene as a viewer PLY");
  c_ply.attach(ply);
  std::string ply_checkpoint, ply_dataset, ply_path;
  int ply_sample = 0;
  ply->add_option("--checkpoint", ply_checkpoint, "Checkpoint file")->required();
  ply->add_option("--dataset", ply_dataset, "Dataset directory")->required();
  ply->add_option("--sample", ply_sample, "Sample index (observation source)");
  ply->add_option("--path", ply_path, "Output PLY path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      const io::RunConfig cfg = c_gen.resolve();
      const auto manifest = io::gen_dataset(cfg, cfg.out_dir);
      info("gen-data: wrote " + std::to_string(manifest.samples.size()) + " samples to " +
           cfg.out_dir);
    }

    if (fit->parsed()) {
      const io::RunConfig cfg = c_fit.resolve();
      const auto ctx = load_sample(fit_dataset, fit_frame);
      const io::SampleRecord& rec = ctx.manifest.samples[size_t(fit_frame)];
      if (fit_heldout < 0 || fit_heldout >= int(ctx.rig.size()))
        throw InvalidParameterError("fit-scene: --heldout must leave at least one training view");
      std::vector<FitView> train_views, heldout_views;
      for (size_t c = 0; c < ctx.rig.size(); ++c) {
        const io::View v = io::load_view(fit_dataset, rec, int(c));
        FitView fv{ctx.rig[c], v.rgb, v.semantic, v.depth};
        (int(c) + fit_heldout < int(ctx.rig.size()) ? train_views : heldout_views)
            .push_back(std::move(fv));
      }
      FitOptions opt;
      opt.gaussians = fit_gaussians;
      opt.iterations = fit_iterations;
      opt.seed = cfg.seed;
      opt.threads = cfg.threads;
      opt.background = env::kBackgroundColor;
      opt.log_every = 500;
      opt.on_log = [](long it, double loss) {
        info("fit-scene: iter=" + std::to_string(it) + " loss=" + std::to_string(loss));
      };
      const FitResult result = fit_scene(train_views, heldout_views, opt);
      fs::create_directories(cfg.out_dir);
      io::export_ply(result.scene, cfg.out_dir + "/scene.ply");
      nlohmann::json j{{"mean_heldout_psnr", result.mean_heldout_psnr},
                       {"heldout_psnr", result.heldout_psnr},
                       {"final_train_loss", result.final_train_loss}};
      std::ofstream f(cfg.out_dir + "/fit_report.json");
      f << j.dump(1) << "\n";
      std::cout << "fit-scene: mean held-out PSNR " << result.mean_heldout_psnr << " dB\n";
    }

    if (train->parsed()) {
      const io::RunConfig cfg = c_train.resolve();
      TrainWorldOptions opt;
      opt.config = cfg;
      opt.dataset_dir = train_dataset;
      opt.out_dir = cfg.out_dir;
      opt.checkpoint_every = train_ckpt_every;
      opt.cameras_per_step = train_cams;
      opt.act_only = train_act_only;
      fs::create_directories(cfg.out_dir);
      std::ofstream log(cfg.out_dir + "/train.log", std::ios::app);
      if (!log) throw IoError("train-world: cannot open " + cfg.out_dir + "/train.log");
      opt.log = &log;
      const TrainWorldResult result = train_world(opt);
      info("train-world: final total loss " + std::to_string(result.final_total) +
           ", checkpoint " + result.final_checkpoint);
    }

    if (rnd->parsed() || pred->parsed()) {
      const bool future = pred->parsed();
      const Common& common = future ? c_predict : c_render;
      const std::string checkpoint = future ? pred_checkpoint : rnd_checkpoint;
      const std::string dataset = future ? pred_dataset : rnd_dataset;
      const int sample = future ? pred_sample : rnd_sample;
      const int camera = future ? pred_camera : rnd_camera;
      const io::RunConfig cfg = common.resolve();

      WorldModelParams<float> params = restore_params(io::load_checkpoint(checkpoint));
      const auto ctx = load_sample(dataset, sample);
      if (camera < 0 || camera >= int(ctx.rig.size()))
        throw InvalidParameterError("camera index out of range");
      RasterSettings<float> settings;
      settings.background_color = env::kBackgroundColor.cast<float>();
      // cameras[0] voxelizes; the requested camera is rendered.
      std::vector<Camera> cams = {ctx.rig[0]};
      if (camera != 0) cams.push_back(ctx.rig[size_t(camera)]);
      const auto roll =
          rollout_future(ctx.obs, ctx.action, cams, params, settings, 0, cfg.threads);
      const size_t view = cams.size() - 1;
      write_bundle(roll.current_views[view], cfg.out_dir, "current");
      if (future) write_bundle(roll.future_views[view], cfg.out_dir, "future");
      info(std::string(future ? "predict-future" : "render") + ": wrote bundles to " +
           cfg.out_dir);
    }

    if (ev->parsed()) {
      const io::RunConfig cfg = c_eval.resolve();
      WorldModelParams<float> params = restore_params(io::load_checkpoint(ev_checkpoint));
      const EvalResult r = evaluate(params, ev_dataset, {ev_camera}, ev_max, cfg.threads);
      nlohmann::json j{{"future_psnr", r.future_psnr},
                       {"baseline_psnr", r.baseline_psnr},
                       {"psnr_gain", r.future_psnr - r.baseline_psnr},
                       {"translation_accuracy", r.translation_accuracy},
                       {"rotation_accuracy", r.rotation_accuracy},
                       {"openness_accuracy", r.openness_accuracy},
                       {"collision_accuracy", r.collision_accuracy},
                       {"transitions", r.transitions}};
      fs::create_directories(cfg.out_dir);
      std::ofstream f(cfg.out_dir + "/eval.json");
      if (!f) throw IoError("eval: cannot open " + cfg.out_dir + "/eval.json");
      f << j.dump(1) << "\n";
      std::cout << j.dump(1) << "\n";
    }

    if (ply->parsed()) {
      c_ply.resolve();
      WorldModelParams<float> params = restore_params(io::load_checkpoint(ply_checkpoint));
      const auto ctx = load_sample(ply_dataset, ply_sample);
      const VoxelGrid grid =
          voxelize(ctx.obs, ctx.rig[0], params.bounds, params.voxel_resolution);
      const FeatureVolume<float> vol = encode(grid, params);
      const DynamicScene<float> scene = regress_gaussians(vol, params);
      io::export_ply(scene, ply_path);
      info("export-ply: wrote " + std::to_string(scene.primitives.size()) + " primitives to " +
           ply_path);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
