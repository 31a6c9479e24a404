// Command-line driver: dataset generation, training, rendering, evaluation
// and the one-command desk-scale reproduction.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "iddr/detector_math.hpp"
#include "iddr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace iddr;

namespace {

std::vector<double> parse_csv_numbers(const std::string& text, std::size_t expect) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.size() != expect) {
    throw UsageError("expected " + std::to_string(expect) + " comma-separated numbers, got " +
                     std::to_string(out.size()));
  }
  return out;
}

FcosTargets offsets_from_csv(const std::string& text) {
  const auto v = parse_csv_numbers(text, 4);
  FcosTargets t;
  t.x0s = v[0];
  t.x1s = v[1];
  t.y0s = v[2];
  t.y1s = v[3];
  t.positive = t.x0s >= 0 && t.x1s >= 0 && t.y0s >= 0 && t.y1s >= 0;
  return t;
}

struct GenDataArgs {
  std::string out;
  int views = 20;
  int resolution = 128;
  std::string distractor = "snow";
  int count = 25;
  double min_size = 2.0;
  double max_size = 6.0;
  double fov_deg = 55.0;
  double radius = 1.5;
  double elevation = 0.45;
  std::uint64_t seed = 7;
  bool force = false;
};

void add_gen_flags(CLI::App* cmd, GenDataArgs& args) {
  cmd->add_option("--out", args.out, "output dataset directory")->required();
  cmd->add_option("--views", args.views, "number of rig views");
  cmd->add_option("--res", args.resolution, "image resolution (square)");
  cmd->add_option("--distractor", args.distractor, "snow | confetti | petal");
  cmd->add_option("--count", args.count, "sprites per view");
  cmd->add_option("--min-size", args.min_size, "minimum sprite size in pixels");
  cmd->add_option("--max-size", args.max_size, "maximum sprite size in pixels");
  cmd->add_option("--fov", args.fov_deg, "horizontal field of view, degrees");
  cmd->add_option("--radius", args.radius, "camera ring radius");
  cmd->add_option("--elevation", args.elevation, "camera ring elevation, radians");
  cmd->add_option("--seed", args.seed, "generation seed");
  cmd->add_flag("--force", args.force, "overwrite a non-empty output directory");
}

void run_gen_data(const GenDataArgs& args) {
  BenchmarkSpec spec;
  spec.views = args.views;
  spec.resolution = args.resolution;
  spec.fov_x_deg = args.fov_deg;
  spec.rig_radius = args.radius;
  spec.rig_elevation = args.elevation;
  spec.seed = args.seed;
  spec.distractors.kind = DistractorSpec::parse_kind(args.distractor);
  spec.distractors.count = args.count;
  spec.distractors.min_size = args.min_size;
  spec.distractors.max_size = args.max_size;
  write_benchmark(args.out, spec, SyntheticScene::desk_default(), args.force);
  std::cerr << "wrote dataset: " << args.out << " (" << args.views << " views, "
            << args.resolution << "x" << args.resolution << ", " << args.distractor
            << ")\n";
}

struct TrainArgs {
  std::string data;
  std::string labels;
  std::string out;
  TrainConfig cfg;
  std::string variant = "full";
  std::string background = "white";
  std::uint32_t table_size_log2 = 14;
  std::string resume;
};

void add_train_flags(CLI::App* cmd, TrainArgs& args) {
  cmd->add_option("--labels", args.labels, "YOLO label directory (default: DATA/labels)");
  cmd->add_option("--iters", args.cfg.iterations, "iteration budget");
  cmd->add_option("--seed", args.cfg.seed, "training seed");
  cmd->add_option("--batch-rays", args.cfg.batch_rays, "rays per optimization step");
  cmd->add_option("--lambda1-post", args.cfg.lambdas.lambda1_post,
                  "MVCL weight after warm-up");
  cmd->add_option("--lambda2-post", args.cfg.lambdas.lambda2_post,
                  "perceptual weight after warm-up");
  cmd->add_option("--warmup", args.cfg.lambdas.warmup_iterations,
                  "iterations before the lambda step");
  cmd->add_option("--s-scale", args.cfg.s_scale, "MVCL scale factor (0 = 1/K)");
  cmd->add_option("--n-samples", args.cfg.n_samples, "samples per ray");
  cmd->add_option("--threads", args.cfg.threads, "worker threads (0 = hardware)");
  cmd->add_option("--loss-variant", args.variant, "rgb | rgb+lpips | rgb+mvcl | full");
  cmd->add_flag("--ignore-boxes", args.cfg.ignore_boxes,
                "train on every pixel (unmasked baseline)");
  cmd->add_option("--patches-per-step", args.cfg.patches_per_step,
                  "perceptual patches per step");
  cmd->add_option("--patch-interval", args.cfg.patch_interval,
                  "apply the perceptual term every k-th step");
  cmd->add_option("--patch-size", args.cfg.patch_size, "perceptual patch side");
  cmd->add_option("--lr-start", args.cfg.lr_start, "initial learning rate");
  cmd->add_option("--lr-end", args.cfg.lr_end, "final learning rate");
  cmd->add_option("--levels", args.cfg.grid.levels, "hash grid levels");
  cmd->add_option("--table-size-log2", args.table_size_log2, "log2 hash table size");
  cmd->add_option("--features", args.cfg.grid.features, "features per table entry");
  cmd->add_option("--base-res", args.cfg.grid.base_resolution, "coarsest grid resolution");
  cmd->add_option("--finest-res", args.cfg.grid.finest_resolution,
                  "finest grid resolution (0 = image resolution)");
  cmd->add_option("--checkpoint-interval", args.cfg.checkpoint_interval,
                  "checkpoint every N iterations (0 = final only)");
  cmd->add_option("--background", args.background, "white | black");
  cmd->add_option("--extractor-weights", args.cfg.extractor_weights,
                  "JSON weights for the perceptual filter bank");
  cmd->add_option("--resume", args.resume, "checkpoint to resume from");
  cmd->set_config("--config", "", "TOML-style key=value configuration file");
}

TrainConfig finalize_train_config(TrainArgs& args) {
  args.cfg.apply_loss_variant(args.variant);
  args.cfg.grid.table_size = 1u << args.table_size_log2;
  if (args.background == "white") {
    args.cfg.background = {1.f, 1.f, 1.f};
  } else if (args.background == "black") {
    args.cfg.background = {0.f, 0.f, 0.f};
  } else {
    throw UsageError("unknown background: " + args.background);
  }
  return args.cfg;
}

void run_train(TrainArgs& args) {
  TrainConfig cfg = finalize_train_config(args);
  cfg.out_dir = args.out;
  const std::string transforms = (fs::path(args.data) / "transforms.json").string();
  std::string labels = args.labels;
  if (labels.empty()) {
    const fs::path candidate = fs::path(args.data) / "labels";
    if (fs::exists(candidate)) labels = candidate.string();
  }
  auto views = load_dataset(transforms, labels);
  Trainer trainer(std::move(views), cfg);
  if (!args.resume.empty()) trainer.resume_from(args.resume);
  std::cerr << "training: " << cfg.iterations << " iterations, batch " << cfg.batch_rays
            << ", variant " << args.variant << (cfg.ignore_boxes ? " (unmasked)" : "")
            << ", seed " << cfg.seed << "\n";
  std::cerr << "parameters: " << trainer.model().net.parameter_count() << " network + "
            << trainer.model().grid.parameter_count() << " hash-table\n";
  trainer.run();
  std::cerr << "final checkpoint: " << trainer.checkpoint_path(trainer.iteration()) << "\n";
}

void run_render(const std::string& ckpt, const std::string& data, const std::string& out,
                int pose_index, bool with_depth, int threads) {
  const NerfModel<float> model = load_checkpoint(ckpt);
  const auto views = load_dataset((fs::path(data) / "transforms.json").string(), "");
  check_io(!views.empty(), "dataset has no frames");
  fs::create_directories(out);
  ThreadPool pool(threads > 0 ? threads
                              : static_cast<int>(std::thread::hardware_concurrency()));
  RenderConfig cfg = model.render_config(false, 0);
  const int begin = pose_index >= 0 ? pose_index : 0;
  const int end = pose_index >= 0 ? pose_index + 1 : static_cast<int>(views.size());
  check(begin >= 0 && end <= static_cast<int>(views.size()), "pose index out of range");
  for (int i = begin; i < end; ++i) {
    auto [img, depth] = render_view_batched(model, views[i].camera, views[i].pose, cfg, pool);
    char name[64];
    std::snprintf(name, sizeof(name), "render_%03d.png", i);
    write_png_rgb((fs::path(out) / name).string(), img);
    if (with_depth) {
      const float scale = static_cast<float>(65535.0 / model.far);
      std::snprintf(name, sizeof(name), "depth_%03d.png", i);
      write_png_gray16((fs::path(out) / name).string(), depth, scale);
      std::snprintf(name, sizeof(name), "depth_%03d.json", i);
      std::ofstream sidecar(fs::path(out) / name);
      sidecar << nlohmann::json({{"scale", scale}, {"far", model.far}}).dump(2) << "\n";
    }
  }
  std::cerr << "rendered " << (end - begin) << " view(s) to " << out << "\n";
}

void run_eval(const std::string& ckpt, const std::string& data, const std::string& labels,
              const std::string& clean, const std::string& out_prefix,
              const std::string& region_name, int threads) {
  EvalRegion region;
  if (region_name == "box") {
    region = EvalRegion::kBoxInterior;
  } else if (region_name == "full") {
    region = EvalRegion::kFullImage;
  } else {
    throw UsageError("unknown region: " + region_name + " (expected box or full)");
  }
  std::string labels_dir = labels;
  if (labels_dir.empty()) {
    const fs::path candidate = fs::path(data) / "labels";
    if (fs::exists(candidate)) labels_dir = candidate.string();
  }
  std::string clean_dir = clean;
  if (clean_dir.empty()) clean_dir = (fs::path(data) / "clean").string();
  const EvalReport report =
      evaluate_checkpoint(ckpt, (fs::path(data) / "transforms.json").string(), labels_dir,
                          clean_dir, region, threads);
  if (!out_prefix.empty()) {
    const fs::path parent = fs::path(out_prefix).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream js(out_prefix + ".json");
    js << report.to_json().dump(2) << "\n";
    std::ofstream cs(out_prefix + ".csv");
    cs << report.to_csv();
  }
  std::cerr << "eval (" << report.region_name() << "): mean PSNR "
            << cap_psnr(report.mean_psnr) << " dB, mean SSIM " << report.mean_ssim << "\n";
}

struct ReproArgs {
  std::string out;
  std::uint64_t seed = 7;
  std::uint64_t iters = 10000;
  std::string variant = "full";
  bool all_variants = false;
  bool skip_baseline = false;
  GenDataArgs gen;
  int batch_rays = 256;
  int threads = 0;
};

void run_repro(ReproArgs& args) {
  const std::string data_dir = (fs::path(args.out) / "data").string();
  args.gen.out = data_dir;
  args.gen.seed = args.seed;
  args.gen.force = true;
  run_gen_data(args.gen);

  TrainConfig base = desk_train_config("", args.seed, args.iters);
  base.batch_rays = args.batch_rays;
  base.threads = args.threads;

  std::vector<std::string> variants;
  if (args.all_variants) {
    variants = {"rgb", "rgb+lpips", "rgb+mvcl", "full"};
  } else {
    variants = {args.variant};
  }

  std::vector<ReproResult> results;
  for (const std::string& variant : variants) {
    std::cerr << "repro: training variant " << variant << " (masked)\n";
    results.push_back(repro_train_and_eval(
        data_dir, (fs::path(args.out) / ("train_" + variant)).string(), variant, false,
        args.seed, args.iters, base));
  }
  if (!args.skip_baseline) {
    std::cerr << "repro: training unmasked baseline\n";
    results.push_back(repro_train_and_eval(
        data_dir, (fs::path(args.out) / "train_unmasked").string(), variants.back(), true,
        args.seed, args.iters, base));
  }

  std::ostringstream table;
  table << "variant            masked-train  box-PSNR(dB)  box-SSIM  LPIPS-proxy\n";
  nlohmann::json summary = nlohmann::json::array();
  for (const ReproResult& r : results) {
    table << std::left << std::setw(19) << r.variant << std::setw(14)
          << (r.masked_training ? "yes" : "no") << std::setw(14) << std::setprecision(5)
          << cap_psnr(r.masked_psnr) << std::setw(10) << std::setprecision(4)
          << r.masked_ssim << std::setprecision(4) << r.lpips_proxy << "\n";
    summary.push_back({{"variant", r.variant},
                       {"masked_training", r.masked_training},
                       {"box_psnr", cap_psnr(r.masked_psnr)},
                       {"box_ssim", r.masked_ssim},
                       {"lpips_proxy", r.lpips_proxy}});
  }
  std::cerr << table.str();
  std::ofstream txt(fs::path(args.out) / "summary.txt");
  txt << table.str();
  std::ofstream js(fs::path(args.out) / "summary.json");
  js << summary.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distractor-free radiance field reconstruction"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic benchmark dataset");
  add_gen_flags(gen, gen_args);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a masked radiance field");
  train->add_option("--data", train_args.data, "dataset directory with transforms.json")
      ->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  add_train_flags(train, train_args);

  std::string render_ckpt, render_data, render_out;
  int render_pose = -1, render_threads = 0;
  bool render_depth = false;
  CLI::App* render = app.add_subcommand("render", "render views from a checkpoint");
  render->add_option("--ckpt", render_ckpt, "checkpoint path")->required();
  render->add_option("--data", render_data, "dataset directory for poses")->required();
  render->add_option("--out", render_out, "output directory")->required();
  render->add_option("--pose-index", render_pose, "render one pose (-1 = all)");
  render->add_flag("--depth", render_depth, "also write 16-bit depth maps");
  render->add_option("--threads", render_threads, "worker threads (0 = hardware)");

  std::string eval_ckpt, eval_data, eval_labels, eval_clean, eval_out, eval_region = "box";
  int eval_threads = 0;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint against clean images");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset directory with transforms.json")->required();
  eval->add_option("--labels", eval_labels, "label directory (default: DATA/labels)");
  eval->add_option("--clean", eval_clean, "clean image directory (default: DATA/clean)");
  eval->add_option("--out", eval_out, "output report prefix (.json/.csv)");
  eval->add_option("--region", eval_region, "box | full");
  eval->add_option("--threads", eval_threads, "worker threads (0 = hardware)");

  ReproArgs repro_args;
  CLI::App* repro = app.add_subcommand(
      "repro", "one-command reproduction: gen-data + train + eval + summary");
  repro->add_option("--out", repro_args.out, "output directory")->required();
  repro->add_option("--seed", repro_args.seed, "seed for generation and training");
  repro->add_option("--iters", repro_args.iters, "training iterations per run");
  repro->add_option("--loss-variant", repro_args.variant,
                    "rgb | rgb+lpips | rgb+mvcl | full");
  repro->add_flag("--all-variants", repro_args.all_variants,
                  "run the whole ablation grid");
  repro->add_flag("--skip-baseline", repro_args.skip_baseline,
                  "skip the unmasked baseline training");
  repro->add_option("--batch-rays", repro_args.batch_rays, "rays per step");
  repro->add_option("--threads", repro_args.threads, "worker threads (0 = hardware)");
  repro->add_option("--views", repro_args.gen.views, "rig views");
  repro->add_option("--res", repro_args.gen.resolution, "image resolution");
  repro->add_option("--distractor", repro_args.gen.distractor, "snow | confetti | petal");
  repro->add_option("--count", repro_args.gen.count, "sprites per view");

  CLI::App* dm = app.add_subcommand("detector-math", "spot-evaluate detector target math");
  std::string dm_offsets = "1,1,1,1", dm_target = "1,1,1,1", dm_box = "0,0,10,10",
              dm_location = "5,5";
  double dm_p = 0.5, dm_alpha = 0.25, dm_gamma = 2.0;
  int dm_label = 1;
  CLI::App* dm_center = dm->add_subcommand("centerness", "centerness of offsets");
  dm_center->add_option("--offsets", dm_offsets, "x0*,x1*,y0*,y1*");
  CLI::App* dm_focal = dm->add_subcommand("focal", "focal loss of a prediction");
  dm_focal->add_option("--p", dm_p, "predicted probability");
  dm_focal->add_option("--label", dm_label, "ground-truth label (0 or 1)");
  dm_focal->add_option("--alpha", dm_alpha, "alpha");
  dm_focal->add_option("--gamma", dm_gamma, "gamma");
  CLI::App* dm_iou = dm->add_subcommand("iou", "IoU loss between offset sets");
  dm_iou->add_option("--pred", dm_offsets, "predicted x0*,x1*,y0*,y1*");
  dm_iou->add_option("--target", dm_target, "target x0*,x1*,y0*,y1*");
  CLI::App* dm_targets = dm->add_subcommand("targets", "regression targets of a location");
  dm_targets->add_option("--box", dm_box, "x0,y0,x1,y1");
  dm_targets->add_option("--location", dm_location, "x,y");
  dm->require_subcommand(1);

  try {
    app.parse(argc, argv);

    if (*gen) {
      run_gen_data(gen_args);
    } else if (*train) {
      run_train(train_args);
    } else if (*render) {
      run_render(render_ckpt, render_data, render_out, render_pose, render_depth,
                 render_threads);
    } else if (*eval) {
      run_eval(eval_ckpt, eval_data, eval_labels, eval_clean, eval_out, eval_region,
               eval_threads);
    } else if (*repro) {
      run_repro(repro_args);
    } else if (*dm) {
      if (*dm_center) {
        std::cout << fcos_centerness(offsets_from_csv(dm_offsets)) << "\n";
      } else if (*dm_focal) {
        std::cout << focal_loss(dm_p, dm_label, dm_alpha, dm_gamma) << "\n";
      } else if (*dm_iou) {
        std::cout << iou_loss(offsets_from_csv(dm_offsets), offsets_from_csv(dm_target))
                  << "\n";
      } else if (*dm_targets) {
        const auto b = parse_csv_numbers(dm_box, 4);
        const auto loc = parse_csv_numbers(dm_location, 2);
        BBox box;
        box.x0 = b[0];
        box.y0 = b[1];
        box.x1 = b[2];
        box.y1 = b[3];
        box.validate();
        const FcosTargets t = fcos_targets(loc[0], loc[1], box);
        std::cout << t.x0s << " " << t.x1s << " " << t.y0s << " " << t.y1s
                  << (t.positive ? " positive " : " negative ")
                  << (t.positive ? std::to_string(t.centerness) : std::string("-")) << "\n";
      }
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
