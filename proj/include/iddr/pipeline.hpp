#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iddr/checkpoint.hpp"
#include "iddr/dataset.hpp"
#include "iddr/metrics.hpp"
#include "iddr/synthbench.hpp"
#include "iddr/trainer.hpp"

namespace iddr {

// Training profile sized for the 128^2 synthetic benchmark: small ray batches
// and a thinned perceptual term keep a 10k-iteration run inside a desktop
// time budget while leaving the full-scale defaults intact.
inline TrainConfig desk_train_config(const std::string& out_dir, std::uint64_t seed,
                                     std::uint64_t iterations = 10000) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.batch_rays = 256;
  cfg.patches_per_step = 1;
  cfg.patch_interval = 8;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.background = {1.f, 1.f, 1.f};
  return cfg;
}

// Renders every dataset view with the batched renderer; jitter off so the
// output is a pure function of the checkpoint.
inline std::vector<ImageF> render_dataset_views(const NerfModel<float>& model,
                                                const std::vector<ViewRecord>& views,
                                                ThreadPool& pool) {
  std::vector<ImageF> rendered;
  rendered.reserve(views.size());
  RenderConfig cfg = model.render_config(false, 0);
  for (const ViewRecord& view : views) {
    auto [img, depth] = render_view_batched(model, view.camera, view.pose, cfg, pool);
    (void)depth;
    rendered.push_back(std::move(img));
  }
  return rendered;
}

inline std::vector<ImageF> load_clean_images(const std::string& clean_dir,
                                             const std::vector<ViewRecord>& views) {
  namespace fs = std::filesystem;
  std::vector<ImageF> clean;
  clean.reserve(views.size());
  for (const ViewRecord& view : views) {
    const fs::path path = fs::path(clean_dir) / (view.name + ".png");
    clean.push_back(read_png_rgb(path.string()));
  }
  return clean;
}

// Renders the trained model at every training pose and scores it against the
// clean oracle images under the masked evaluation protocol.
inline EvalReport evaluate_model(const NerfModel<float>& model,
                                 const std::vector<ViewRecord>& views,
                                 const std::vector<ImageF>& clean, EvalRegion region,
                                 ThreadPool& pool) {
  const std::vector<ImageF> rendered = render_dataset_views(model, views, pool);
  std::vector<std::vector<BBox>> boxes;
  boxes.reserve(views.size());
  for (const ViewRecord& view : views) boxes.push_back(view.boxes);
  return masked_eval(rendered, clean, boxes, region);
}

inline EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                                      const std::string& transforms_path,
                                      const std::string& labels_dir,
                                      const std::string& clean_dir, EvalRegion region,
                                      int threads) {
  const NerfModel<float> model = load_checkpoint(checkpoint_path);
  const auto views = load_dataset(transforms_path, labels_dir);
  const auto clean = load_clean_images(clean_dir, views);
  ThreadPool pool(threads > 0 ? threads
                              : static_cast<int>(std::thread::hardware_concurrency()));
  return evaluate_model(model, views, clean, region, pool);
}

struct ReproResult {
  std::string variant;
  bool masked_training = true;
  double masked_psnr = 0;
  double masked_ssim = 0;
  double lpips_proxy = 0;
};

// One training + evaluation leg of the reproduction pipeline.
inline ReproResult repro_train_and_eval(const std::string& data_dir,
                                        const std::string& out_dir,
                                        const std::string& variant, bool ignore_boxes,
                                        std::uint64_t seed, std::uint64_t iterations,
                                        const TrainConfig& base) {
  namespace fs = std::filesystem;
  TrainConfig cfg = base;
  cfg.seed = seed;
  cfg.iterations = iterations;
  cfg.out_dir = out_dir;
  cfg.ignore_boxes = ignore_boxes;
  cfg.apply_loss_variant(variant);

  const std::string transforms = (fs::path(data_dir) / "transforms.json").string();
  const std::string labels = (fs::path(data_dir) / "labels").string();
  const std::string clean = (fs::path(data_dir) / "clean").string();

  auto views = load_dataset(transforms, labels);
  Trainer trainer(std::move(views), cfg);
  trainer.run();

  // Boxes are evaluated even for the unmasked baseline, so reload them.
  const auto eval_views = load_dataset(transforms, labels);
  const auto clean_images = load_clean_images(clean, eval_views);
  const EvalReport report = evaluate_model(trainer.model(), eval_views, clean_images,
                                           EvalRegion::kBoxInterior, trainer.pool());
  ReproResult result;
  result.variant = variant;
  result.masked_training = !ignore_boxes;
  result.masked_psnr = report.mean_psnr;
  result.masked_ssim = report.mean_ssim;
  result.lpips_proxy = report.mean_lpips_proxy;
  return result;
}

}  // namespace iddr
