#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "iddr/adam.hpp"
#include "iddr/checkpoint.hpp"
#include "iddr/dataset.hpp"
#include "iddr/losses.hpp"
#include "iddr/metrics.hpp"
#include "iddr/model.hpp"
#include "iddr/perceptual.hpp"
#include "iddr/renderer.hpp"
#include "iddr/thread_pool.hpp"

namespace iddr {

struct TrainConfig {
  std::uint64_t iterations = 30000;
  int batch_rays = 4096;
  double lr_start = 2e-3;
  double lr_end = 2e-5;
  LambdaSchedule lambdas;
  double s_scale = 0;       // MVCL scale; 0 selects 1/K for K views
  int n_samples = 128;
  std::uint64_t seed = 0;
  AdamConfig adam;
  int threads = 0;          // 0 selects hardware concurrency
  bool use_mvcl = true;
  bool use_lpips = true;
  int patches_per_step = 4;
  int patch_interval = 1;   // perceptual term applied every k-th iteration
  int patch_size = 32;
  std::uint64_t checkpoint_interval = 0;  // 0 = final checkpoint only
  bool ignore_boxes = false;              // unmasked baseline training
  HashGridConfig grid{16, 1u << 14, 2, 16, 0};  // finest 0 = image resolution
  Vec3<float> background{1.f, 1.f, 1.f};
  double transmittance_cutoff = 1e-7;
  bool jitter = true;
  Aabbd aabb;               // scene bounds of the encoder domain
  double near = 0;          // 0 = derive from the bounds
  double far = 0;
  std::string out_dir;      // empty = keep everything in memory (tests)
  std::string extractor_weights;

  // Ablation variants: A = rgb, B = rgb+lpips, C = rgb+mvcl, D = full.
  void apply_loss_variant(const std::string& name) {
    if (name == "rgb") {
      use_mvcl = false;
      use_lpips = false;
    } else if (name == "rgb+lpips") {
      use_mvcl = false;
      use_lpips = true;
    } else if (name == "rgb+mvcl") {
      use_mvcl = true;
      use_lpips = false;
    } else if (name == "full") {
      use_mvcl = true;
      use_lpips = true;
    } else {
      throw UsageError("unknown loss variant: " + name +
                       " (expected rgb, rgb+lpips, rgb+mvcl or full)");
    }
  }
};

// Exponential decay between the configured endpoints.
inline double lr_at(const TrainConfig& config, std::uint64_t iteration) {
  check(config.lr_start > config.lr_end && config.lr_end > 0,
        "learning rate schedule needs lr_start > lr_end > 0");
  check(iteration < config.iterations, "iteration outside the schedule");
  if (config.iterations == 1) return config.lr_start;
  const double u = static_cast<double>(iteration) /
                   static_cast<double>(config.iterations - 1);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, u);
}

namespace detail {

struct RaySpec {
  const CameraModel* camera = nullptr;
  const Pose* pose = nullptr;
  int view_id = -1;
  int px = 0;
  int py = 0;
};

// Per-worker buffers for one chunk of rays (forward and backward).
struct ChunkScratch {
  struct RayGeom {
    Vec3d origin;
    Vec3d dir;
    int sample_offset = 0;
    int sample_count = 0;   // 0 when the ray misses the encoder domain
    int survivors = 0;      // samples kept after the transmittance cutoff
  };

  std::vector<RayGeom> geom;
  std::vector<float> t_vals, deltas;
  MatX<float> features, sh;
  VecX<float> mask;
  std::vector<LevelInterp<float>> records;
  FieldTape<float> tape;
  std::vector<Vec3<float>> final_color;
  std::vector<float> depth;
  // backward
  VecX<float> d_sigma;
  MatX<float> d_rgb;
  MatX<float> feature_grad;
  FieldBackwardScratch<float> bws;
  std::vector<float> sig_buf, delta_buf, ds_buf;
  std::vector<Vec3<float>> col_buf, dc_buf;
};

inline constexpr int kChunkRays = 32;

// Forward pass over a chunk: sampling, encoding, field evaluation and
// compositing. Fills scratch.final_color / depth per ray and leaves the tape
// in place for an optional backward pass. Pass with_records = false on
// forward-only renders to skip the interpolation records.
inline void forward_chunk(const NerfModel<float>& model, const RaySpec* rays, int n_rays,
                          const RenderConfig& cfg, ChunkScratch& ws,
                          bool with_records = true) {
  const int n = model.n_samples;
  ws.geom.resize(n_rays);
  ws.final_color.assign(n_rays, model.background);
  ws.depth.assign(n_rays, 0.f);

  int total = 0;
  for (int r = 0; r < n_rays; ++r) {
    auto& g = ws.geom[r];
    g = ChunkScratch::RayGeom{};  // scratch is reused; clear stale counts
    g.origin = rays[r].pose->translation;
    g.dir = rays[r].pose->pixel_direction(*rays[r].camera, rays[r].px, rays[r].py);
    Ray ray;
    ray.origin = g.origin;
    ray.direction = g.dir;
    double t0, t1;
    if (!clip_sampling_interval(ray, cfg, t0, t1)) {
      g.sample_count = 0;
      g.sample_offset = total;
      continue;
    }
    g.sample_offset = total;
    g.sample_count = n;
    total += n;
    (void)t0;
    (void)t1;
  }

  ws.t_vals.resize(total);
  ws.deltas.resize(total);
  ws.features.resize(model.grid.feature_dim(), total);
  ws.sh.resize(kShDim, total);
  ws.mask = VecX<float>::Ones(total);
  if (with_records) {
    ws.records.resize(static_cast<std::size_t>(total) * model.grid.config().levels);
  }

  const int levels = model.grid.config().levels;
  for (int r = 0; r < n_rays; ++r) {
    auto& g = ws.geom[r];
    if (g.sample_count == 0) continue;
    Ray ray;
    ray.origin = g.origin;
    ray.direction = g.dir;
    double t0, t1;
    clip_sampling_interval(ray, cfg, t0, t1);
    const std::uint64_t jseed = ray_jitter_seed(
        cfg.seed, rays[r].view_id,
        static_cast<std::uint64_t>(rays[r].py) * 100000 +
            static_cast<std::uint64_t>(rays[r].px),
        cfg.iteration);
    StreamRng rng(jseed);
    float sh_vals[kShDim];
    sh_encode<float>(g.dir.cast<float>().eval(), sh_vals);
    // Stratified samples, inlined to keep the hot loop allocation-free; the
    // math matches sample_ray exactly.
    const double h = (t1 - t0) / g.sample_count;
    const Vec3d inv_extent = cfg.aabb.extent().cwiseInverse();
    double t_prev = 0;
    for (int i = 0; i < g.sample_count; ++i) {
      const int col = g.sample_offset + i;
      const double u = cfg.jitter ? rng.next_double() : 0.5;
      const double t = t0 + (i + u) * h;
      ws.t_vals[col] = static_cast<float>(t);
      if (i > 0) ws.deltas[col - 1] = static_cast<float>(t - t_prev);
      t_prev = t;
      const Vec3d world = g.origin + t * g.dir;
      Vec3<float> p;
      for (int a = 0; a < 3; ++a) {
        const double v = (world[a] - cfg.aabb.lo[a]) * inv_extent[a];
        p[a] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      model.grid.encode_into(p, ws.features.col(col).data(),
                             with_records
                                 ? ws.records.data() + static_cast<std::size_t>(col) * levels
                                 : nullptr);
      for (int k = 0; k < kShDim; ++k) ws.sh(k, col) = sh_vals[k];
    }
    ws.deltas[g.sample_offset + g.sample_count - 1] = static_cast<float>(h);
  }

  if (total > 0) {
    field_forward_batch(model.net, ws.features, ws.sh, ws.mask, ws.tape);
  } else {
    ws.tape.resize(model.net, 0);
  }

  // Composite per ray, truncating once transmittance falls below the cutoff.
  for (int r = 0; r < n_rays; ++r) {
    auto& g = ws.geom[r];
    if (g.sample_count == 0) continue;
    const int off = g.sample_offset;
    int kept = g.sample_count;
    if (cfg.transmittance_cutoff > 0) {
      float log_t = 0.f;
      const float log_cutoff = std::log(static_cast<float>(cfg.transmittance_cutoff));
      for (int i = 0; i < g.sample_count; ++i) {
        log_t -= ws.tape.sigma[off + i] * ws.deltas[off + i];
        if (log_t < log_cutoff) {
          kept = i + 1;
          break;
        }
      }
    }
    g.survivors = kept;
    ws.sig_buf.resize(kept);
    ws.delta_buf.resize(kept);
    ws.col_buf.resize(kept);
    for (int i = 0; i < kept; ++i) {
      ws.sig_buf[i] = ws.tape.sigma[off + i];
      ws.delta_buf[i] = ws.deltas[off + i];
      ws.col_buf[i] = ws.tape.rgb.col(off + i);
    }
    const CompositeResult<float> res =
        composite<float>(ws.sig_buf.data(), ws.col_buf.data(), ws.delta_buf.data(),
                         ws.t_vals.data() + off, kept);
    ws.final_color[r] = res.color + res.transmittance_remainder * model.background;
    ws.depth[r] = res.expected_depth;
  }
}

}  // namespace detail

// Batched whole-frame render sharing the training kernels; used by the CLI
// and evaluation paths where the per-pixel functor renderer would be slow.
inline std::pair<ImageF, ImageF> render_view_batched(const NerfModel<float>& model,
                                                     const CameraModel& camera,
                                                     const Pose& pose,
                                                     const RenderConfig& cfg,
                                                     ThreadPool& pool) {
  ImageF img(camera.width, camera.height, 3);
  ImageF depth(camera.width, camera.height, 1);
  const std::size_t total = static_cast<std::size_t>(camera.width) * camera.height;
  std::vector<detail::ChunkScratch> scratch(pool.size());
  pool.parallel_segments(total, [&](int w, std::size_t begin, std::size_t end) {
    detail::ChunkScratch& ws = scratch[w];
    std::vector<detail::RaySpec> rays(detail::kChunkRays);
    for (std::size_t at = begin; at < end; at += detail::kChunkRays) {
      const int count = static_cast<int>(std::min<std::size_t>(detail::kChunkRays, end - at));
      for (int i = 0; i < count; ++i) {
        const std::size_t pix = at + i;
        rays[i] = {&camera, &pose, -1, static_cast<int>(pix % camera.width),
                   static_cast<int>(pix / camera.width)};
      }
      detail::forward_chunk(model, rays.data(), count, cfg, ws, false);
      for (int i = 0; i < count; ++i) {
        const std::size_t pix = at + i;
        const int x = static_cast<int>(pix % camera.width);
        const int y = static_cast<int>(pix / camera.width);
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = ws.final_color[i][c];
        depth.at(x, y, 0) = ws.depth[i];
      }
    }
  });
  return {std::move(img), std::move(depth)};
}

// End-to-end optimizer: ray batching, fused forward/backward through the
// renderer, field and encoding, Adam updates with exponential lr decay and
// the lambda warm-up, CSV logging and checkpointing.
class Trainer {
 public:
  Trainer(std::vector<ViewRecord> views, const TrainConfig& config)
      : views_(std::move(views)), config_(config),
        pool_(config.threads > 0 ? config.threads
                                 : static_cast<int>(std::thread::hardware_concurrency())) {
    check(views_.size() >= 2, "training needs at least two views");
    if (config_.ignore_boxes) {
      for (auto& v : views_) v.boxes.clear();
    }
    if (config_.grid.finest_resolution == 0) {
      int res = 0;
      for (const auto& v : views_) res = std::max({res, v.image.width(), v.image.height()});
      config_.grid.finest_resolution = res;
    }
    config_.grid.validate();

    model_ = NerfModel<float>(config_.grid, config_.seed);
    model_.aabb = config_.aabb;
    model_.background = config_.background;
    model_.n_samples = config_.n_samples;
    const Vec3d center = 0.5 * (config_.aabb.lo + config_.aabb.hi);
    const double diag = config_.aabb.diagonal();
    if (config_.near > 0) {
      model_.near = config_.near;
    } else {
      model_.near = 1e-3 * diag;
    }
    if (config_.far > 0) {
      model_.far = config_.far;
    } else {
      double far = 0;
      for (const auto& v : views_) {
        far = std::max(far, (v.pose.translation - center).norm() + 0.55 * diag);
      }
      model_.far = far + 0.05 * diag;
    }

    if (config_.s_scale <= 0) config_.s_scale = 1.0 / static_cast<double>(views_.size());
    if (!config_.extractor_weights.empty()) {
      extractor_.load_weights(config_.extractor_weights);
    }

    build_ray_pool();
    register_optimizer();

    worker_field_grads_.resize(pool_.size());
    worker_grid_grads_.resize(pool_.size());
    worker_scratch_.resize(pool_.size());
    for (int w = 0; w < pool_.size(); ++w) {
      worker_field_grads_[w] = FieldGradients<float>(model_.net);
      worker_grid_grads_[w] = GridGradients<float>(config_.grid);
    }
  }

  const NerfModel<float>& model() const { return model_; }
  NerfModel<float>& model() { return model_; }
  std::uint64_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  ThreadPool& pool() { return pool_; }
  AdamOptimizer<float>& optimizer() { return optimizer_; }
  std::size_t ray_pool_size() const { return pool_entries_.size(); }

  // Post-reduction gradients of the most recent step (for tests).
  const FieldGradients<float>& last_field_gradients() const { return worker_field_grads_[0]; }
  const GridGradients<float>& last_grid_gradients() const { return worker_grid_grads_[0]; }

  void resume_from(const std::string& checkpoint_path) {
    std::uint64_t iter = 0;
    model_ = load_checkpoint(checkpoint_path, &iter, &optimizer_);
    iteration_ = iter;
  }

  // One optimization step over a fresh ray batch.
  LossBreakdown step() {
    check(iteration_ < config_.iterations, "training schedule exhausted");
    const std::uint64_t iter = iteration_;
    const double lambda1 = config_.lambdas.lambda1(iter);
    const double lambda2 = config_.lambdas.lambda2(iter);

    draw_batch(iter);
    const bool lpips_now = config_.use_lpips && config_.patches_per_step > 0 &&
                           (iter % static_cast<std::uint64_t>(config_.patch_interval)) == 0;
    if (lpips_now) build_patches(iter);

    for (int w = 0; w < pool_.size(); ++w) {
      worker_field_grads_[w].clear();
      worker_grid_grads_[w].clear();
    }

    // Pass A: supervision rays, fused forward/backward.
    std::vector<double> rgb_partial(pool_.size(), 0.0);
    std::vector<double> mvcl_partial(pool_.size(), 0.0);
    RenderConfig rcfg = model_.render_config(config_.jitter, config_.seed,
                                             config_.transmittance_cutoff);
    rcfg.iteration = iter;
    pool_.parallel_segments(batch_.size(), [&](int w, std::size_t begin, std::size_t end) {
      supervision_segment(w, begin, end, rcfg, lambda1, rgb_partial[w], mvcl_partial[w]);
    });
    double rgb_sum = 0, mvcl_sum = 0;
    for (int w = 0; w < pool_.size(); ++w) {
      rgb_sum += rgb_partial[w];
      mvcl_sum += mvcl_partial[w];
    }
    const double rgb_loss = rgb_sum / static_cast<double>(batch_.size());
    const double mvcl_loss_value =
        config_.use_mvcl ? config_.s_scale * mvcl_sum / static_cast<double>(batch_.size())
                         : 0.0;

    // Pass B: render perceptual patches, then push their gradients back.
    double lpips_value = 0;
    if (lpips_now) {
      pool_.parallel_segments(patch_rays_.size(), [&](int w, std::size_t begin, std::size_t end) {
        patch_forward_segment(w, begin, end, rcfg);
      });
      lpips_value = evaluate_patches();
      pool_.parallel_segments(patch_rays_.size(), [&](int w, std::size_t begin, std::size_t end) {
        patch_backward_segment(w, begin, end, rcfg, lambda2);
      });
    }

    // Deterministic reduction: worker 0 accumulates in worker order.
    for (int w = 1; w < pool_.size(); ++w) {
      worker_field_grads_[0].add(worker_field_grads_[w]);
      worker_grid_grads_[0].add(worker_grid_grads_[w]);
    }

    const LossBreakdown breakdown =
        total_loss(rgb_loss, mvcl_loss_value, lpips_value, config_.lambdas, iter);
    if (!std::isfinite(breakdown.total)) {
      dump_diagnostics(breakdown);
      throw NumericError("non-finite loss at iteration " + std::to_string(iter));
    }

    apply_adam(lr_at(config_, iter));
    ++iteration_;
    return breakdown;
  }

  // Full schedule with CSV logging and checkpoints.
  void run() {
    namespace fs = std::filesystem;
    std::ofstream csv;
    if (!config_.out_dir.empty()) {
      fs::create_directories(config_.out_dir);
      const bool fresh = iteration_ == 0;
      csv.open(fs::path(config_.out_dir) / "loss_log.csv",
               fresh ? std::ios::out : std::ios::app);
      if (fresh) csv << "iteration,rgb,mvcl,lpips,total,lambda1,lambda2\n";
      csv << std::setprecision(10);
    }
    while (iteration_ < config_.iterations) {
      if (epoch_audit_due_) {
        audit_ray_pool();
        epoch_audit_due_ = false;
      }
      const std::uint64_t iter = iteration_;
      const LossBreakdown loss = step();
      if (csv.is_open()) {
        csv << iter << "," << loss.rgb << "," << loss.mvcl << "," << loss.lpips << ","
            << loss.total << "," << loss.lambda1 << "," << loss.lambda2 << "\n";
      }
      if (!config_.out_dir.empty() && config_.checkpoint_interval > 0 &&
          iteration_ % config_.checkpoint_interval == 0 &&
          iteration_ < config_.iterations) {
        save_checkpoint(checkpoint_path(iteration_), model_, iteration_, &optimizer_);
      }
    }
    if (!config_.out_dir.empty()) {
      save_checkpoint(checkpoint_path(iteration_), model_, iteration_, &optimizer_);
    }
  }

  std::string checkpoint_path(std::uint64_t iteration) const {
    return (std::filesystem::path(config_.out_dir) /
            ("ckpt_" + std::to_string(iteration) + ".bin")).string();
  }

  // Every pool entry must still be unmasked; cheap enough to re-check at
  // epoch boundaries.
  void audit_ray_pool() const {
    for (const auto entry : pool_entries_) {
      const int view = static_cast<int>(entry >> 32);
      const int pix = static_cast<int>(entry & 0xffffffffu);
      const int x = pix % views_[view].image.width();
      const int y = pix / views_[view].image.width();
      check(mask_weight(x, y, views_[view].boxes).value == 1.0,
            "supervision pool contains a masked ray");
    }
  }

 private:
  struct RayTask {
    int view = 0;
    int px = 0;
    int py = 0;
    Vec3<float> target = Vec3<float>::Zero();
    int patch_id = -1;
    int patch_pixel = -1;
  };

  void build_ray_pool() {
    pool_entries_.clear();
    for (const auto& view : views_) {
      const int w = view.image.width(), h = view.image.height();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!pixel_in_boxes(x, y, view.boxes)) {
            pool_entries_.push_back((static_cast<std::uint64_t>(view.view_id) << 32) |
                                    static_cast<std::uint64_t>(y * w + x));
          }
        }
      }
    }
    check(!pool_entries_.empty(), "no supervision: every pixel is masked");
  }

  void register_optimizer() {
    optimizer_ = AdamOptimizer<float>(config_.adam);
    auto reg = [&](const auto& array) {
      return optimizer_.register_parameters(static_cast<std::size_t>(array.size()));
    };
    for (DenseLayer<float>* layer : layer_list()) {
      reg(layer->weight);
      reg(layer->bias);
    }
    for (int l = 0; l < config_.grid.levels; ++l) {
      optimizer_.register_parameters(model_.grid.table(l).size());
    }
  }

  std::array<DenseLayer<float>*, 6> layer_list() {
    return {&model_.net.d1, &model_.net.d2, &model_.net.d3,
            &model_.net.c1, &model_.net.c2, &model_.net.c3};
  }
  std::array<LayerGradients<float>*, 6> grad_list() {
    auto& g = worker_field_grads_[0];
    return {&g.d1, &g.d2, &g.d3, &g.c1, &g.c2, &g.c3};
  }

  // Epoch permutations are a pure function of (seed, epoch); batches resume
  // exactly after checkpoint restore.
  void ensure_epoch(std::uint64_t epoch) {
    if (perm_valid_ && perm_epoch_ == epoch) return;
    perm_.resize(pool_entries_.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<std::uint32_t>(i);
    StreamRng rng(mix_seed(config_.seed, 0x65706f63ull + epoch));
    for (std::size_t i = perm_.size(); i > 1; --i) {
      const std::size_t j = rng.next_below(i);
      std::swap(perm_[i - 1], perm_[j]);
    }
    perm_epoch_ = epoch;
    perm_valid_ = true;
    if (epoch > 0) epoch_audit_due_ = true;
  }

  void draw_batch(std::uint64_t iter) {
    batch_.clear();
    batch_.reserve(config_.batch_rays);
    const std::uint64_t pool_n = pool_entries_.size();
    std::uint64_t cursor = iter * static_cast<std::uint64_t>(config_.batch_rays);
    for (int j = 0; j < config_.batch_rays; ++j, ++cursor) {
      ensure_epoch(cursor / pool_n);
      const std::uint64_t entry = pool_entries_[perm_[cursor % pool_n]];
      RayTask task;
      task.view = static_cast<int>(entry >> 32);
      const int pix = static_cast<int>(entry & 0xffffffffu);
      const auto& img = views_[task.view].image;
      task.px = pix % img.width();
      task.py = pix / img.width();
      for (int c = 0; c < 3; ++c) task.target[c] = img.at(task.px, task.py, c);
      batch_.push_back(task);
    }
  }

  void build_patches(std::uint64_t iter) {
    patch_rays_.clear();
    patches_.clear();
    const int p = config_.patch_size;
    StreamRng rng(mix_seed(config_.seed, 0x70617463ull + iter * 2654435761ull));
    std::vector<int> boxed_views;
    for (const auto& v : views_) {
      if (!v.boxes.empty() && v.image.width() >= p && v.image.height() >= p) {
        boxed_views.push_back(v.view_id);
      }
    }
    for (int k = 0; k < config_.patches_per_step; ++k) {
      int view_id;
      double cx, cy;
      if (!boxed_views.empty()) {
        view_id = boxed_views[rng.next_below(boxed_views.size())];
        const auto& boxes = views_[view_id].boxes;
        const BBox& box = boxes[rng.next_below(boxes.size())];
        cx = rng.next_double(box.x0, box.x1);
        cy = rng.next_double(box.y0, box.y1);
      } else {
        // No boxes anywhere (unmasked baseline): uniform placement keeps the
        // compute budget identical.
        view_id = static_cast<int>(rng.next_below(views_.size()));
        cx = rng.next_double(0, views_[view_id].image.width());
        cy = rng.next_double(0, views_[view_id].image.height());
      }
      const auto& img = views_[view_id].image;
      if (img.width() < p || img.height() < p) continue;
      const int ox = std::clamp(static_cast<int>(std::lround(cx)) - p / 2, 0, img.width() - p);
      const int oy = std::clamp(static_cast<int>(std::lround(cy)) - p / 2, 0, img.height() - p);
      PatchState patch;
      patch.view = view_id;
      patch.origin_x = ox;
      patch.origin_y = oy;
      for (int c = 0; c < 3; ++c) patch.rendered.plane[c] = MatX<float>::Zero(p, p);
      patch.grad = Patch<float>();
      const int patch_id = static_cast<int>(patches_.size());
      patches_.push_back(std::move(patch));
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          RayTask task;
          task.view = view_id;
          task.px = ox + x;
          task.py = oy + y;
          task.patch_id = patch_id;
          task.patch_pixel = y * p + x;
          patch_rays_.push_back(task);
        }
      }
    }
  }

  void fill_specs(const RayTask* tasks, int count, std::vector<detail::RaySpec>& specs) {
    specs.resize(count);
    for (int i = 0; i < count; ++i) {
      specs[i] = {&views_[tasks[i].view].camera, &views_[tasks[i].view].pose,
                  tasks[i].view, tasks[i].px, tasks[i].py};
    }
  }

  void supervision_segment(int w, std::size_t begin, std::size_t end,
                           const RenderConfig& rcfg, double lambda1, double& rgb_sum,
                           double& mvcl_sum) {
    detail::ChunkScratch& ws = worker_scratch_[w];
    std::vector<detail::RaySpec> specs;
    const double inv_batch = 1.0 / static_cast<double>(batch_.size());
    for (std::size_t at = begin; at < end; at += detail::kChunkRays) {
      const int count = static_cast<int>(std::min<std::size_t>(detail::kChunkRays, end - at));
      fill_specs(batch_.data() + at, count, specs);
      detail::forward_chunk(model_, specs.data(), count, rcfg, ws);

      // Per-ray loss gradients.
      const int total = static_cast<int>(ws.tape.count);
      ws.d_sigma = VecX<float>::Zero(total);
      ws.d_rgb = MatX<float>::Zero(3, total);
      bool any_backward = false;
      for (int r = 0; r < count; ++r) {
        const RayTask& task = batch_[at + r];
        const auto& g = ws.geom[r];
        const Vec3<float> residual = ws.final_color[r] - task.target;
        const double norm = residual.norm();
        rgb_sum += norm;
        double coeff = inv_batch;
        if (config_.use_mvcl) {
          Ray ray;
          ray.origin = g.origin;
          ray.direction = g.dir;
          const double depth = std::max(static_cast<double>(ws.depth[r]), 1e-6);
          const int n_r = mvcl_count(ray, views_, depth);
          mvcl_sum += static_cast<double>(n_r) * norm;
          coeff += lambda1 * config_.s_scale * static_cast<double>(n_r) * inv_batch;
        }
        if (g.sample_count == 0 || norm <= kResidualFloor) continue;
        const Vec3<float> grad_color = residual * static_cast<float>(coeff / norm);
        backward_ray(ws, r, grad_color);
        any_backward = true;
      }
      if (any_backward) backward_chunk(w, ws);
    }
  }

  void patch_forward_segment(int w, std::size_t begin, std::size_t end,
                             const RenderConfig& rcfg) {
    detail::ChunkScratch& ws = worker_scratch_[w];
    std::vector<detail::RaySpec> specs;
    const int p = config_.patch_size;
    for (std::size_t at = begin; at < end; at += detail::kChunkRays) {
      const int count = static_cast<int>(std::min<std::size_t>(detail::kChunkRays, end - at));
      fill_specs(patch_rays_.data() + at, count, specs);
      detail::forward_chunk(model_, specs.data(), count, rcfg, ws, false);
      for (int r = 0; r < count; ++r) {
        const RayTask& task = patch_rays_[at + r];
        PatchState& patch = patches_[task.patch_id];
        const int y = task.patch_pixel / p, x = task.patch_pixel % p;
        for (int c = 0; c < 3; ++c) patch.rendered.plane[c](y, x) = ws.final_color[r][c];
      }
    }
  }

  double evaluate_patches() {
    if (patches_.empty()) return 0;
    double sum = 0;
    for (PatchState& patch : patches_) {
      PatchPair<float> pair;
      pair.rendered = patch.rendered;
      pair.target = Patch<float>::from_image(views_[patch.view].image, patch.origin_x,
                                             patch.origin_y, config_.patch_size);
      pair.origin_x = patch.origin_x;
      pair.origin_y = patch.origin_y;
      pair.view_id = patch.view;
      PerceptualLoss<float> loss = perceptual_loss(pair, extractor_);
      sum += loss.value;
      patch.grad = std::move(loss.grad);
    }
    return sum / static_cast<double>(patches_.size());
  }

  void patch_backward_segment(int w, std::size_t begin, std::size_t end,
                              const RenderConfig& rcfg, double lambda2) {
    detail::ChunkScratch& ws = worker_scratch_[w];
    std::vector<detail::RaySpec> specs;
    const int p = config_.patch_size;
    const float scale = static_cast<float>(lambda2 / static_cast<double>(patches_.size()));
    for (std::size_t at = begin; at < end; at += detail::kChunkRays) {
      const int count = static_cast<int>(std::min<std::size_t>(detail::kChunkRays, end - at));
      fill_specs(patch_rays_.data() + at, count, specs);
      detail::forward_chunk(model_, specs.data(), count, rcfg, ws);
      const int total = static_cast<int>(ws.tape.count);
      ws.d_sigma = VecX<float>::Zero(total);
      ws.d_rgb = MatX<float>::Zero(3, total);
      bool any_backward = false;
      for (int r = 0; r < count; ++r) {
        const RayTask& task = patch_rays_[at + r];
        if (ws.geom[r].sample_count == 0) continue;
        const PatchState& patch = patches_[task.patch_id];
        const int y = task.patch_pixel / p, x = task.patch_pixel % p;
        Vec3<float> grad_color(patch.grad.plane[0](y, x), patch.grad.plane[1](y, x),
                               patch.grad.plane[2](y, x));
        grad_color *= scale;
        if (grad_color.squaredNorm() == 0.f) continue;
        backward_ray(ws, r, grad_color);
        any_backward = true;
      }
      if (any_backward) backward_chunk(w, ws);
    }
  }

  // Composite backward for one ray of the current chunk; writes the
  // per-sample gradients into the chunk-wide buffers.
  void backward_ray(detail::ChunkScratch& ws, int r, const Vec3<float>& grad_color) {
    const auto& g = ws.geom[r];
    const int off = g.sample_offset;
    const int kept = g.survivors;
    if (kept == 0) return;
    ws.sig_buf.resize(kept);
    ws.delta_buf.resize(kept);
    ws.col_buf.resize(kept);
    ws.ds_buf.resize(kept);
    ws.dc_buf.resize(kept);
    for (int i = 0; i < kept; ++i) {
      ws.sig_buf[i] = ws.tape.sigma[off + i];
      ws.delta_buf[i] = ws.deltas[off + i];
      ws.col_buf[i] = ws.tape.rgb.col(off + i);
    }
    composite_backward<float>(ws.sig_buf.data(), ws.col_buf.data(), ws.delta_buf.data(),
                              kept, model_.background, grad_color, ws.ds_buf.data(),
                              ws.dc_buf.data());
    for (int i = 0; i < kept; ++i) {
      ws.d_sigma[off + i] = ws.ds_buf[i];
      ws.d_rgb.col(off + i) = ws.dc_buf[i];
    }
  }

  // Field + encoding backward over the whole chunk (zero gradient columns for
  // dropped samples flow through as zeros).
  void backward_chunk(int w, detail::ChunkScratch& ws) {
    field_backward_batch(model_.net, ws.tape, ws.d_sigma, ws.d_rgb, worker_field_grads_[w],
                         ws.feature_grad, ws.bws);
    const int levels = config_.grid.levels;
    for (const auto& g : ws.geom) {
      for (int i = 0; i < g.survivors; ++i) {
        const int col = g.sample_offset + i;
        encode_backward<float>(config_.grid, ws.feature_grad.col(col).data(),
                               ws.records.data() + static_cast<std::size_t>(col) * levels,
                               worker_grid_grads_[w]);
      }
    }
  }

  void apply_adam(double lr) {
    optimizer_.begin_step(lr);
    int slot = 0;
    auto layers = layer_list();
    auto grads = grad_list();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      optimizer_.update_dense(slot++, layers[i]->weight.data(), grads[i]->weight.data(),
                              layers[i]->weight.size());
      optimizer_.update_dense(slot++, layers[i]->bias.data(), grads[i]->bias.data(),
                              layers[i]->bias.size());
    }
    for (int l = 0; l < config_.grid.levels; ++l) {
      optimizer_.update_touched_rows(slot++, model_.grid.table(l).data(),
                                     worker_grid_grads_[0].table(l).data(),
                                     worker_grid_grads_[0].touched(l),
                                     config_.grid.features);
    }
  }

  void dump_diagnostics(const LossBreakdown& loss) const {
    std::ostringstream out;
    out << "non-finite loss: rgb=" << loss.rgb << " mvcl=" << loss.mvcl
        << " lpips=" << loss.lpips << " iteration=" << iteration_ << "\n";
    out << "offending batch (view, px, py), first " << std::min<std::size_t>(batch_.size(), 32)
        << " rays:\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(batch_.size(), 32); ++i) {
      out << "  (" << batch_[i].view << ", " << batch_[i].px << ", " << batch_[i].py << ")\n";
    }
    std::cerr << out.str();
    if (!config_.out_dir.empty()) {
      std::ofstream dump(std::filesystem::path(config_.out_dir) / "diagnostic_dump.txt");
      dump << out.str();
    }
  }

  struct PatchState {
    int view = 0;
    int origin_x = 0;
    int origin_y = 0;
    Patch<float> rendered;
    Patch<float> grad;
  };

  std::vector<ViewRecord> views_;
  TrainConfig config_;
  ThreadPool pool_;
  NerfModel<float> model_;
  AdamOptimizer<float> optimizer_;
  FilterBankExtractor<float> extractor_;

  std::vector<std::uint64_t> pool_entries_;
  std::vector<std::uint32_t> perm_;
  std::uint64_t perm_epoch_ = 0;
  bool perm_valid_ = false;
  bool epoch_audit_due_ = true;  // audit before the first step as well

  std::vector<RayTask> batch_;
  std::vector<RayTask> patch_rays_;
  std::vector<PatchState> patches_;

  std::vector<FieldGradients<float>> worker_field_grads_;
  std::vector<GridGradients<float>> worker_grid_grads_;
  std::vector<detail::ChunkScratch> worker_scratch_;

  std::uint64_t iteration_ = 0;
};

}  // namespace iddr
