#pragma once

#include "iddr/common.hpp"
#include "iddr/field.hpp"
#include "iddr/hash_encoding.hpp"
#include "iddr/renderer.hpp"

namespace iddr {

// Trained scene representation plus the rendering constants that traveled
// with it during optimization.
template <typename S>
struct NerfModel {
  HashGrid<S> grid;
  FieldNetwork<S> net;
  Aabbd aabb;
  Vec3<float> background{1.f, 1.f, 1.f};
  double near = 0.05;
  double far = 4.0;
  int n_samples = 128;

  NerfModel() = default;
  NerfModel(const HashGridConfig& grid_config, std::uint64_t seed)
      : grid(grid_config, seed),
        net(grid_config.levels * grid_config.features, seed) {}

  RenderConfig render_config(bool jitter = false, std::uint64_t seed = 0,
                             double cutoff = 1e-7) const {
    RenderConfig cfg;
    cfg.near = near;
    cfg.far = far;
    cfg.n_samples = n_samples;
    cfg.jitter = jitter;
    cfg.seed = seed;
    cfg.aabb = aabb;
    cfg.background = background;
    cfg.transmittance_cutoff = cutoff;
    return cfg;
  }

  // Single-point evaluation for the generic per-pixel renderer and tests.
  // Positions outside the encoder domain contribute nothing.
  std::pair<double, Vec3d> eval_point(const Vec3d& world, const Vec3d& dir) const {
    const Vec3<S> p = aabb.normalize(world).template cast<S>();
    if ((p.array() < S(0)).any() || (p.array() > S(1)).any()) {
      return {0.0, Vec3d::Zero()};
    }
    thread_local FieldTape<S> tape;
    MatX<S> features(grid.feature_dim(), 1);
    grid.encode_into(p, features.data(), nullptr);
    MatX<S> sh(kShDim, 1);
    sh_encode<S>(dir.normalized().cast<S>().eval(), sh.data());
    VecX<S> mask = VecX<S>::Ones(1);
    field_forward_batch(net, features, sh, mask, tape);
    return {static_cast<double>(tape.sigma[0]), tape.rgb.col(0).template cast<double>()};
  }

  // Functor adapter for render_image / render_pixel.
  auto field_functor() const {
    return [this](const Vec3d& pos, const Vec3d& dir) { return eval_point(pos, dir); };
  }
};

}  // namespace iddr
