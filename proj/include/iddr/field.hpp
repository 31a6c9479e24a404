#pragma once

#include <vector>

#include "iddr/bbox.hpp"
#include "iddr/common.hpp"
#include "iddr/hash_encoding.hpp"
#include "iddr/sh.hpp"

namespace iddr {

// Per-ray supervision switch: 0 for rays whose source pixel sits inside a
// detector box of their own view, 1 otherwise. Applied multiplicatively to
// the encoded features, so 0 blanks every level.
struct MaskWeight {
  double value = 1.0;

  MaskWeight() = default;
  explicit MaskWeight(double v) : value(v) {
    check(v == 0.0 || v == 1.0, "mask weight must be exactly 0 or 1");
  }
};

inline MaskWeight mask_weight(double pixel_x, double pixel_y,
                              const std::vector<BBox>& boxes) {
  return MaskWeight(pixel_in_boxes(pixel_x, pixel_y, boxes) ? 0.0 : 1.0);
}

template <typename S>
struct DenseLayer {
  MatX<S> weight;  // rows = outputs, cols = inputs
  VecX<S> bias;

  void init(int out_dim, int in_dim, StreamRng& rng) {
    weight.resize(out_dim, in_dim);
    bias = VecX<S>::Zero(out_dim);
    const double limit = std::sqrt(6.0 / in_dim);
    for (int c = 0; c < in_dim; ++c) {
      for (int r = 0; r < out_dim; ++r) {
        weight(r, c) = static_cast<S>(rng.next_double(-limit, limit));
      }
    }
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(weight.size()) + static_cast<std::size_t>(bias.size());
  }
};

template <typename S>
struct LayerGradients {
  MatX<S> weight;
  VecX<S> bias;

  void match(const DenseLayer<S>& layer) {
    weight = MatX<S>::Zero(layer.weight.rows(), layer.weight.cols());
    bias = VecX<S>::Zero(layer.bias.size());
  }
  void clear() {
    weight.setZero();
    bias.setZero();
  }
  void add(const LayerGradients& o) {
    weight += o.weight;
    bias += o.bias;
  }
};

// Tiny two-head MLP mapping masked hash features to density and color.
// Density head: L*F -> hidden -> hidden -> (1 raw density + geo features).
// Color head: (geo features + SH-encoded direction) -> hidden -> hidden -> 3.
// Gradients are hand-rolled; forward keeps a tape of post-activation values.
template <typename S>
struct FieldNetwork {
  static constexpr int kHidden = 64;
  static constexpr int kGeoFeatures = 15;
  static constexpr S kSigmaRawClamp = S(10);  // exp overflow guard

  int feature_dim = 32;  // L*F of the paired hash grid
  DenseLayer<S> d1, d2, d3;  // density head
  DenseLayer<S> c1, c2, c3;  // color head

  FieldNetwork() = default;

  FieldNetwork(int feature_dim_, std::uint64_t seed) : feature_dim(feature_dim_) {
    StreamRng rng(mix_seed(seed, 0x6d6c70u));
    d1.init(kHidden, feature_dim, rng);
    d2.init(kHidden, kHidden, rng);
    d3.init(1 + kGeoFeatures, kHidden, rng);
    c1.init(kHidden, kGeoFeatures + kShDim, rng);
    c2.init(kHidden, kHidden, rng);
    c3.init(3, kHidden, rng);
  }

  std::size_t parameter_count() const {
    return d1.parameter_count() + d2.parameter_count() + d3.parameter_count() +
           c1.parameter_count() + c2.parameter_count() + c3.parameter_count();
  }
};

template <typename S>
struct FieldGradients {
  LayerGradients<S> d1, d2, d3, c1, c2, c3;

  FieldGradients() = default;
  explicit FieldGradients(const FieldNetwork<S>& net) {
    d1.match(net.d1);
    d2.match(net.d2);
    d3.match(net.d3);
    c1.match(net.c1);
    c2.match(net.c2);
    c3.match(net.c3);
  }
  void clear() {
    d1.clear(); d2.clear(); d3.clear();
    c1.clear(); c2.clear(); c3.clear();
  }
  void add(const FieldGradients& o) {
    d1.add(o.d1); d2.add(o.d2); d3.add(o.d3);
    c1.add(o.c1); c2.add(o.c2); c3.add(o.c3);
  }
};

// Forward tape over a batch of sample points (columns). Buffers are reused
// across batches; resize only grows capacity.
template <typename S>
struct FieldTape {
  int count = 0;
  MatX<S> features;   // feature_dim x m, already mask-scaled
  VecX<S> mask;       // per-column mask weight, needed to push grads past it
  MatX<S> h1, h2;     // density hidden activations (post-ReLU)
  MatX<S> draw;       // density head raw output, (1+geo) x m
  MatX<S> color_in;   // (geo + sh) x m
  MatX<S> g1, g2;     // color hidden activations
  MatX<S> rgb;        // sigmoid outputs, 3 x m
  VecX<S> sigma;      // exp density, m

  void resize(const FieldNetwork<S>& net, int m) {
    count = m;
    features.resize(net.feature_dim, m);
    mask.resize(m);
    h1.resize(FieldNetwork<S>::kHidden, m);
    h2.resize(FieldNetwork<S>::kHidden, m);
    draw.resize(1 + FieldNetwork<S>::kGeoFeatures, m);
    color_in.resize(FieldNetwork<S>::kGeoFeatures + kShDim, m);
    g1.resize(FieldNetwork<S>::kHidden, m);
    g2.resize(FieldNetwork<S>::kHidden, m);
    rgb.resize(3, m);
    sigma.resize(m);
  }
};

// Batched forward. `features` columns are raw encoder outputs; `sh` columns
// the direction encodings; `mask` per-column weights. sigma is non-negative
// and rgb lands in [0,1] by construction.
template <typename S>
inline void field_forward_batch(const FieldNetwork<S>& net, const MatX<S>& features,
                                const MatX<S>& sh, const VecX<S>& mask,
                                FieldTape<S>& tape) {
  const int m = static_cast<int>(features.cols());
  check(features.rows() == net.feature_dim, "feature dimension mismatch");
  check(sh.rows() == kShDim && sh.cols() == m, "sh encoding shape mismatch");
  check(mask.size() == m, "mask length mismatch");
  check(features.allFinite(), "non-finite encoder features");

  tape.resize(net, m);
  tape.features = features.array().rowwise() * mask.transpose().array();
  tape.mask = mask;

  tape.h1.noalias() = net.d1.weight * tape.features;
  tape.h1.colwise() += net.d1.bias;
  tape.h1 = tape.h1.cwiseMax(S(0));

  tape.h2.noalias() = net.d2.weight * tape.h1;
  tape.h2.colwise() += net.d2.bias;
  tape.h2 = tape.h2.cwiseMax(S(0));

  tape.draw.noalias() = net.d3.weight * tape.h2;
  tape.draw.colwise() += net.d3.bias;

  tape.sigma = tape.draw.row(0).transpose().cwiseMin(FieldNetwork<S>::kSigmaRawClamp)
                   .array().exp();

  tape.color_in.topRows(FieldNetwork<S>::kGeoFeatures) =
      tape.draw.bottomRows(FieldNetwork<S>::kGeoFeatures);
  tape.color_in.bottomRows(kShDim) = sh;

  tape.g1.noalias() = net.c1.weight * tape.color_in;
  tape.g1.colwise() += net.c1.bias;
  tape.g1 = tape.g1.cwiseMax(S(0));

  tape.g2.noalias() = net.c2.weight * tape.g1;
  tape.g2.colwise() += net.c2.bias;
  tape.g2 = tape.g2.cwiseMax(S(0));

  tape.rgb.noalias() = net.c3.weight * tape.g2;
  tape.rgb.colwise() += net.c3.bias;
  tape.rgb = (S(1) / (S(1) + (-tape.rgb.array()).exp())).matrix();
}

// Workspace for the batched backward pass.
template <typename S>
struct FieldBackwardScratch {
  MatX<S> d_draw, d_h2, d_h1, d_color_in, d_g2, d_g1, d_e;
};

// Reverse-mode pass. grad_sigma (m) and grad_rgb (3 x m) are d(loss)/d(sigma)
// and d(loss)/d(color); parameter gradients are accumulated into `grads` and
// d(loss)/d(encoder features), mask included, is written to feature_grad.
template <typename S>
inline void field_backward_batch(const FieldNetwork<S>& net, const FieldTape<S>& tape,
                                 const VecX<S>& grad_sigma, const MatX<S>& grad_rgb,
                                 FieldGradients<S>& grads, MatX<S>& feature_grad,
                                 FieldBackwardScratch<S>& ws) {
  const int m = tape.count;
  check(grad_sigma.size() == m && grad_rgb.cols() == m && grad_rgb.rows() == 3,
        "field backward gradient shape mismatch");

  // Color head: through the sigmoid first.
  ws.d_e = grad_rgb.array() * tape.rgb.array() * (S(1) - tape.rgb.array());
  grads.c3.weight.noalias() += ws.d_e * tape.g2.transpose();
  grads.c3.bias.noalias() += ws.d_e.rowwise().sum();

  ws.d_g2.noalias() = net.c3.weight.transpose() * ws.d_e;
  ws.d_g2 = (tape.g2.array() > S(0)).select(ws.d_g2, S(0));
  grads.c2.weight.noalias() += ws.d_g2 * tape.g1.transpose();
  grads.c2.bias.noalias() += ws.d_g2.rowwise().sum();

  ws.d_g1.noalias() = net.c2.weight.transpose() * ws.d_g2;
  ws.d_g1 = (tape.g1.array() > S(0)).select(ws.d_g1, S(0));
  grads.c1.weight.noalias() += ws.d_g1 * tape.color_in.transpose();
  grads.c1.bias.noalias() += ws.d_g1.rowwise().sum();

  ws.d_color_in.noalias() = net.c1.weight.transpose() * ws.d_g1;

  // Density head: raw density gradient plus the geo-feature path from above.
  ws.d_draw.resize(1 + FieldNetwork<S>::kGeoFeatures, m);
  ws.d_draw.row(0) =
      (grad_sigma.array() * tape.sigma.array() *
       (tape.draw.row(0).transpose().array() < FieldNetwork<S>::kSigmaRawClamp)
           .template cast<S>())
          .transpose();
  ws.d_draw.bottomRows(FieldNetwork<S>::kGeoFeatures) =
      ws.d_color_in.topRows(FieldNetwork<S>::kGeoFeatures);

  grads.d3.weight.noalias() += ws.d_draw * tape.h2.transpose();
  grads.d3.bias.noalias() += ws.d_draw.rowwise().sum();

  ws.d_h2.noalias() = net.d3.weight.transpose() * ws.d_draw;
  ws.d_h2 = (tape.h2.array() > S(0)).select(ws.d_h2, S(0));
  grads.d2.weight.noalias() += ws.d_h2 * tape.h1.transpose();
  grads.d2.bias.noalias() += ws.d_h2.rowwise().sum();

  ws.d_h1.noalias() = net.d2.weight.transpose() * ws.d_h2;
  ws.d_h1 = (tape.h1.array() > S(0)).select(ws.d_h1, S(0));
  grads.d1.weight.noalias() += ws.d_h1 * tape.features.transpose();
  grads.d1.bias.noalias() += ws.d_h1.rowwise().sum();

  // Through the mask scaling back to the raw encoder output.
  feature_grad.noalias() = net.d1.weight.transpose() * ws.d_h1;
  feature_grad = feature_grad.array().rowwise() * tape.mask.transpose().array();
}

// Single-sample wrappers matching the per-ray contracts. The tape they return
// is a one-column batch tape.
template <typename S>
struct FieldSample {
  S sigma;
  Vec3<S> color;
  FieldTape<S> tape;
};

template <typename S>
inline FieldSample<S> field_forward(const FieldNetwork<S>& net, const VecX<S>& encoded,
                                    const Vec3<S>& view_dir, const MaskWeight& w) {
  check(encoded.allFinite() && view_dir.allFinite(), "non-finite field input");
  check(std::abs(view_dir.norm() - S(1)) <= S(1e-6), "view direction must be unit length");
  MatX<S> features = encoded;
  MatX<S> sh(kShDim, 1);
  sh_encode<S>(view_dir, sh.data());
  VecX<S> mask(1);
  mask[0] = static_cast<S>(w.value);
  FieldSample<S> out;
  field_forward_batch(net, features, sh, mask, out.tape);
  out.sigma = out.tape.sigma[0];
  out.color = out.tape.rgb.col(0);
  return out;
}

template <typename S>
inline std::pair<FieldGradients<S>, VecX<S>> field_backward(const FieldNetwork<S>& net,
                                                            const FieldTape<S>& tape,
                                                            S grad_sigma,
                                                            const Vec3<S>& grad_color) {
  check(tape.count == 1, "single-sample backward expects a one-column tape");
  FieldGradients<S> grads(net);
  VecX<S> gs(1);
  gs[0] = grad_sigma;
  MatX<S> gc = grad_color;
  MatX<S> feature_grad;
  FieldBackwardScratch<S> ws;
  field_backward_batch(net, tape, gs, gc, grads, feature_grad, ws);
  return {std::move(grads), VecX<S>(feature_grad.col(0))};
}

}  // namespace iddr
