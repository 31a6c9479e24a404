#pragma once

#include <array>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "iddr/common.hpp"
#include "iddr/image.hpp"
#include "iddr/losses.hpp"

namespace iddr {

// A P x P x 3 patch stored as three channel planes.
template <typename S>
struct Patch {
  std::array<MatX<S>, 3> plane;

  int size() const { return static_cast<int>(plane[0].rows()); }

  static Patch from_image(const ImageF& img, int x0, int y0, int p) {
    check(x0 >= 0 && y0 >= 0 && x0 + p <= img.width() && y0 + p <= img.height(),
          "patch exceeds image bounds");
    Patch out;
    for (int c = 0; c < 3; ++c) {
      out.plane[c].resize(p, p);
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          out.plane[c](y, x) = static_cast<S>(img.at(x0 + x, y0 + y, c));
        }
      }
    }
    return out;
  }
};

template <typename S>
struct PatchPair {
  Patch<S> rendered;
  Patch<S> target;
  int origin_x = 0;
  int origin_y = 0;
  int view_id = -1;

  void validate() const {
    const int p = rendered.size();
    check(p >= 8, "patch side must be at least 8");
    for (int c = 0; c < 3; ++c) {
      check(rendered.plane[c].rows() == p && rendered.plane[c].cols() == p &&
            target.plane[c].rows() == p && target.plane[c].cols() == p,
            "patch pair shape mismatch");
    }
  }
};

// Fixed multi-scale filter bank standing in for a learned perceptual
// backbone: per channel a 3x3 Gaussian, two oriented first derivatives and a
// Laplacian, repeated over 3 dyadic scales with 2x average-pool between them.
// Feature vectors are unit-normalized across the 12 filter-channel maps at
// each location before the L2 distance, and each map can carry an externally
// supplied weight. The final distance is scaled by 1/sqrt(#features) so its
// magnitude is an RMS over locations and does not grow with patch size.
template <typename S>
class FilterBankExtractor {
 public:
  static constexpr int kScales = 3;
  static constexpr int kKernels = 4;
  static constexpr int kMaps = kKernels * 3;  // per scale, over RGB
  static constexpr double kNormEps = 1e-2;    // feature-norm floor

  FilterBankExtractor() {
    // clang-format off
    kernels_[0] << S(1)/16, S(2)/16, S(1)/16,
                   S(2)/16, S(4)/16, S(2)/16,
                   S(1)/16, S(2)/16, S(1)/16;
    kernels_[1] << S(-1)/8, S(0), S(1)/8,
                   S(-2)/8, S(0), S(2)/8,
                   S(-1)/8, S(0), S(1)/8;
    kernels_[2] << S(-1)/8, S(-2)/8, S(-1)/8,
                   S(0),    S(0),    S(0),
                   S(1)/8,  S(2)/8,  S(1)/8;
    kernels_[3] << S(0),    S(1)/4, S(0),
                   S(1)/4, S(-1),   S(1)/4,
                   S(0),    S(1)/4, S(0);
    // clang-format on
    for (auto& w : map_weights_) w.assign(kMaps, S(1));
  }

  // Minimum patch side such that the coarsest scale still fits one 3x3
  // window: the patch is pooled by 2 between scales.
  static int min_patch_size() { return 3 << (kScales - 1); }

  const Eigen::Matrix<S, 3, 3>& kernel(int k) const { return kernels_[k]; }
  S map_weight(int scale, int map) const { return map_weights_[scale][map]; }

  // Loads per-map weights from JSON: {"scales": [[12 reals], [12], [12]]}.
  void load_weights(const std::string& path) {
    std::ifstream in(path);
    check_io(in.good(), "cannot open extractor weights: " + path);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("cannot parse extractor weights " + path + ": " + e.what());
    }
    check_io(doc.contains("scales") && doc["scales"].is_array() &&
             doc["scales"].size() == kScales, path + ": expected " +
             std::to_string(kScales) + " scale entries");
    for (int s = 0; s < kScales; ++s) {
      const auto& row = doc["scales"][s];
      check_io(row.is_array() && row.size() == kMaps,
               path + ": each scale needs " + std::to_string(kMaps) + " weights");
      for (int m = 0; m < kMaps; ++m) map_weights_[s][m] = static_cast<S>(row[m].get<double>());
    }
  }

  // Multi-scale features of one patch. features[s] is kMaps x (w_s * h_s) with
  // per-location unit normalization across the kMaps rows.
  struct Features {
    std::array<MatX<S>, kScales> raw;         // pre-normalization stacks
    std::array<MatX<S>, kScales> normalized;  // what the distance sees
    std::array<std::array<MatX<S>, 3>, kScales> pyramid;  // pooled inputs
    std::array<int, kScales> side;            // conv output side per scale
  };

  Features extract(const Patch<S>& patch) const {
    check(patch.size() >= min_patch_size(),
          "patch smaller than the extractor minimum of " +
              std::to_string(min_patch_size()));
    Features out;
    std::array<MatX<S>, 3> current = patch.plane;
    for (int s = 0; s < kScales; ++s) {
      out.pyramid[s] = current;
      const int in_side = static_cast<int>(current[0].rows());
      const int side = in_side - 2;
      out.side[s] = side;
      MatX<S>& stack = out.raw[s];
      stack.resize(kMaps, side * side);
      for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < kKernels; ++k) {
          valid_conv_into(current[c], kernels_[k], stack, c * kKernels + k);
        }
      }
      out.normalized[s].resize(kMaps, side * side);
      for (int q = 0; q < side * side; ++q) {
        const S n = std::sqrt(stack.col(q).squaredNorm() + S(kNormEps) * S(kNormEps));
        out.normalized[s].col(q) = stack.col(q) / n;
      }
      if (s + 1 < kScales) {
        for (int c = 0; c < 3; ++c) current[c] = avg_pool2(current[c]);
      }
    }
    return out;
  }

 private:
  static void valid_conv_into(const MatX<S>& in, const Eigen::Matrix<S, 3, 3>& k,
                              MatX<S>& stack, int row) {
    const int side = static_cast<int>(in.rows()) - 2;
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        S acc = S(0);
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) acc += k(a, b) * in(y + a, x + b);
        }
        stack(row, y * side + x) = acc;
      }
    }
  }

  static MatX<S> avg_pool2(const MatX<S>& in) {
    const int side = static_cast<int>(in.rows()) / 2;
    MatX<S> out(side, side);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        out(y, x) = (in(2 * y, 2 * x) + in(2 * y, 2 * x + 1) + in(2 * y + 1, 2 * x) +
                     in(2 * y + 1, 2 * x + 1)) * S(0.25);
      }
    }
    return out;
  }

  std::array<Eigen::Matrix<S, 3, 3>, kKernels> kernels_;
  std::array<std::vector<S>, kScales> map_weights_;
};

template <typename S>
struct PerceptualLoss {
  S value = S(0);
  Patch<S> grad;  // d(loss)/d(rendered patch)
};

// Backward of 2x average pooling: spread each gradient over its 2x2 source.
template <typename S>
inline MatX<S> unpool2(const MatX<S>& d_pooled) {
  const int side = static_cast<int>(d_pooled.rows());
  MatX<S> out(2 * side, 2 * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const S v = d_pooled(y, x) * S(0.25);
      out(2 * y, 2 * x) = v;
      out(2 * y, 2 * x + 1) = v;
      out(2 * y + 1, 2 * x) = v;
      out(2 * y + 1, 2 * x + 1) = v;
    }
  }
  return out;
}

// L2 distance between weighted, normalized filter-bank features of the two
// patches, with the gradient propagated back to the rendered patch pixels.
template <typename S>
inline PerceptualLoss<S> perceptual_loss(const PatchPair<S>& pair,
                                         const FilterBankExtractor<S>& extractor) {
  pair.validate();
  using FB = FilterBankExtractor<S>;
  const auto rendered = extractor.extract(pair.rendered);
  const auto target = extractor.extract(pair.target);

  S sq_sum = S(0);
  std::size_t feature_count = 0;
  for (int s = 0; s < FB::kScales; ++s) {
    for (int q = 0; q < rendered.side[s] * rendered.side[s]; ++q) {
      for (int m = 0; m < FB::kMaps; ++m) {
        const S d = extractor.map_weight(s, m) *
                    (rendered.normalized[s](m, q) - target.normalized[s](m, q));
        sq_sum += d * d;
      }
    }
    feature_count += static_cast<std::size_t>(rendered.side[s]) * rendered.side[s] * FB::kMaps;
  }
  const S inv_count = S(1) / static_cast<S>(feature_count);
  PerceptualLoss<S> out;
  out.value = std::sqrt(sq_sum * inv_count);

  const int p = pair.rendered.size();
  for (int c = 0; c < 3; ++c) out.grad.plane[c] = MatX<S>::Zero(p, p);
  if (out.value <= S(kResidualFloor)) return out;

  // Plane gradients per scale, walked back up the pyramid.
  std::array<MatX<S>, 3> d_plane;
  for (int s = FB::kScales - 1; s >= 0; --s) {
    const int side = rendered.side[s];
    const int in_side = side + 2;
    std::array<MatX<S>, 3> d_input;
    for (int c = 0; c < 3; ++c) d_input[c] = MatX<S>::Zero(in_side, in_side);

    for (int q = 0; q < side * side; ++q) {
      // d(loss)/d(normalized features) at this location.
      VecX<S> g(FB::kMaps);
      for (int m = 0; m < FB::kMaps; ++m) {
        const S w = extractor.map_weight(s, m);
        g[m] = w * w * (rendered.normalized[s](m, q) - target.normalized[s](m, q)) *
               inv_count / out.value;
      }
      // Through the unit normalization f_hat = f / sqrt(|f|^2 + eps^2).
      const VecX<S> f = rendered.raw[s].col(q);
      const S n2 = f.squaredNorm() + S(FB::kNormEps) * S(FB::kNormEps);
      const S n = std::sqrt(n2);
      const VecX<S> d_f = g / n - f * (f.dot(g) / (n2 * n));
      // Through the valid convolutions.
      const int y = q / side, x = q % side;
      for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < FB::kKernels; ++k) {
          const S dm = d_f[c * FB::kKernels + k];
          if (dm == S(0)) continue;
          const auto& kernel = extractor.kernel(k);
          for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) d_input[c](y + a, x + b) += kernel(a, b) * dm;
          }
        }
      }
    }

    if (s == FB::kScales - 1) {
      d_plane = d_input;
    } else {
      for (int c = 0; c < 3; ++c) {
        // Pooling floors odd sides, so the unpooled block may be smaller.
        MatX<S> up = unpool2(d_plane[c]);
        d_input[c].topLeftCorner(up.rows(), up.cols()) += up;
      }
      d_plane = d_input;
    }
  }
  out.grad.plane = d_plane;
  return out;
}

}  // namespace iddr
