#pragma once

#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "iddr/bbox.hpp"
#include "iddr/common.hpp"
#include "iddr/image.hpp"
#include "iddr/perceptual.hpp"

namespace iddr {

using PixelMask = Image<std::uint8_t>;  // 1 channel; nonzero = included

inline PixelMask mask_from_boxes(const std::vector<BBox>& boxes, int width, int height) {
  PixelMask mask(width, height, 1, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (pixel_in_boxes(x, y, boxes)) mask.at(x, y, 0) = 1;
    }
  }
  return mask;
}

// Peak signal-to-noise ratio in dB over the masked pixels (all pixels when
// mask is null), with MAX = 1 in normalized scale. Identical inputs yield the
// +infinity sentinel; emitters cap it at 99 dB.
inline double psnr(const ImageF& a, const ImageF& b, const PixelMask* mask = nullptr) {
  check(a.same_shape(b), "psnr needs equal image shapes");
  if (mask) {
    check(mask->width() == a.width() && mask->height() == a.height(),
          "psnr mask shape mismatch");
  }
  double sq_sum = 0;
  std::size_t count = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (mask && !mask->at(x, y, 0)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
        sq_sum += d * d;
      }
      ++count;
    }
  }
  check(count > 0, "psnr over an empty mask");
  const double mse = sq_sum / (static_cast<double>(count) * a.channels());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline constexpr double kPsnrTableCap = 99.0;

inline double cap_psnr(double value) { return std::min(value, kPsnrTableCap); }

namespace detail {

struct SsimWindow {
  static constexpr int kRadius = 5;  // 11x11 window
  std::array<double, 121> weights;

  SsimWindow() {
    const double sigma = 1.5;
    double sum = 0;
    for (int dy = -kRadius; dy <= kRadius; ++dy) {
      for (int dx = -kRadius; dx <= kRadius; ++dx) {
        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        weights[(dy + kRadius) * 11 + (dx + kRadius)] = w;
        sum += w;
      }
    }
    for (double& w : weights) w /= sum;
  }
};

}  // namespace detail

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) and the standard
// constants C1 = 0.01^2, C2 = 0.03^2 in normalized scale. Channels are scored
// independently and averaged. Window centers must be inside the mask (every
// pixel when mask is null) and far enough from the border for a full window;
// windows may straddle the mask boundary.
inline double ssim(const ImageF& a, const ImageF& b, const PixelMask* mask = nullptr) {
  check(a.same_shape(b), "ssim needs equal image shapes");
  check(a.width() >= 11 && a.height() >= 11, "ssim needs at least 11x11 images");
  if (mask) {
    check(mask->width() == a.width() && mask->height() == a.height(),
          "ssim mask shape mismatch");
  }
  static const detail::SsimWindow window;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  constexpr int r = detail::SsimWindow::kRadius;

  double total = 0;
  std::size_t count = 0;
  for (int y = r; y < a.height() - r; ++y) {
    for (int x = r; x < a.width() - r; ++x) {
      if (mask && !mask->at(x, y, 0)) continue;
      double channel_sum = 0;
      for (int c = 0; c < a.channels(); ++c) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        int wi = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx, ++wi) {
            const double w = window.weights[wi];
            const double va = a.at(x + dx, y + dy, c);
            const double vb = b.at(x + dx, y + dy, c);
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        channel_sum += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                       ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      }
      total += channel_sum / a.channels();
      ++count;
    }
  }
  check(count > 0, "ssim region smaller than the 11x11 window");
  return total / static_cast<double>(count);
}

enum class EvalRegion { kBoxInterior, kFullImage };

// Whole-image perceptual distance through the same filter bank as the
// training loss. Labeled a proxy because no pretrained backbone is involved.
// Non-square images are center-cropped to the shorter side.
inline double lpips_proxy_distance(const ImageF& a, const ImageF& b) {
  check(a.same_shape(b), "lpips_proxy needs equal image shapes");
  static const FilterBankExtractor<float> extractor;
  const int side = std::min(a.width(), a.height());
  check(side >= FilterBankExtractor<float>::min_patch_size(),
        "image too small for the perceptual filter bank");
  const int x0 = (a.width() - side) / 2;
  const int y0 = (a.height() - side) / 2;
  PatchPair<float> pair;
  pair.rendered = Patch<float>::from_image(a, x0, y0, side);
  pair.target = Patch<float>::from_image(b, x0, y0, side);
  const auto fa = extractor.extract(pair.rendered);
  const auto fb = extractor.extract(pair.target);
  double sq = 0;
  std::size_t count = 0;
  for (int s = 0; s < FilterBankExtractor<float>::kScales; ++s) {
    sq += (fa.normalized[s] - fb.normalized[s]).squaredNorm();
    count += fa.normalized[s].size();
  }
  return std::sqrt(sq / static_cast<double>(count));
}

struct ViewEval {
  int view_id = 0;
  double psnr = 0;
  double ssim = 0;
  double lpips_proxy = 0;
  std::size_t pixels = 0;
  bool skipped = false;
};

struct EvalReport {
  std::vector<ViewEval> views;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double mean_lpips_proxy = 0;
  EvalRegion region = EvalRegion::kBoxInterior;

  std::string region_name() const {
    return region == EvalRegion::kBoxInterior ? "box-interior" : "full-image";
  }

  nlohmann::json to_json() const {
    nlohmann::json out;
    out["region"] = region_name();
    out["mean_psnr"] = cap_psnr(mean_psnr);
    out["mean_ssim"] = mean_ssim;
    out["mean_lpips_proxy"] = mean_lpips_proxy;
    out["views"] = nlohmann::json::array();
    for (const ViewEval& v : views) {
      out["views"].push_back({{"view_id", v.view_id},
                              {"psnr", v.skipped ? nlohmann::json() : nlohmann::json(cap_psnr(v.psnr))},
                              {"ssim", v.skipped ? nlohmann::json() : nlohmann::json(v.ssim)},
                              {"lpips_proxy", v.skipped ? nlohmann::json() : nlohmann::json(v.lpips_proxy)},
                              {"pixels", v.pixels},
                              {"skipped", v.skipped}});
    }
    return out;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "view_id,psnr,ssim,lpips_proxy,pixels,skipped\n";
    out << std::setprecision(10);
    for (const ViewEval& v : views) {
      out << v.view_id << ",";
      if (v.skipped) {
        out << ",,,";
      } else {
        out << cap_psnr(v.psnr) << "," << v.ssim << "," << v.lpips_proxy << ",";
      }
      out << v.pixels << "," << (v.skipped ? 1 : 0) << "\n";
    }
    out << "mean," << cap_psnr(mean_psnr) << "," << mean_ssim << "," << mean_lpips_proxy
        << ",,\n";
    return out.str();
  }
};

// Distractor-removal evaluation protocol: PSNR/SSIM restricted to
// box-interior pixels per view (or the full image), averaged over views.
// Views without boxes are skipped and recorded when evaluating box interiors.
inline EvalReport masked_eval(const std::vector<ImageF>& rendered,
                              const std::vector<ImageF>& clean,
                              const std::vector<std::vector<BBox>>& boxes,
                              EvalRegion region = EvalRegion::kBoxInterior) {
  check(rendered.size() == clean.size() && rendered.size() == boxes.size(),
        "masked_eval needs matching view sets");
  EvalReport report;
  report.region = region;
  double psnr_sum = 0, ssim_sum = 0, lpips_sum = 0;
  std::size_t evaluated = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    ViewEval view;
    view.view_id = static_cast<int>(i);
    if (region == EvalRegion::kBoxInterior && boxes[i].empty()) {
      view.skipped = true;
      report.views.push_back(view);
      continue;
    }
    std::optional<PixelMask> mask;
    if (region == EvalRegion::kBoxInterior) {
      mask = mask_from_boxes(boxes[i], rendered[i].width(), rendered[i].height());
      std::size_t pixels = 0;
      for (int y = 0; y < mask->height(); ++y) {
        for (int x = 0; x < mask->width(); ++x) pixels += mask->at(x, y, 0);
      }
      view.pixels = pixels;
      if (pixels == 0) {
        view.skipped = true;
        report.views.push_back(view);
        continue;
      }
    } else {
      view.pixels = static_cast<std::size_t>(rendered[i].width()) * rendered[i].height();
    }
    const PixelMask* mask_ptr = mask ? &*mask : nullptr;
    view.psnr = psnr(rendered[i], clean[i], mask_ptr);
    try {
      view.ssim = ssim(rendered[i], clean[i], mask_ptr);
    } catch (const NumericError&) {
      // Mask has pixels but no valid window center (all within the border
      // margin); record the view as skipped rather than inventing a score.
      view.skipped = true;
      report.views.push_back(view);
      continue;
    }
    // The perceptual proxy is a whole-image distance regardless of region;
    // only PSNR/SSIM carry the box restriction.
    view.lpips_proxy = lpips_proxy_distance(rendered[i], clean[i]);
    psnr_sum += view.psnr;
    ssim_sum += view.ssim;
    lpips_sum += view.lpips_proxy;
    ++evaluated;
    report.views.push_back(view);
  }
  check(evaluated > 0, "masked_eval: no view could be evaluated");
  report.mean_psnr = psnr_sum / static_cast<double>(evaluated);
  report.mean_ssim = ssim_sum / static_cast<double>(evaluated);
  report.mean_lpips_proxy = lpips_sum / static_cast<double>(evaluated);
  return report;
}

}  // namespace iddr
