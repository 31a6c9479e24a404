#pragma once

// Independent oracles used by the tests: brute-force or closed-form
// recomputations that never touch the library's own implementation paths.

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "iddr/common.hpp"

namespace oracles {

// Central finite difference of a scalar function at x.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

// Relative gradient error with an absolute floor for near-zero entries.
inline double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Plain-loop valid 3x3 convolution; used to cross-check the perceptual
// filter bank without sharing any code with it.
inline std::vector<std::vector<double>> conv3_valid(
    const std::vector<std::vector<double>>& in, const double k[3][3]) {
  const int side = static_cast<int>(in.size()) - 2;
  std::vector<std::vector<double>> out(side, std::vector<double>(side, 0.0));
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0;
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) acc += k[a][b] * in[y + a][x + b];
      }
      out[y][x] = acc;
    }
  }
  return out;
}

inline std::vector<std::vector<double>> pool2(const std::vector<std::vector<double>>& in) {
  const int side = static_cast<int>(in.size()) / 2;
  std::vector<std::vector<double>> out(side, std::vector<double>(side, 0.0));
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      out[y][x] = 0.25 * (in[2 * y][2 * x] + in[2 * y][2 * x + 1] + in[2 * y + 1][2 * x] +
                          in[2 * y + 1][2 * x + 1]);
    }
  }
  return out;
}

// Brute-force recomputation of the filter-bank perceptual distance with unit
// map weights: Gaussian, two Sobel derivatives, Laplacian per channel, three
// dyadic scales, per-location unit normalization with the 1e-2 floor.
inline double filter_bank_distance(const std::array<std::vector<std::vector<double>>, 3>& a,
                                   const std::array<std::vector<std::vector<double>>, 3>& b) {
  static const double kG[3][3] = {{1 / 16., 2 / 16., 1 / 16.},
                                  {2 / 16., 4 / 16., 2 / 16.},
                                  {1 / 16., 2 / 16., 1 / 16.}};
  static const double kDx[3][3] = {{-1 / 8., 0, 1 / 8.}, {-2 / 8., 0, 2 / 8.},
                                   {-1 / 8., 0, 1 / 8.}};
  static const double kDy[3][3] = {{-1 / 8., -2 / 8., -1 / 8.}, {0, 0, 0},
                                   {1 / 8., 2 / 8., 1 / 8.}};
  static const double kL[3][3] = {{0, 1 / 4., 0}, {1 / 4., -1, 1 / 4.}, {0, 1 / 4., 0}};
  const double eps = 1e-2;

  auto features_of = [&](const std::array<std::vector<std::vector<double>>, 3>& img) {
    std::vector<std::vector<std::array<double, 12>>> all;  // per scale: maps per pixel
    auto planes = img;
    for (int s = 0; s < 3; ++s) {
      const int side = static_cast<int>(planes[0].size()) - 2;
      std::vector<std::array<double, 12>> stack(static_cast<std::size_t>(side) * side);
      for (int c = 0; c < 3; ++c) {
        const double(*kernels[4])[3] = {kG, kDx, kDy, kL};
        for (int k = 0; k < 4; ++k) {
          auto m = conv3_valid(planes[c], kernels[k]);
          for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
              stack[static_cast<std::size_t>(y) * side + x][c * 4 + k] = m[y][x];
            }
          }
        }
      }
      for (auto& f : stack) {
        double n2 = eps * eps;
        for (double v : f) n2 += v * v;
        const double n = std::sqrt(n2);
        for (double& v : f) v /= n;
      }
      all.push_back(std::move(stack));
      if (s + 1 < 3) {
        for (int c = 0; c < 3; ++c) planes[c] = pool2(planes[c]);
      }
    }
    return all;
  };

  const auto fa = features_of(a);
  const auto fb = features_of(b);
  double sq = 0;
  std::size_t count = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t q = 0; q < fa[s].size(); ++q) {
      for (int m = 0; m < 12; ++m) {
        const double d = fa[s][q][m] - fb[s][q][m];
        sq += d * d;
      }
      count += 12;
    }
  }
  return std::sqrt(sq / static_cast<double>(count));
}

// Brute-force single-window SSIM with an 11x11 Gaussian window.
inline double ssim_window(const std::vector<double>& a, const std::vector<double>& b) {
  const double sigma = 1.5;
  std::array<double, 121> w;
  double sum = 0;
  for (int dy = -5; dy <= 5; ++dy) {
    for (int dx = -5; dx <= 5; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      w[(dy + 5) * 11 + (dx + 5)] = v;
      sum += v;
    }
  }
  for (double& v : w) v /= sum;
  double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
  for (int i = 0; i < 121; ++i) {
    mu_a += w[i] * a[i];
    mu_b += w[i] * b[i];
    aa += w[i] * a[i] * a[i];
    bb += w[i] * b[i] * b[i];
    ab += w[i] * a[i] * b[i];
  }
  const double c1 = 1e-4, c2 = 9e-4;
  return ((2 * mu_a * mu_b + c1) * (2 * (ab - mu_a * mu_b) + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * ((aa - mu_a * mu_a) + (bb - mu_b * mu_b) + c2));
}

// Nearest positive root of the ray-sphere quadratic.
inline bool ray_sphere(const iddr::Vec3d& o, const iddr::Vec3d& d, const iddr::Vec3d& c,
                       double r, double& t) {
  const iddr::Vec3d oc = o - c;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc < 0) return false;
  const double s = std::sqrt(disc);
  t = -b - s;
  if (t <= 0) t = -b + s;
  return t > 0;
}

}  // namespace oracles
