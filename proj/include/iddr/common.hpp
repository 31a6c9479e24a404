#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace iddr {

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

// Error taxonomy mirrored by CLI exit codes: usage -> 1, io -> 2, numeric -> 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}
inline void check_io(bool cond, const std::string& msg) {
  if (!cond) throw IoError(msg);
}

// splitmix64: cheap stateless mixer used to derive independent streams from
// (seed, view, pixel, iteration) tuples so parallel draw order cannot matter.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// Small counter-based generator. Each instance is a deterministic function of
// its seed; successive next_*() calls walk the stream.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_double(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

// Axis-aligned box used both as scene bounds and as the encoder domain.
template <typename S = double>
struct Aabb {
  Vec3<S> lo{0, 0, 0};
  Vec3<S> hi{1, 1, 1};

  Vec3<S> extent() const { return hi - lo; }
  S diagonal() const { return extent().norm(); }

  bool contains(const Vec3<S>& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }

  // Maps points inside the box to [0,1]^3.
  Vec3<S> normalize(const Vec3<S>& p) const {
    return (p - lo).cwiseQuotient(extent());
  }

  // Slab intersection of the ray o + t*d against the box. Returns false when
  // the ray misses; otherwise [t0, t1] is the parametric overlap.
  bool clip_ray(const Vec3<S>& o, const Vec3<S>& d, S& t0, S& t1) const {
    S tmin = t0, tmax = t1;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(d[a]) < S(1e-12)) {
        if (o[a] < lo[a] || o[a] > hi[a]) return false;
        continue;
      }
      S inv = S(1) / d[a];
      S ta = (lo[a] - o[a]) * inv;
      S tb = (hi[a] - o[a]) * inv;
      if (ta > tb) std::swap(ta, tb);
      tmin = std::max(tmin, ta);
      tmax = std::min(tmax, tb);
      if (tmin > tmax) return false;
    }
    t0 = tmin;
    t1 = tmax;
    return true;
  }
};

using Aabbd = Aabb<double>;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace iddr
