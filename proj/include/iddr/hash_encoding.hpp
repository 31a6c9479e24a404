#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "iddr/common.hpp"

namespace iddr {

// Multi-resolution hash grid: L levels of T x F trainable feature vectors on
// voxel grids whose resolution grows geometrically from the coarsest to the
// finest level.
struct HashGridConfig {
  int levels = 16;                       // L
  std::uint32_t table_size = 1u << 14;   // T, power of two
  int features = 2;                      // F
  int base_resolution = 16;              // coarsest grid resolution
  int finest_resolution = 512;           // finest grid resolution

  void validate() const {
    check(levels >= 2, "hash grid needs at least 2 levels");
    check(table_size > 0 && (table_size & (table_size - 1)) == 0,
          "hash table size must be a power of two");
    check(features >= 1, "hash grid needs at least one feature per entry");
    check(base_resolution >= 1 && base_resolution < finest_resolution,
          "resolutions must satisfy 1 <= coarsest < finest");
  }

  double growth_factor() const {
    return std::exp((std::log(static_cast<double>(finest_resolution)) -
                     std::log(static_cast<double>(base_resolution))) /
                    (levels - 1));
  }
};

// Resolution of level l: floor(N_c * b^l). The epsilon soaks up the rounding
// of exp/log so the endpoints come out exactly N_c and N_f.
inline int level_resolution(const HashGridConfig& config, int level) {
  check(level >= 0 && level < config.levels, "hash grid level out of range");
  const double ln_b = std::log(config.growth_factor());
  const double value = config.base_resolution * std::exp(level * ln_b);
  return static_cast<int>(std::floor(value + 1e-9));
}

// Spatial hash over integer vertex coordinates with the canonical primes.
// Arithmetic wraps in unsigned 64-bit; T must be a power of two.
inline std::uint32_t spatial_hash(std::uint64_t x, std::uint64_t y, std::uint64_t z,
                                  std::uint32_t table_size) {
  constexpr std::uint64_t kPrime2 = 2654435761ull;
  constexpr std::uint64_t kPrime3 = 805459861ull;
  const std::uint64_t h = x ^ (y * kPrime2) ^ (z * kPrime3);
  return static_cast<std::uint32_t>(h & (table_size - 1));
}

enum class IndexMode {
  kAuto,       // dense one-to-one when the level's vertices fit in the table
  kForceHash,  // always hash (used to cross-check dense vs hashed indexing)
};

// Table row for an integer vertex. When all (res+1)^3 vertices fit in the
// table the layout is a dense row-major index and lookups are collision-free.
inline std::uint32_t vertex_index(int vx, int vy, int vz, int resolution,
                                  std::uint32_t table_size,
                                  IndexMode mode = IndexMode::kAuto) {
  const std::uint64_t side = static_cast<std::uint64_t>(resolution) + 1;
  if (mode == IndexMode::kAuto && side * side * side <= table_size) {
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(vz) * side +
                                       static_cast<std::uint64_t>(vy)) * side +
                                      static_cast<std::uint64_t>(vx));
  }
  return spatial_hash(static_cast<std::uint64_t>(vx), static_cast<std::uint64_t>(vy),
                      static_cast<std::uint64_t>(vz), table_size);
}

// Per-level trilinear interpolation footprint kept for the backward pass.
// Corner c uses vertex (i + (c&1), j + (c>>1&1), k + (c>>2&1)).
template <typename S>
struct LevelInterp {
  std::array<std::uint32_t, 8> index;
  std::array<S, 8> weight;
};

template <typename S>
struct EncodedFeature {
  VecX<S> vector;                        // concatenated L*F features
  std::vector<LevelInterp<S>> record;    // one entry per level
};

template <typename S>
class HashGrid {
 public:
  HashGrid() = default;

  HashGrid(const HashGridConfig& config, std::uint64_t seed,
           IndexMode mode = IndexMode::kAuto)
      : config_(config), index_mode_(mode) {
    config.validate();
    resolutions_.resize(config.levels);
    dense_level_.resize(config.levels);
    for (int l = 0; l < config.levels; ++l) {
      resolutions_[l] = level_resolution(config, l);
      const std::uint64_t side = static_cast<std::uint64_t>(resolutions_[l]) + 1;
      dense_level_[l] = mode == IndexMode::kAuto && side * side * side <= config.table_size;
    }
    tables_.resize(config.levels);
    StreamRng rng(mix_seed(seed, 0x68617368u));
    for (auto& table : tables_) {
      table.resize(static_cast<std::size_t>(config.table_size) * config.features);
      for (auto& v : table) v = static_cast<S>(rng.next_double(-1e-4, 1e-4));
    }
  }

  const HashGridConfig& config() const { return config_; }
  IndexMode index_mode() const { return index_mode_; }
  int resolution(int level) const { return resolutions_[level]; }
  const std::vector<int>& resolutions() const { return resolutions_; }
  double growth_factor() const { return config_.growth_factor(); }
  int feature_dim() const { return config_.levels * config_.features; }

  std::vector<S>& table(int level) { return tables_[level]; }
  const std::vector<S>& table(int level) const { return tables_[level]; }

  S* entry(int level, std::uint32_t index) {
    return tables_[level].data() + static_cast<std::size_t>(index) * config_.features;
  }
  const S* entry(int level, std::uint32_t index) const {
    return tables_[level].data() + static_cast<std::size_t>(index) * config_.features;
  }

  // Indices and trilinear weights of the 8 enclosing vertices at one level.
  void level_footprint(int level, const Vec3<S>& x, std::uint32_t* index,
                       S* weight) const {
    const int res = resolutions_[level];
    int base[3];
    S w0[3], w1[3];
    for (int a = 0; a < 3; ++a) {
      const S scaled = x[a] * static_cast<S>(res);
      int idx = static_cast<int>(scaled);
      if (idx > res - 1) idx = res - 1;  // x == 1 lands in the last voxel
      base[a] = idx;
      w1[a] = scaled - static_cast<S>(idx);
      w0[a] = S(1) - w1[a];
    }
    weight[0] = w0[0] * w0[1] * w0[2];
    weight[1] = w1[0] * w0[1] * w0[2];
    weight[2] = w0[0] * w1[1] * w0[2];
    weight[3] = w1[0] * w1[1] * w0[2];
    weight[4] = w0[0] * w0[1] * w1[2];
    weight[5] = w1[0] * w0[1] * w1[2];
    weight[6] = w0[0] * w1[1] * w1[2];
    weight[7] = w1[0] * w1[1] * w1[2];
    if (dense_level_[level]) {
      const std::uint32_t side = static_cast<std::uint32_t>(res) + 1;
      const std::uint32_t origin = (static_cast<std::uint32_t>(base[2]) * side +
                                    static_cast<std::uint32_t>(base[1])) * side +
                                   static_cast<std::uint32_t>(base[0]);
      index[0] = origin;
      index[1] = origin + 1;
      index[2] = origin + side;
      index[3] = origin + side + 1;
      index[4] = origin + side * side;
      index[5] = origin + side * side + 1;
      index[6] = origin + side * side + side;
      index[7] = origin + side * side + side + 1;
    } else {
      constexpr std::uint64_t kPrime2 = 2654435761ull;
      constexpr std::uint64_t kPrime3 = 805459861ull;
      const std::uint64_t mask = config_.table_size - 1;
      const std::uint64_t hx0 = static_cast<std::uint64_t>(base[0]);
      const std::uint64_t hx1 = hx0 + 1;
      const std::uint64_t hy0 = static_cast<std::uint64_t>(base[1]) * kPrime2;
      const std::uint64_t hy1 = hy0 + kPrime2;
      const std::uint64_t hz0 = static_cast<std::uint64_t>(base[2]) * kPrime3;
      const std::uint64_t hz1 = hz0 + kPrime3;
      index[0] = static_cast<std::uint32_t>((hx0 ^ hy0 ^ hz0) & mask);
      index[1] = static_cast<std::uint32_t>((hx1 ^ hy0 ^ hz0) & mask);
      index[2] = static_cast<std::uint32_t>((hx0 ^ hy1 ^ hz0) & mask);
      index[3] = static_cast<std::uint32_t>((hx1 ^ hy1 ^ hz0) & mask);
      index[4] = static_cast<std::uint32_t>((hx0 ^ hy0 ^ hz1) & mask);
      index[5] = static_cast<std::uint32_t>((hx1 ^ hy0 ^ hz1) & mask);
      index[6] = static_cast<std::uint32_t>((hx0 ^ hy1 ^ hz1) & mask);
      index[7] = static_cast<std::uint32_t>((hx1 ^ hy1 ^ hz1) & mask);
    }
  }

  // Writes the concatenated feature vector for x in [0,1]^3 into out (length
  // levels*features) and, when record != nullptr, the per-level footprint
  // (record must have room for `levels` entries).
  void encode_into(const Vec3<S>& x, S* out, LevelInterp<S>* record) const {
    check(x[0] >= S(0) && x[0] <= S(1) && x[1] >= S(0) && x[1] <= S(1) &&
          x[2] >= S(0) && x[2] <= S(1),
          "encode input outside [0,1]^3; normalize scene bounds first");
    const int F = config_.features;
    std::uint32_t idx[8];
    S w[8];
    for (int l = 0; l < config_.levels; ++l) {
      level_footprint(l, x, idx, w);
      const S* table = tables_[l].data();
      S* out_l = out + static_cast<std::size_t>(l) * F;
      if (F == 2) {
        S acc0 = S(0), acc1 = S(0);
        for (int c = 0; c < 8; ++c) {
          const S* feat = table + static_cast<std::size_t>(idx[c]) * 2;
          acc0 += w[c] * feat[0];
          acc1 += w[c] * feat[1];
        }
        out_l[0] = acc0;
        out_l[1] = acc1;
      } else {
        for (int f = 0; f < F; ++f) out_l[f] = S(0);
        for (int c = 0; c < 8; ++c) {
          const S* feat = table + static_cast<std::size_t>(idx[c]) * F;
          for (int f = 0; f < F; ++f) out_l[f] += w[c] * feat[f];
        }
      }
      if (record) {
        LevelInterp<S>& rec = record[l];
        for (int c = 0; c < 8; ++c) {
          rec.index[c] = idx[c];
          rec.weight[c] = w[c];
        }
      }
    }
  }

  EncodedFeature<S> encode(const Vec3<S>& x) const {
    EncodedFeature<S> out;
    out.vector.resize(feature_dim());
    out.record.resize(config_.levels);
    encode_into(x, out.vector.data(), out.record.data());
    return out;
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(config_.levels) * config_.table_size * config_.features;
  }

 private:
  HashGridConfig config_;
  IndexMode index_mode_ = IndexMode::kAuto;
  std::vector<int> resolutions_;
  std::vector<std::uint8_t> dense_level_;
  std::vector<std::vector<S>> tables_;
};

// Gradient accumulator with the same table layout as the grid, plus touched
// flags so the optimizer can apply sparse updates to visited rows only.
template <typename S>
class GridGradients {
 public:
  GridGradients() = default;

  explicit GridGradients(const HashGridConfig& config) : config_(config) {
    tables_.resize(config.levels);
    touched_.resize(config.levels);
    for (int l = 0; l < config.levels; ++l) {
      tables_[l].assign(static_cast<std::size_t>(config.table_size) * config.features, S(0));
      touched_[l].assign(config.table_size, 0);
    }
  }

  const HashGridConfig& config() const { return config_; }

  void clear() {
    for (int l = 0; l < config_.levels; ++l) {
      std::fill(tables_[l].begin(), tables_[l].end(), S(0));
      std::fill(touched_[l].begin(), touched_[l].end(), 0);
    }
  }

  void add_row(int level, std::uint32_t index, const S* grad, S weight) {
    S* row = tables_[level].data() + static_cast<std::size_t>(index) * config_.features;
    for (int f = 0; f < config_.features; ++f) row[f] += weight * grad[f];
    touched_[level][index] = 1;
  }

  // Fixed-order reduction used to merge per-worker accumulators.
  void add(const GridGradients& other) {
    for (int l = 0; l < config_.levels; ++l) {
      const std::size_t n = tables_[l].size();
      S* dst = tables_[l].data();
      const S* src = other.tables_[l].data();
      for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
      for (std::uint32_t r = 0; r < config_.table_size; ++r) {
        touched_[l][r] |= other.touched_[l][r];
      }
    }
  }

  std::vector<S>& table(int level) { return tables_[level]; }
  const std::vector<S>& table(int level) const { return tables_[level]; }
  const std::vector<std::uint8_t>& touched(int level) const { return touched_[level]; }

  const S* row(int level, std::uint32_t index) const {
    return tables_[level].data() + static_cast<std::size_t>(index) * config_.features;
  }

 private:
  HashGridConfig config_;
  std::vector<std::vector<S>> tables_;
  std::vector<std::vector<std::uint8_t>> touched_;
};

// Scatters d(loss)/d(encoded features) back into table-row gradients. Linear
// in feature_grad; each of the 8 corners per level receives its trilinear
// weight times the level's slice of the incoming gradient.
template <typename S>
inline void encode_backward(const HashGridConfig& config, const S* feature_grad,
                            const LevelInterp<S>* record, GridGradients<S>& accumulator) {
  check(accumulator.config().levels == config.levels &&
        accumulator.config().features == config.features &&
        accumulator.config().table_size == config.table_size,
        "gradient accumulator shape mismatch");
  const int F = config.features;
  for (int l = 0; l < config.levels; ++l) {
    const S* grad_l = feature_grad + static_cast<std::size_t>(l) * F;
    const LevelInterp<S>& rec = record[l];
    for (int c = 0; c < 8; ++c) {
      accumulator.add_row(l, rec.index[c], grad_l, rec.weight[c]);
    }
  }
}

template <typename S>
inline void encode_backward(const HashGrid<S>& grid, const VecX<S>& feature_grad,
                            const std::vector<LevelInterp<S>>& record,
                            GridGradients<S>& accumulator) {
  check(feature_grad.size() == grid.feature_dim(), "feature gradient length mismatch");
  check(static_cast<int>(record.size()) == grid.config().levels,
        "interpolation record length mismatch");
  encode_backward(grid.config(), feature_grad.data(), record.data(), accumulator);
}

}  // namespace iddr
