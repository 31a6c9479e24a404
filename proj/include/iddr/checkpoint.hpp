#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "iddr/adam.hpp"
#include "iddr/model.hpp"

namespace iddr {

inline constexpr char kCheckpointMagic[8] = {'I', 'D', 'D', 'R', 'N', 'G', 'P', '\0'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check_io(in.good(), "truncated checkpoint");
  return v;
}

inline void write_tag(std::ostream& out, const char tag[4]) { out.write(tag, 4); }

inline std::string read_tag(std::istream& in) {
  char tag[5] = {0};
  in.read(tag, 4);
  check_io(in.good(), "truncated checkpoint");
  return std::string(tag, 4);
}

inline void write_f32_array(std::ostream& out, const float* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

inline void read_f32_array(std::istream& in, float* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
  check_io(in.good(), "truncated checkpoint");
}

inline void write_layer(std::ostream& out, const DenseLayer<float>& layer) {
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(layer.weight.rows()));
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(layer.weight.cols()));
  // Row-major on disk.
  for (int r = 0; r < layer.weight.rows(); ++r) {
    for (int c = 0; c < layer.weight.cols(); ++c) {
      write_pod<float>(out, layer.weight(r, c));
    }
  }
  write_f32_array(out, layer.bias.data(), layer.bias.size());
}

inline void read_layer(std::istream& in, DenseLayer<float>& layer) {
  const auto rows = read_pod<std::int32_t>(in);
  const auto cols = read_pod<std::int32_t>(in);
  check_io(rows == layer.weight.rows() && cols == layer.weight.cols(),
           "checkpoint layer shape mismatch");
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) layer.weight(r, c) = read_pod<float>(in);
  }
  read_f32_array(in, layer.bias.data(), layer.bias.size());
}

}  // namespace detail

// Binary checkpoint: magic + version byte, then tagged sections. GRID holds
// the hash-table config and row-major float32 tables, NETF the MLP layers,
// META the rendering constants, OPTS (optional) the optimizer state needed to
// resume mid-run.
inline void save_checkpoint(const std::string& path, const NerfModel<float>& model,
                            std::uint64_t iteration = 0,
                            const AdamOptimizer<float>* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  check_io(out.good(), "cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  detail::write_pod<std::uint8_t>(out, kCheckpointVersion);

  detail::write_tag(out, "GRID");
  const HashGridConfig& gc = model.grid.config();
  detail::write_pod<std::int32_t>(out, gc.levels);
  detail::write_pod<std::uint32_t>(out, gc.table_size);
  detail::write_pod<std::int32_t>(out, gc.features);
  detail::write_pod<std::int32_t>(out, gc.base_resolution);
  detail::write_pod<std::int32_t>(out, gc.finest_resolution);
  detail::write_pod<std::uint8_t>(out,
      model.grid.index_mode() == IndexMode::kForceHash ? 1 : 0);
  for (int l = 0; l < gc.levels; ++l) {
    detail::write_pod<std::int32_t>(out, model.grid.resolution(l));
    detail::write_f32_array(out, model.grid.table(l).data(), model.grid.table(l).size());
  }

  detail::write_tag(out, "NETF");
  detail::write_pod<std::int32_t>(out, model.net.feature_dim);
  detail::write_layer(out, model.net.d1);
  detail::write_layer(out, model.net.d2);
  detail::write_layer(out, model.net.d3);
  detail::write_layer(out, model.net.c1);
  detail::write_layer(out, model.net.c2);
  detail::write_layer(out, model.net.c3);

  detail::write_tag(out, "META");
  for (int a = 0; a < 3; ++a) detail::write_pod<double>(out, model.aabb.lo[a]);
  for (int a = 0; a < 3; ++a) detail::write_pod<double>(out, model.aabb.hi[a]);
  for (int c = 0; c < 3; ++c) detail::write_pod<float>(out, model.background[c]);
  detail::write_pod<double>(out, model.near);
  detail::write_pod<double>(out, model.far);
  detail::write_pod<std::int32_t>(out, model.n_samples);
  detail::write_pod<std::uint64_t>(out, iteration);

  if (optimizer) {
    detail::write_tag(out, "OPTS");
    detail::write_pod<std::uint64_t>(out, optimizer->step_count());
    detail::write_pod<double>(out, optimizer->config().beta1);
    detail::write_pod<double>(out, optimizer->config().beta2);
    detail::write_pod<double>(out, optimizer->config().eps);
    detail::write_pod<std::uint64_t>(out, optimizer->slot_count());
    for (std::size_t s = 0; s < optimizer->slot_count(); ++s) {
      const auto& m = optimizer->moments_m(static_cast<int>(s));
      const auto& v = optimizer->moments_v(static_cast<int>(s));
      detail::write_pod<std::uint64_t>(out, m.size());
      detail::write_f32_array(out, m.data(), m.size());
      detail::write_f32_array(out, v.data(), v.size());
    }
  }
  detail::write_tag(out, "END.");
  check_io(out.good(), "checkpoint write failed: " + path);
}

// Loads a checkpoint saved by save_checkpoint. When `optimizer` is non-null,
// an OPTS section must be present and is restored into it (slots must already
// be registered in the same order).
inline NerfModel<float> load_checkpoint(const std::string& path,
                                        std::uint64_t* iteration = nullptr,
                                        AdamOptimizer<float>* optimizer = nullptr) {
  std::ifstream in(path, std::ios::binary);
  check_io(in.good(), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  check_io(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0,
           "not a checkpoint file: " + path);
  const auto version = detail::read_pod<std::uint8_t>(in);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version mismatch: file has v" + std::to_string(version) +
                  ", this build reads v" + std::to_string(kCheckpointVersion));
  }

  check_io(detail::read_tag(in) == "GRID", "checkpoint missing GRID section");
  HashGridConfig gc;
  gc.levels = detail::read_pod<std::int32_t>(in);
  gc.table_size = detail::read_pod<std::uint32_t>(in);
  gc.features = detail::read_pod<std::int32_t>(in);
  gc.base_resolution = detail::read_pod<std::int32_t>(in);
  gc.finest_resolution = detail::read_pod<std::int32_t>(in);
  const auto index_mode = detail::read_pod<std::uint8_t>(in) == 1 ? IndexMode::kForceHash
                                                                  : IndexMode::kAuto;
  NerfModel<float> model(gc, 0);
  model.grid = HashGrid<float>(gc, 0, index_mode);
  for (int l = 0; l < gc.levels; ++l) {
    const auto res = detail::read_pod<std::int32_t>(in);
    check_io(res == model.grid.resolution(l), "checkpoint level resolution mismatch");
    detail::read_f32_array(in, model.grid.table(l).data(), model.grid.table(l).size());
  }

  check_io(detail::read_tag(in) == "NETF", "checkpoint missing NETF section");
  const auto feature_dim = detail::read_pod<std::int32_t>(in);
  check_io(feature_dim == model.net.feature_dim, "checkpoint feature dimension mismatch");
  detail::read_layer(in, model.net.d1);
  detail::read_layer(in, model.net.d2);
  detail::read_layer(in, model.net.d3);
  detail::read_layer(in, model.net.c1);
  detail::read_layer(in, model.net.c2);
  detail::read_layer(in, model.net.c3);

  check_io(detail::read_tag(in) == "META", "checkpoint missing META section");
  for (int a = 0; a < 3; ++a) model.aabb.lo[a] = detail::read_pod<double>(in);
  for (int a = 0; a < 3; ++a) model.aabb.hi[a] = detail::read_pod<double>(in);
  for (int c = 0; c < 3; ++c) model.background[c] = detail::read_pod<float>(in);
  model.near = detail::read_pod<double>(in);
  model.far = detail::read_pod<double>(in);
  model.n_samples = detail::read_pod<std::int32_t>(in);
  const auto iter = detail::read_pod<std::uint64_t>(in);
  if (iteration) *iteration = iter;

  std::string tag = detail::read_tag(in);
  if (tag == "OPTS") {
    const auto step = detail::read_pod<std::uint64_t>(in);
    detail::read_pod<double>(in);  // betas/eps are fixed by the run config
    detail::read_pod<double>(in);
    detail::read_pod<double>(in);
    const auto slots = detail::read_pod<std::uint64_t>(in);
    if (optimizer) {
      check_io(slots == optimizer->slot_count(), "checkpoint optimizer slot mismatch");
      optimizer->set_step_count(step);
    }
    for (std::uint64_t s = 0; s < slots; ++s) {
      const auto len = detail::read_pod<std::uint64_t>(in);
      if (optimizer) {
        auto& m = optimizer->moments_m(static_cast<int>(s));
        auto& v = optimizer->moments_v(static_cast<int>(s));
        check_io(len == m.size(), "checkpoint optimizer slot size mismatch");
        detail::read_f32_array(in, m.data(), len);
        detail::read_f32_array(in, v.data(), len);
      } else {
        in.seekg(static_cast<std::streamoff>(len * 8), std::ios::cur);
      }
    }
    tag = detail::read_tag(in);
  } else {
    check_io(optimizer == nullptr, "checkpoint has no optimizer state to resume from");
  }
  check_io(tag == "END.", "checkpoint missing end marker");
  return model;
}

}  // namespace iddr
