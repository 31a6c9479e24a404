#pragma once

#include <vector>

#include "iddr/common.hpp"
#include "iddr/hash_encoding.hpp"

namespace iddr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-15;  // small epsilon keeps sparse hash rows adaptive
};

// Adam with bias correction. Parameter arrays are registered once, in a fixed
// order, and updated with either dense or touched-rows-only semantics; the
// bias correction always uses the global step count.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(const AdamConfig& config) : config_(config) {}

  int register_parameters(std::size_t count) {
    slots_m_.emplace_back(count, S(0));
    slots_v_.emplace_back(count, S(0));
    return static_cast<int>(slots_m_.size()) - 1;
  }

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }

  // Advances the step counter and fixes the learning rate and bias
  // corrections for the subsequent update_* calls.
  void begin_step(double lr) {
    ++step_;
    lr_ = lr;
    bias1_ = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    bias2_ = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  }

  void update_dense(int slot, S* params, const S* grads, std::size_t count) {
    S* m = slots_m_[slot].data();
    S* v = slots_v_[slot].data();
    check(count <= slots_m_[slot].size(), "adam slot size mismatch");
    for (std::size_t i = 0; i < count; ++i) {
      apply_one(params[i], m[i], v[i], grads[i]);
    }
  }

  // Sparse semantics for hash tables: rows that received no gradient this
  // step keep their moments untouched.
  void update_touched_rows(int slot, S* table, const S* grads,
                           const std::vector<std::uint8_t>& touched, int row_width) {
    S* m = slots_m_[slot].data();
    S* v = slots_v_[slot].data();
    for (std::size_t row = 0; row < touched.size(); ++row) {
      if (!touched[row]) continue;
      const std::size_t base = row * row_width;
      for (int f = 0; f < row_width; ++f) {
        apply_one(table[base + f], m[base + f], v[base + f], grads[base + f]);
      }
    }
  }

  // Serialization hooks for checkpoint resume.
  std::size_t slot_count() const { return slots_m_.size(); }
  std::vector<S>& moments_m(int slot) { return slots_m_[slot]; }
  std::vector<S>& moments_v(int slot) { return slots_v_[slot]; }
  const std::vector<S>& moments_m(int slot) const { return slots_m_[slot]; }
  const std::vector<S>& moments_v(int slot) const { return slots_v_[slot]; }
  void set_step_count(std::uint64_t step) { step_ = step; }

 private:
  void apply_one(S& p, S& m, S& v, S g) {
    m = static_cast<S>(config_.beta1 * m + (1.0 - config_.beta1) * g);
    v = static_cast<S>(config_.beta2 * v + (1.0 - config_.beta2) * g * g);
    const double m_hat = static_cast<double>(m) / bias1_;
    const double v_hat = static_cast<double>(v) / bias2_;
    p = static_cast<S>(p - lr_ * m_hat / (std::sqrt(v_hat) + config_.eps));
  }

  AdamConfig config_;
  std::uint64_t step_ = 0;
  double lr_ = 0;
  double bias1_ = 1;
  double bias2_ = 1;
  std::vector<std::vector<S>> slots_m_;
  std::vector<std::vector<S>> slots_v_;
};

}  // namespace iddr
