#pragma once

// Dense order-3/4 Tucker cores and n-mode vector contractions.
//
// Storage is row-major with mode 1 slowest: the entry (r1, r2, r3, r4) of an
// order-4 core of rank R lives at ((r1 * R + r2) * R + r3) * R + r4.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "engram/error.hpp"

namespace engram {

using LatentVector = std::vector<double>;

/// Tensor modes in the order the Tucker cores use them.
enum class Mode : std::size_t { subject = 0, predicate = 1, object = 2, time = 3 };

inline constexpr std::size_t mode_index(Mode m) { return static_cast<std::size_t>(m); }

inline const char* mode_name(std::size_t mode) {
  switch (mode) {
    case 0: return "subject";
    case 1: return "predicate";
    case 2: return "object";
    case 3: return "time";
    default: return "unknown";
  }
}

inline std::size_t int_pow(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) out *= base;
  return out;
}

class CoreTensor {
public:
  CoreTensor() = default;

  CoreTensor(std::size_t order, std::size_t rank)
      : order_(order), rank_(rank) {
    check_shape();
    values_.assign(int_pow(rank, order), 0.0);
  }

  CoreTensor(std::size_t order, std::size_t rank, std::vector<double> values)
      : order_(order), rank_(rank), values_(std::move(values)) {
    check_shape();
    if (values_.size() != int_pow(rank_, order_))
      throw DimensionError("core tensor of order " + std::to_string(order_) + " and rank " +
                           std::to_string(rank_) + " needs " +
                           std::to_string(int_pow(rank_, order_)) + " values, got " +
                           std::to_string(values_.size()));
  }

  /// g(r, r, ..., r) = 1, zero elsewhere.
  static CoreTensor superdiagonal(std::size_t order, std::size_t rank) {
    CoreTensor core(order, rank);
    std::size_t stride = 0;
    for (std::size_t m = 0; m < order; ++m) stride += int_pow(rank, m);
    for (std::size_t r = 0; r < rank; ++r) core.values_[r * stride] = 1.0;
    return core;
  }

  std::size_t order() const noexcept { return order_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  template <typename... Index>
  double& operator()(Index... idx) {
    return values_[linear_index({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Index>
  double operator()(Index... idx) const {
    return values_[linear_index({static_cast<std::size_t>(idx)...})];
  }

  std::size_t linear_index(std::initializer_list<std::size_t> idx) const {
    std::size_t lin = 0;
    for (auto i : idx) lin = lin * rank_ + i;
    return lin;
  }

  bool operator==(const CoreTensor&) const = default;

private:
  void check_shape() const {
    if (order_ != 3 && order_ != 4)
      throw DimensionError("core tensor order must be 3 or 4, got " + std::to_string(order_));
    if (rank_ == 0) throw DimensionError("core tensor rank must be positive");
  }

  std::size_t order_ = 0;
  std::size_t rank_ = 0;
  std::vector<double> values_;
};

namespace detail {

// Contracts `mode` of a dense tensor with `order` modes of extent `rank`;
// returns the order-1 smaller tensor in the same layout.
inline std::vector<double> contract_mode(std::span<const double> tensor, std::size_t order,
                                         std::size_t rank, std::size_t mode,
                                         std::span<const double> v) {
  const std::size_t outer = int_pow(rank, mode);
  const std::size_t inner = int_pow(rank, order - mode - 1);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out.data() + o * inner;
    for (std::size_t k = 0; k < rank; ++k) {
      const double w = v[k];
      const double* src = tensor.data() + (o * rank + k) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
    }
  }
  return out;
}

inline void check_vector(const CoreTensor& core, std::size_t mode, std::span<const double> v) {
  if (v.size() != core.rank())
    throw DimensionError("mode " + std::to_string(mode + 1) + " (" + mode_name(mode) +
                         "): vector length " + std::to_string(v.size()) +
                         " does not match core rank " + std::to_string(core.rank()));
}

}  // namespace detail

/// Full contraction of the core with one vector per mode.
inline double contract(const CoreTensor& core, std::span<const std::span<const double>> vectors) {
  if (vectors.size() != core.order())
    throw DimensionError("expected " + std::to_string(core.order()) + " vectors, got " +
                         std::to_string(vectors.size()));
  for (std::size_t m = 0; m < core.order(); ++m) detail::check_vector(core, m, vectors[m]);

  // Contract from the fastest mode outward so each step reads contiguous slabs.
  std::vector<double> t(core.values().begin(), core.values().end());
  for (std::size_t m = core.order(); m-- > 0;)
    t = detail::contract_mode(t, m + 1, core.rank(), m, vectors[m]);
  return t[0];
}

/// Contracts every mode except `free_mode`; returns h with
/// contract(core, ..v at free_mode..) == dot(v, h). The entry of `vectors`
/// at `free_mode` is ignored and may be empty.
inline LatentVector contract_leave_one(const CoreTensor& core,
                                       std::span<const std::span<const double>> vectors,
                                       std::size_t free_mode) {
  if (vectors.size() != core.order())
    throw DimensionError("expected " + std::to_string(core.order()) + " vectors, got " +
                         std::to_string(vectors.size()));
  if (free_mode >= core.order())
    throw DimensionError("free mode " + std::to_string(free_mode + 1) + " out of range for order " +
                         std::to_string(core.order()));
  for (std::size_t m = 0; m < core.order(); ++m)
    if (m != free_mode) detail::check_vector(core, m, vectors[m]);

  std::vector<double> t(core.values().begin(), core.values().end());
  std::size_t remaining = core.order();
  for (std::size_t m = core.order(); m-- > 0;) {
    if (m == free_mode) continue;
    // every mode below m is still present, so m keeps its position
    t = detail::contract_mode(t, remaining, core.rank(), m, vectors[m]);
    --remaining;
  }
  return t;
}

inline double contract3(const CoreTensor& core, std::span<const double> v1,
                        std::span<const double> v2, std::span<const double> v3) {
  if (core.order() != 3) throw DimensionError("contract3 needs an order-3 core");
  const std::array<std::span<const double>, 3> vs{v1, v2, v3};
  return contract(core, vs);
}

inline double contract4(const CoreTensor& core, std::span<const double> v1,
                        std::span<const double> v2, std::span<const double> v3,
                        std::span<const double> v4) {
  if (core.order() != 4) throw DimensionError("contract4 needs an order-4 core");
  const std::array<std::span<const double>, 4> vs{v1, v2, v3, v4};
  return contract(core, vs);
}

/// `fixed` holds the three non-free vectors in mode order.
inline LatentVector contract4_leave_one(const CoreTensor& core,
                                        const std::array<std::span<const double>, 3>& fixed,
                                        Mode free_mode) {
  if (core.order() != 4) throw DimensionError("contract4_leave_one needs an order-4 core");
  std::array<std::span<const double>, 4> vs{};
  for (std::size_t m = 0, j = 0; m < 4; ++m)
    if (m != mode_index(free_mode)) vs[m] = fixed[j++];
  return contract_leave_one(core, vs, mode_index(free_mode));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace engram
