// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_COMMON_HPP
#define PENABC_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace penabc {

/// Row-major dense matrix. Tables of series/parameters are stored one item per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The single random engine used everywhere. Seeded streams are derived with derive_seed().
using Rng = std::mt19937_64;

/// Raised for invalid user configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed for an independent stream identified by (base, stream, index).
/// Streams for different indices are order-independent, so batches can be
/// generated in any order or in parallel and still reproduce bitwise.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) noexcept;

inline Rng make_rng(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(base, stream, index));
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Linear interpolation between order statistics ("type 7"). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double prob);

/// `n` equally spaced points from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, std::size_t n);

/// Splits [0, n) into contiguous chunks and runs body(begin, end) on up to
/// `threads` workers (0 means hardware concurrency). The first exception
/// thrown by any worker is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// 64-bit FNV-1a over a byte string; used for stage stamps.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates many short-lived batch matrices; without this glibc maps
/// and unmaps them on every step. No-op on other C libraries.
void tune_allocator() noexcept;

}  // namespace penabc

#endif  // PENABC_COMMON_HPP
