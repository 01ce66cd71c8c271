#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "txray/error.hpp"

namespace txray {

/// Order-independent exact accumulator for non-negative doubles.
///
/// Every double is an integer multiple of 2^-1074, so the running total is
/// kept as a sparse big integer in base 2^32 digits. The integer does not
/// depend on summation order; neither does value(), which reads the canonical
/// digits. Two accumulators built from the same multiset therefore compare
/// equal and produce bit-identical values however the inputs were
/// partitioned or ordered.
class ExactSum {
 public:
  void add(double x) {
    if (!std::isfinite(x) || x < 0.0) {
      throw DataError("ExactSum accepts finite non-negative values only");
    }
    if (x == 0.0) return;
    int exp = 0;
    const double frac = std::frexp(x, &exp);
    auto mantissa = static_cast<std::uint64_t>(std::ldexp(frac, 53));
    int e = exp - 53;
    if (e < kMinExponent) {
      mantissa >>= (kMinExponent - e);  // exact: x is a multiple of 2^-1074
      e = kMinExponent;
    }
    const int offset = e - kMinExponent;
    const int idx = offset / 32;
    const unsigned __int128 shifted = static_cast<unsigned __int128>(mantissa) << (offset % 32);
    bump(idx, static_cast<std::int64_t>(static_cast<std::uint32_t>(shifted)));
    bump(idx + 1, static_cast<std::int64_t>(static_cast<std::uint32_t>(shifted >> 32)));
    bump(idx + 2, static_cast<std::int64_t>(static_cast<std::uint32_t>(shifted >> 64)));
  }

  void merge(const ExactSum& other) {
    for (const auto& [idx, v] : other.digits_) bump(idx, v);
  }

  /// Deterministic double close to the exact total (within a few ulp).
  double value() const {
    const auto canon = canonical();
    double total = 0.0;
    for (const auto& [idx, v] : canon) total += std::ldexp(static_cast<double>(v), idx * 32 + kMinExponent);
    return total;
  }

  bool empty() const { return digits_.empty(); }

  friend bool operator==(const ExactSum& a, const ExactSum& b) { return a.canonical() == b.canonical(); }

 private:
  static constexpr int kMinExponent = -1074;
  static constexpr std::int64_t kCarryThreshold = std::int64_t{1} << 61;

  void bump(int idx, std::int64_t v) {
    if (v == 0) return;
    auto it = digits_.begin();
    while (it != digits_.end() && it->first < idx) ++it;
    if (it == digits_.end() || it->first != idx) it = digits_.insert(it, {idx, 0});
    it->second += v;
    if (it->second >= kCarryThreshold) {
      const std::int64_t carry = it->second >> 32;
      it->second &= 0xffffffffLL;
      bump(idx + 1, carry);
    }
  }

  std::vector<std::pair<int, std::int64_t>> canonical() const {
    std::vector<std::pair<int, std::int64_t>> out;
    std::int64_t carry = 0;
    int next = digits_.empty() ? 0 : digits_.front().first;
    auto it = digits_.begin();
    while (it != digits_.end() || carry != 0) {
      std::int64_t v = carry;
      if (it != digits_.end() && it->first == next) {
        v += it->second;
        ++it;
      }
      if (v & 0xffffffffLL) out.emplace_back(next, v & 0xffffffffLL);
      carry = v >> 32;
      if (carry == 0 && it != digits_.end()) {
        next = it->first;
      } else {
        ++next;
      }
    }
    return out;
  }

  // Sorted by digit index; at most a handful of entries in practice.
  std::vector<std::pair<int, std::int64_t>> digits_;
};

}  // namespace txray
