#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace obed {

enum class EntropyEstimatorKind { vasicek, ebrahimi };

/// m-spacing estimator selection. m = 0 means automatic:
/// round(sqrt(N)) clamped to [1, (N-1)/2].
struct EntropyEstimator {
  EntropyEstimatorKind kind = EntropyEstimatorKind::ebrahimi;
  int m = 0;
};

/// Differential entropy of a normal distribution with the given variance,
/// in nats: (1/2) ln(2 pi e variance).
inline double normal_entropy(double variance) {
  if (!(variance > 0.0)) throw std::invalid_argument("normal_entropy: variance must be > 0");
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

namespace detail {

inline std::size_t resolve_spacing(const EntropyEstimator& est, std::size_t n) {
  if (n < 4) throw std::invalid_argument("spacing_entropy: need at least 4 samples");
  const std::size_t max_m = (n - 1) / 2;
  if (est.m != 0) {
    if (est.m < 1 || static_cast<std::size_t>(est.m) > max_m)
      throw std::invalid_argument("spacing_entropy: m out of range [1, (N-1)/2]");
    return static_cast<std::size_t>(est.m);
  }
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  return std::clamp<std::size_t>(m, 1, max_m);
}

}  // namespace detail

namespace detail {

// Sums logarithms by multiplying factors into a running product and taking
// one log per batch; the product is kept within a safe dynamic range.
class LogSum {
 public:
  void add(double factor) {
    if (factor < 1e-140 || factor > 1e140) {
      sum_ += std::log(factor);
      return;
    }
    prod_ *= factor;
    if (prod_ < 1e-140 || prod_ > 1e140) {
      sum_ += std::log(prod_);
      prod_ = 1.0;
    }
  }
  double value() const { return sum_ + std::log(prod_); }

 private:
  double sum_ = 0.0;
  double prod_ = 1.0;
};

}  // namespace detail

/// m-spacing differential entropy from pre-sorted samples (ascending).
///
/// Vasicek:  (1/N) sum_i ln[ N/(2m) (y(i+m) - y(i-m)) ]
/// Ebrahimi: same spacings with boundary coefficients c_i in place of 2,
///           c_i = 1 + (i-1)/m for i <= m, 1 + (N-i)/m for i >= N-m+1.
/// Indices clamp to [1, N]. Zero spacings (floating-point ties) are floored
/// at 1e-12 of the sample range so the logarithm stays finite.
inline double spacing_entropy_sorted(std::span<const double> sorted, const EntropyEstimator& est = {}) {
  const std::size_t n = sorted.size();
  const std::size_t m = detail::resolve_spacing(est, n);
  const double range = sorted[n - 1] - sorted[0];
  const double floor = 1e-12 * (range + std::numeric_limits<double>::min());

  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  // log of the constant per-term scale factors, accumulated separately from
  // the data-dependent spacings
  double scale_sum = 0.0;
  if (est.kind == EntropyEstimatorKind::vasicek) {
    scale_sum = nd * std::log(nd / (2.0 * md));
  } else {
    scale_sum = (nd - 2.0 * md) * std::log(nd / (2.0 * md));
    for (std::size_t i = 1; i <= m; ++i) {
      const double c = 1.0 + (static_cast<double>(i) - 1.0) / md;
      scale_sum += 2.0 * std::log(nd / (c * md));  // same coefficient at both ends
    }
  }

  detail::LogSum spacing_logs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t hi = std::min(i + m, n - 1);
    const std::size_t lo = i >= m ? i - m : 0;
    spacing_logs.add(std::max(sorted[hi] - sorted[lo], floor));
  }
  return (scale_sum + spacing_logs.value()) / nd;
}

/// m-spacing differential entropy of unordered samples. Copies and sorts.
inline double spacing_entropy(std::span<const double> samples, const EntropyEstimator& est = {}) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return spacing_entropy_sorted(sorted, est);
}

namespace detail {

// Order-preserving bit transform: key comparisons match double comparisons
// for all finite values.
inline std::uint64_t sort_key(double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, sizeof u);
  return u ^ ((u >> 63) ? ~0ULL : 0x8000000000000000ULL);
}

/// Sorts successive rows where consecutive rows tend to be near-identically
/// ordered (utility evaluation over a fine design grid). Keeps the previous
/// row's permutation as a hint: an insertion pass with a shift budget
/// handles small perturbations in O(N); rows that reorder heavily fall back
/// to an LSD radix sort on (key, index) pairs.
class RowSorter {
 public:
  void reset(std::size_t n) {
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = static_cast<std::uint32_t>(i);
    vp_.resize(n);
    kv_.resize(n);
    kv_scratch_.resize(n);
  }

  /// Writes the ascending values of `row` into `sorted`.
  void sort_row(std::span<const double> row, std::span<double> sorted) {
    const std::size_t n = row.size();
    if (perm_.size() != n) reset(n);

    // gather (value, index) pairs in the previous row's order so the
    // insertion pass works on contiguous memory
    for (std::size_t k = 0; k < n; ++k) vp_[k] = {row[perm_[k]], perm_[k]};

    long long budget = 4 * static_cast<long long>(n);
    bool ok = true;
    for (std::size_t k = 1; k < n && ok; ++k) {
      const VP item = vp_[k];
      std::size_t q = k;
      while (q > 0 && vp_[q - 1].value > item.value) {
        vp_[q] = vp_[q - 1];
        --q;
        if (--budget < 0) {
          ok = false;
          break;
        }
      }
      if (ok) vp_[q] = item;
    }
    if (ok) {
      for (std::size_t k = 0; k < n; ++k) {
        perm_[k] = vp_[k].index;
        sorted[k] = vp_[k].value;
      }
      return;
    }
    radix_sort_perm(row);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = row[perm_[i]];
  }

 private:
  struct VP {
    double value;
    std::uint32_t index;
  };
  struct KV {
    std::uint64_t key;
    std::uint32_t idx;
  };

  void radix_sort_perm(std::span<const double> row) {
    const std::size_t n = row.size();
    for (std::size_t i = 0; i < n; ++i) kv_[i] = {sort_key(row[i]), static_cast<std::uint32_t>(i)};
    std::uint32_t hist[8][256] = {};
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t k = kv_[i].key;
      for (int p = 0; p < 8; ++p) ++hist[p][(k >> (8 * p)) & 255];
    }
    for (int p = 0; p < 8; ++p) {
      std::uint32_t sum = 0;
      for (int b = 0; b < 256; ++b) {
        const std::uint32_t c = hist[p][b];
        hist[p][b] = sum;
        sum += c;
      }
    }
    KV* src = kv_.data();
    KV* dst = kv_scratch_.data();
    for (int p = 0; p < 8; ++p) {
      for (std::size_t i = 0; i < n; ++i) dst[hist[p][(src[i].key >> (8 * p)) & 255]++] = src[i];
      std::swap(src, dst);
    }
    // 8 passes: result is back in kv_
    for (std::size_t i = 0; i < n; ++i) perm_[i] = kv_[i].idx;
  }

  std::vector<std::uint32_t> perm_;
  std::vector<VP> vp_;
  std::vector<KV> kv_, kv_scratch_;
};

}  // namespace detail

}  // namespace obed
