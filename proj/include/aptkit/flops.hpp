#pragma once

#include <cstdint>
#include <string>

namespace aptkit {

// Operation counter. Conventions (used consistently by the kernels and by the
// closed forms in costmodel so the two agree exactly):
//
//   * one multiply-accumulate (MAC) = 2 FLOPs; exp, divide, compare and add
//     each = 1 FLOP; total_flops = 2*macs + exps + divs + cmps + adds
//   * matmul(a, b) records a.rows * a.cols * b.cols MACs; an accumulating
//     matmul (c += a*b) records the same, the accumulation is the MAC's add
//   * scaling a matrix by a scalar records one MAC per entry
//   * elementwise add/subtract record one add per entry
//   * row-wise softmax records one exp per entry and one divide per row; the
//     max-shift comparisons, the denominator accumulation and the per-entry
//     normalization multiplies are uncounted (same rule applies to the
//     incremental renormalization in the prompt-extension path)
//   * relu records one compare per entry; global max records one compare per
//     entry
//   * structural ops (transpose, concat, slice) record nothing
struct FlopCounter {
  std::uint64_t macs = 0;
  std::uint64_t exps = 0;
  std::uint64_t divs = 0;
  std::uint64_t cmps = 0;
  std::uint64_t adds = 0;

  std::uint64_t total_flops() const { return 2 * macs + exps + divs + cmps + adds; }

  FlopCounter& operator+=(const FlopCounter& o);
  FlopCounter operator+(const FlopCounter& o) const;
  // Per-field difference; requires *this >= o in every field.
  FlopCounter operator-(const FlopCounter& o) const;
  bool operator==(const FlopCounter& o) const = default;

  std::string describe() const;
};

// RAII scope that directs counts from numeric kernels on the current thread
// into `target`. Scopes nest (inner scope wins); each scope is confined to
// the thread that opened it.
class CountingScope {
 public:
  explicit CountingScope(FlopCounter& target);
  ~CountingScope();
  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

 private:
  FlopCounter* prev_;
};

bool counting_active();
void record_macs(std::uint64_t n);
void record_exps(std::uint64_t n);
void record_divs(std::uint64_t n);
void record_cmps(std::uint64_t n);
void record_adds(std::uint64_t n);

}  // namespace aptkit
