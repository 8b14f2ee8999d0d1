#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <thread>
#include <vector>

#include "ksum/common.hpp"

// Deterministic chunked reduction. Work is cut into fixed-size chunks that
// do not depend on the thread count; each chunk is accumulated with
// Neumaier-compensated summation and the chunk partials are combined in
// ascending chunk order. Two runs with different thread counts therefore
// produce bit-identical results.

namespace ksum::parallel {

/// Worker count: KSUM_THREADS env var if set, else hardware concurrency.
inline unsigned default_threads() {
  if (const char* env = std::getenv("KSUM_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned h = std::thread::hardware_concurrency();
  return h ? h : 1;
}

/// Compensated accumulator for complex terms. `mass` tallies the sum of
/// |term| upper bounds, which feeds the rounding-error budget.
struct Accumulator {
  double re = 0.0, im = 0.0;
  double c_re = 0.0, c_im = 0.0; // compensation carries
  double mass = 0.0;
  u64 terms = 0;

  static void comp_add(double& sum, double& carry, double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }

  void add(double x, double y, double term_mass) {
    comp_add(re, c_re, x);
    comp_add(im, c_im, y);
    mass += term_mass;
    ++terms;
  }

  void add(std::complex<double> z, double term_mass) { add(z.real(), z.imag(), term_mass); }

  /// Count a summand that contributes exactly zero (still a term).
  void count_term() { ++terms; }

  std::complex<double> value() const { return {re + c_re, im + c_im}; }

  /// Fold a finished chunk into this accumulator (call in chunk order).
  void merge(const Accumulator& part) {
    comp_add(re, c_re, part.re + part.c_re);
    comp_add(im, c_im, part.im + part.c_im);
    mass += part.mass;
    terms += part.terms;
  }
};

/// Runs body(lo, hi, acc) over chunks of [begin, end) and merges the chunk
/// accumulators in index order. threads == 0 means default_threads().
template <class Body>
inline Accumulator chunked_reduce(u64 begin, u64 end, u64 chunk_size, unsigned threads,
                                  Body&& body) {
  Accumulator total;
  if (end <= begin) return total;
  if (chunk_size == 0) chunk_size = 1;
  const u64 n_chunks = (end - begin + chunk_size - 1) / chunk_size;
  if (threads == 0) threads = default_threads();

  std::vector<Accumulator> parts(n_chunks);
  auto run_chunk = [&](u64 k) {
    const u64 lo = begin + k * chunk_size;
    const u64 hi = std::min(end, lo + chunk_size);
    body(lo, hi, parts[k]);
  };

  const unsigned workers = static_cast<unsigned>(std::min<u64>(threads, n_chunks));
  if (workers <= 1) {
    for (u64 k = 0; k < n_chunks; ++k) run_chunk(k);
  } else {
    std::atomic<u64> next{0};
    auto worker = [&] {
      for (;;) {
        const u64 k = next.fetch_add(1, std::memory_order_relaxed);
        if (k >= n_chunks) break;
        run_chunk(k);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& part : parts) total.merge(part);
  return total;
}

} // namespace ksum::parallel
