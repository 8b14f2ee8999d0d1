#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksum/arith.hpp"
#include "ksum/common.hpp"
#include "ksum/errors.hpp"
#include "ksum/multfun.hpp"
#include "ksum/parallel.hpp"

// The exponential sums themselves: complete, incomplete and weighted
// Kloosterman sums, the additive-shift completion transform, and the
// bilinear forms W = sum_m sum_n alpha_m beta_n e_q(a m* n* + b m n).
//
// Accumulation contract: terms are processed in fixed chunks (default 2^16)
// with compensated summation inside a chunk; chunk partials are combined in
// ascending chunk index. Results are therefore bit-identical for any thread
// count, and each result carries a rounding-error budget of
// kErrorKappa * eps * (sum of |term|).

namespace ksum::expsum {

using arith::KloostermanParams;
using arith::Modulus;

/// Fixed summation chunk; also the unit of parallel work.
inline constexpr u64 kSumChunk = u64(1) << 16;

/// Per-term error multiplier: ~4 eps from evaluating a unit root at an
/// exactly-reduced argument plus ~4 eps from two-level compensated
/// accumulation.
inline constexpr double kErrorKappa = 8.0;

struct SumResult {
  std::complex<double> value{0.0, 0.0};
  u64 terms = 0;          // summands with gcd(n, q) = 1 actually included
  double error_budget = 0; // upper bound on accumulated floating-point error

  double abs() const { return std::abs(value); }
};

namespace detail {

inline SumResult finish(const parallel::Accumulator& acc) {
  SumResult r;
  r.value = acc.value();
  r.terms = acc.terms;
  r.error_budget = kErrorKappa * std::numeric_limits<double>::epsilon() * acc.mass;
  return r;
}

/// True iff the residue r (mod q) passes the coprimality filter.
inline bool coprime_residue(u64 r, std::span<const u64> q_primes) {
  for (u64 p : q_primes) {
    if (r % p == 0) return false;
  }
  return true;
}

/// Shared kernel: accumulates f(n) e_q(a n* + b n) over the integers
/// n = first + j, j in [lo, hi), skipping n with gcd(n, q) > 1.
/// `weight(n)` supplies f(n); zero-weight coprime terms still count.
template <class WeightFn>
inline void accumulate_range(const KloostermanParams& p, i64 first, u64 lo, u64 hi,
                             WeightFn&& weight, parallel::Accumulator& acc) {
  const u64 q = p.modulus().value();
  const auto q_primes = p.modulus().prime_divisors();
  const u64 a = p.a(), b = p.b();

  std::vector<u64> residues;
  std::vector<u64> keep_n;
  residues.reserve(static_cast<std::size_t>(std::min<u64>(hi - lo, arith::kBatchInverseChunk)));
  keep_n.reserve(residues.capacity());

  u64 j = lo;
  while (j < hi) {
    residues.clear();
    keep_n.clear();
    const u64 stop = std::min<u64>(hi, j + arith::kBatchInverseChunk);
    for (; j < stop; ++j) {
      const u64 n = static_cast<u64>(first + static_cast<i64>(j));
      const u64 r = arith::reduce(static_cast<i64>(n), q);
      if (r == 0 || !coprime_residue(r, q_primes)) continue;
      residues.push_back(r);
      keep_n.push_back(n);
    }
    if (residues.empty()) continue;
    arith::batch_inverse_inplace(residues, p.modulus());
    for (std::size_t i = 0; i < residues.size(); ++i) {
      const u64 n = keep_n[i];
      const double f = weight(n);
      const u64 r = arith::reduce(static_cast<i64>(n), q);
      const u64 phase = arith::addmod(arith::mulmod(a, residues[i], q), arith::mulmod(b, r, q), q);
      if (f == 0.0) {
        acc.count_term();
        continue;
      }
      const std::complex<double> z = arith::detail::eq_root(phase, q);
      acc.add(f * z.real(), f * z.imag(), std::abs(f));
    }
  }
}

} // namespace detail

/// Complete sum over a full period: sum over n in [1, q], gcd(n, q) = 1, of
/// e_q(a n* + b n).
inline SumResult complete_sum(const KloostermanParams& p, unsigned threads = 0) {
  const u64 q = p.modulus().value();
  auto acc = parallel::chunked_reduce(0, q, kSumChunk, threads, [&](u64 lo, u64 hi,
                                                                    parallel::Accumulator& a) {
    detail::accumulate_range(p, /*first=*/1, lo, hi, [](u64) { return 1.0; }, a);
  });
  return detail::finish(acc);
}

/// Incomplete sum over M < n <= M + N with 1 < N < q. The range condition
/// lives on the integer n itself; n is reduced mod q for inversion.
inline SumResult incomplete_sum(const KloostermanParams& p, i64 M, u64 N, unsigned threads = 0) {
  const u64 q = p.modulus().value();
  if (N >= q)
    throw range_too_long("incomplete_sum: N = " + std::to_string(N) + " must be < q = " +
                         std::to_string(q));
  if (N <= 1) throw domain_error("incomplete_sum: N must be > 1");
  auto acc = parallel::chunked_reduce(0, N, kSumChunk, threads, [&](u64 lo, u64 hi,
                                                                    parallel::Accumulator& a) {
    detail::accumulate_range(p, M + 1, lo, hi, [](u64) { return 1.0; }, a);
  });
  return detail::finish(acc);
}

/// S_q(x; f) = sum of f(n) e_q(a n* + b n) over n <= x with gcd(n, q) = 1.
/// Requires x <= q unless allow_x_gt_q is set, and f tabulated through x.
inline SumResult weighted_sum(const KloostermanParams& p, const multfun::MultiplicativeWeight& f,
                              u64 x, bool allow_x_gt_q = false, unsigned threads = 0) {
  const u64 q = p.modulus().value();
  if (x == 0) throw domain_error("weighted_sum: x must be >= 1");
  if (x > q && !allow_x_gt_q)
    throw x_exceeds_q("weighted_sum: x = " + std::to_string(x) + " exceeds q = " +
                      std::to_string(q));
  if (f.limit() < x)
    throw weight_too_short("weighted_sum: weight '" + f.name + "' tabulated to " +
                           std::to_string(f.limit()) + " < x = " + std::to_string(x));
  const double* vals = f.values.data();
  auto acc = parallel::chunked_reduce(0, x, kSumChunk, threads, [&](u64 lo, u64 hi,
                                                                    parallel::Accumulator& a) {
    detail::accumulate_range(p, /*first=*/1, lo, hi, [vals](u64 n) { return vals[n]; }, a);
  });
  return detail::finish(acc);
}

/// Prefix sum over 1 <= n <= L without the 1 < L < q restriction of
/// incomplete_sum; used by the decomposition pipelines where ranges can
/// degenerate to a single term or a full period.
inline SumResult prefix_sum(const KloostermanParams& p, u64 L, unsigned threads = 0) {
  if (L == 0) return {};
  auto acc = parallel::chunked_reduce(0, L, kSumChunk, threads, [&](u64 lo, u64 hi,
                                                                    parallel::Accumulator& a) {
    detail::accumulate_range(p, /*first=*/1, lo, hi, [](u64) { return 1.0; }, a);
  });
  return detail::finish(acc);
}

/// Evaluates the incomplete sum through the complete-sum expansion over
/// additive shifts c in (-q/2, q/2]:
///
///   sum_{M < n <= M+N}' e_q(a n* + b n)
///     = sum_c gamma_c / (|c|+1) * K(a, b + c),
///   gamma_c = (|c|+1)/q * sum_{M < m <= M+N} e_q(-c m).
///
/// Must agree with incomplete_sum within the combined error budgets.
inline SumResult completion_transform(const KloostermanParams& p, i64 M, u64 N) {
  const u64 q = p.modulus().value();
  if (N >= q)
    throw range_too_long("completion_transform: N = " + std::to_string(N) + " must be < q");
  if (N <= 1) throw domain_error("completion_transform: N must be > 1");

  // Inverse residues and base phases a n* + b n for all coprime n in [1, q].
  const auto q_primes = p.modulus().prime_divisors();
  std::vector<u64> residues;
  residues.reserve(q);
  for (u64 n = 1; n <= q; ++n) {
    if (detail::coprime_residue(n % q, q_primes)) residues.push_back(n % q);
  }
  std::vector<u64> inverses(residues);
  if (!inverses.empty()) arith::batch_inverse_inplace(inverses, p.modulus());
  std::vector<u64> base_phase(residues.size());
  for (std::size_t i = 0; i < residues.size(); ++i) {
    base_phase[i] = arith::addmod(arith::mulmod(p.a(), inverses[i], q),
                                  arith::mulmod(p.b(), residues[i], q), q);
  }

  const i64 c_lo = -static_cast<i64>((q - 1) / 2); // smallest c with -q/2 < c
  const i64 c_hi = static_cast<i64>(q / 2);

  parallel::Accumulator outer;
  double inner_mass = 0.0;
  for (i64 c = c_lo; c <= c_hi; ++c) {
    // gamma_c / (|c|+1) = (1/q) * sum_{M < m <= M+N} e_q(-c m)
    parallel::Accumulator gacc;
    for (u64 j = 0; j < N; ++j) {
      const i64 m = M + 1 + static_cast<i64>(j);
      const u64 t = arith::reduce_wide(-static_cast<i128>(c) * m, q);
      gacc.add(arith::detail::eq_root(t, q), 1.0);
    }
    const std::complex<double> weight = gacc.value() / static_cast<double>(q);

    parallel::Accumulator kacc;
    const u64 cr = arith::reduce(c, q);
    for (std::size_t i = 0; i < residues.size(); ++i) {
      const u64 phase = arith::addmod(base_phase[i], arith::mulmod(cr, residues[i], q), q);
      kacc.add(arith::detail::eq_root(phase, q), 1.0);
    }
    const std::complex<double> kc = kacc.value();

    outer.add(weight * kc, 0.0);
    // Mass bookkeeping: |weight| * (terms of K) plus the gamma sum itself.
    inner_mass += std::abs(weight) * (static_cast<double>(residues.size()) + kacc.mass) +
                  gacc.mass / static_cast<double>(q) * std::abs(kc);
  }

  SumResult r;
  r.value = outer.value();
  // Term count mirrors the sum this transform reproduces.
  u64 included = 0;
  for (u64 j = 0; j < N; ++j) {
    const u64 rr = arith::reduce(M + 1 + static_cast<i64>(j), q);
    if (rr != 0 && detail::coprime_residue(rr, q_primes)) ++included;
  }
  r.terms = included;
  r.error_budget = kErrorKappa * std::numeric_limits<double>::epsilon() * inner_mass;
  return r;
}

// -------------------------------------------------------------------------
// Bilinear forms
// -------------------------------------------------------------------------

/// Ranges (m0, m1] x (n0, n1] with coefficient tables alpha on the m range
/// and beta on the n range. `lemma6_shape` asserts the dyadic conditions
/// m0 < m1 <= 2 m0, n0 < n1 <= 2 n0; general ranges are allowed otherwise.
struct BilinearSpec {
  u64 m0 = 0, m1 = 0;
  u64 n0 = 0, n1 = 0;
  std::vector<std::complex<double>> alpha; // alpha[m - m0 - 1], m in (m0, m1]
  std::vector<std::complex<double>> beta;  // beta[n - n0 - 1],  n in (n0, n1]
  unsigned alpha_level = 1; // declared |alpha_m| <= tau_l(m)
  unsigned beta_level = 1;  // declared |beta_n| <= tau_r(n)
  bool lemma6_shape = false;

  void validate() const {
    if (m1 <= m0 || n1 <= n0) throw domain_error("bilinear: empty range");
    if (alpha.size() != m1 - m0 || beta.size() != n1 - n0)
      throw domain_error("bilinear: coefficient table length does not match range");
    if (lemma6_shape && (m1 > 2 * m0 || n1 > 2 * n0))
      throw domain_error("bilinear: ranges violate the dyadic shape M < M1 <= 2M");
  }

  /// Constant-one coefficients over the given ranges.
  static BilinearSpec ones(u64 m0, u64 m1, u64 n0, u64 n1) {
    BilinearSpec s;
    s.m0 = m0;
    s.m1 = m1;
    s.n0 = n0;
    s.n1 = n1;
    s.alpha.assign(m1 - m0, {1.0, 0.0});
    s.beta.assign(n1 - n0, {1.0, 0.0});
    return s;
  }
};

namespace detail {

/// For prime q the sums of Eq-type W require every m, n invertible; reject
/// ranges containing a multiple of q. Composite q keeps the primed-sum
/// convention instead (non-coprime rows/columns are skipped).
inline void check_bilinear_ranges(const KloostermanParams& p, const BilinearSpec& s) {
  s.validate();
  if (!p.modulus().is_prime()) return;
  const u64 q = p.modulus().value();
  if (s.m1 / q > s.m0 / q)
    throw not_coprime("bilinear: m range contains a multiple of prime q");
  if (s.n1 / q > s.n0 / q)
    throw not_coprime("bilinear: n range contains a multiple of prime q");
}

} // namespace detail

/// W = sum over m in (m0, m1], n in (n0, n1] of alpha_m beta_n
/// e_q(a m* n* + b m n); pairs with m n > cap are excluded when cap is set.
inline SumResult bilinear_sum(const KloostermanParams& p, const BilinearSpec& spec,
                              std::optional<u64> cap = std::nullopt) {
  detail::check_bilinear_ranges(p, spec);
  const u64 q = p.modulus().value();
  const auto q_primes = p.modulus().prime_divisors();

  parallel::Accumulator acc;
  for (u64 m = spec.m0 + 1; m <= spec.m1; ++m) {
    const u64 rm = m % q;
    if (rm == 0 || !detail::coprime_residue(rm, q_primes)) continue;
    const u64 minv = arith::mod_inverse(rm, p.modulus());
    const std::complex<double> am = spec.alpha[m - spec.m0 - 1];
    for (u64 n = spec.n0 + 1; n <= spec.n1; ++n) {
      if (cap && u128(m) * n > *cap) break; // n ascending, product monotone
      const u64 rn = n % q;
      if (rn == 0 || !detail::coprime_residue(rn, q_primes)) continue;
      const u64 ninv = arith::mod_inverse(rn, p.modulus());
      const u64 phase =
          arith::addmod(arith::mulmod(arith::mulmod(p.a(), minv, q), ninv, q),
                        arith::mulmod(arith::mulmod(p.b(), rm, q), rn, q), q);
      const std::complex<double> term = am * spec.beta[n - spec.n0 - 1];
      if (term == std::complex<double>{0.0, 0.0}) {
        acc.count_term();
        continue;
      }
      acc.add(term * std::complex<double>(arith::detail::eq_root(phase, q)), std::abs(term));
    }
  }
  return detail::finish(acc);
}

/// Evaluates the capped bilinear sum through shifted uncapped sums W_c:
///
///   W = sum_{-q/2 < c <= q/2} (|c|+1)^{-1} W_c,
///   W_c = sum_m sum_n alpha_c(m) beta_c(n) e_q(a m* n* + b m n),
///   alpha_c(m) = alpha_m (|c|+1)/q * sum_{n0 < v <= N2(m)} e_q(-c v),
///   beta_c(n)  = beta_n e_q(c n),   N2(m) = min(n1, cap / m).
///
/// Agrees with bilinear_sum(p, spec, cap) within combined error budgets.
/// Requires the n range shorter than q (one full residue class per shift).
inline SumResult bilinear_completion(const KloostermanParams& p, const BilinearSpec& spec,
                                     u64 cap) {
  detail::check_bilinear_ranges(p, spec);
  const u64 q = p.modulus().value();
  if (spec.n1 - spec.n0 >= q)
    throw range_too_long("bilinear_completion: n range must be shorter than q");
  const auto q_primes = p.modulus().prime_divisors();

  struct Row {
    u64 m;
    u64 cutoff; // N2(m)
    std::complex<double> alpha;
    u64 minv;
  };
  std::vector<Row> rows;
  for (u64 m = spec.m0 + 1; m <= spec.m1; ++m) {
    const u64 rm = m % q;
    if (rm == 0 || !detail::coprime_residue(rm, q_primes)) continue;
    const u64 cutoff = std::min<u64>(spec.n1, cap / m);
    rows.push_back({m, cutoff, spec.alpha[m - spec.m0 - 1], arith::mod_inverse(rm, p.modulus())});
  }
  struct Col {
    u64 n;
    std::complex<double> beta;
    u64 ninv;
  };
  std::vector<Col> cols;
  for (u64 n = spec.n0 + 1; n <= spec.n1; ++n) {
    const u64 rn = n % q;
    if (rn == 0 || !detail::coprime_residue(rn, q_primes)) continue;
    cols.push_back({n, spec.beta[n - spec.n0 - 1], arith::mod_inverse(rn, p.modulus())});
  }

  // Kernel table e_q(a m* n* + b m n), reused for every shift c.
  std::vector<std::complex<double>> kernel(rows.size() * cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const u64 am = arith::mulmod(p.a(), rows[i].minv, q);
    const u64 bm = arith::mulmod(p.b(), rows[i].m % q, q);
    for (std::size_t jc = 0; jc < cols.size(); ++jc) {
      const u64 phase = arith::addmod(arith::mulmod(am, cols[jc].ninv, q),
                                      arith::mulmod(bm, cols[jc].n % q, q), q);
      kernel[i * cols.size() + jc] = arith::detail::eq_root(phase, q);
    }
  }

  double beta_abs = 0.0;
  for (const auto& col : cols) beta_abs += std::abs(col.beta);

  const i64 c_lo = -static_cast<i64>((q - 1) / 2);
  const i64 c_hi = static_cast<i64>(q / 2);

  parallel::Accumulator outer;
  double inner_mass = 0.0;
  std::vector<std::complex<double>> geom_prefix(spec.n1 - spec.n0 + 1);
  std::vector<std::complex<double>> col_phase(cols.size());
  for (i64 c = c_lo; c <= c_hi; ++c) {
    // Prefix sums of e_q(-c v) over the integer window v in (n0, n1].
    geom_prefix[0] = {0.0, 0.0};
    {
      parallel::Accumulator g;
      for (u64 v = spec.n0 + 1; v <= spec.n1; ++v) {
        g.add(arith::detail::eq_root(arith::reduce_wide(-static_cast<i128>(c) * v, q), q), 0.0);
        geom_prefix[v - spec.n0] = g.value();
      }
    }
    const u64 cr = arith::reduce(c, q);
    for (std::size_t jc = 0; jc < cols.size(); ++jc) {
      col_phase[jc] =
          cols[jc].beta *
          std::complex<double>(arith::detail::eq_root(arith::mulmod(cr, cols[jc].n % q, q), q));
    }
    const double abs_c1 = static_cast<double>(c < 0 ? -c : c) + 1.0;
    std::complex<double> wc{0.0, 0.0};
    double wc_mass = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].cutoff <= spec.n0) continue;
      const std::complex<double> ac =
          rows[i].alpha * geom_prefix[rows[i].cutoff - spec.n0] * (abs_c1 / static_cast<double>(q));
      if (ac == std::complex<double>{0.0, 0.0}) continue;
      std::complex<double> inner{0.0, 0.0};
      const std::complex<double>* krow = kernel.data() + i * cols.size();
      for (std::size_t jc = 0; jc < cols.size(); ++jc) inner += col_phase[jc] * krow[jc];
      wc += ac * inner;
      wc_mass += std::abs(ac) * beta_abs;
    }
    outer.add(wc / abs_c1, 0.0);
    inner_mass += wc_mass / abs_c1;
  }

  SumResult r;
  r.value = outer.value();
  // Same term-count semantics as the capped direct sum.
  for (const auto& row : rows) {
    for (const auto& col : cols) {
      if (col.n <= row.cutoff) ++r.terms;
    }
  }
  r.error_budget = kErrorKappa * std::numeric_limits<double>::epsilon() *
                   (inner_mass + static_cast<double>(spec.n1 - spec.n0));
  return r;
}

} // namespace ksum::expsum
