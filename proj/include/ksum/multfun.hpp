#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "ksum/arith.hpp"
#include "ksum/common.hpp"
#include "ksum/errors.hpp"

// Sieve-generated tables of the multiplicative weights used by the sum
// evaluators: mu(n), mu^2(n), tau_k(n), and the normalized two-squares
// count r(n)/4. Tables are built once and immutable afterwards, so
// completed weights are safe for concurrent readers.

namespace ksum::multfun {

/// Declared pointwise bound for a weight: either |f(n)| <= 1 or
/// |f(n)| <= tau_l(n) for the stored level l.
enum class BoundClass : u64 { unit = 0, divisor_bounded = 1 };

struct MultiplicativeWeight {
  std::string name;
  BoundClass bound_class = BoundClass::unit;
  unsigned divisor_level = 1; // l of tau_l for divisor_bounded weights
  std::vector<double> values; // values[n] for 0 <= n <= limit; values[0] unused

  u64 limit() const noexcept { return values.empty() ? 0 : values.size() - 1; }

  double at(u64 n) const {
    if (n == 0 || n > limit())
      throw weight_too_short("weight '" + name + "' tabulated to " + std::to_string(limit()) +
                             ", asked for n = " + std::to_string(n));
    return values[n];
  }
};

namespace detail {

inline void require_positive(u64 x, const char* who) {
  if (x < 1) throw domain_error(std::string(who) + ": x must be >= 1");
}

} // namespace detail

/// Exact Moebius function table for n <= x by linear sieve.
inline MultiplicativeWeight sieve_moebius(u64 x) {
  detail::require_positive(x, "sieve_moebius");
  std::vector<signed char> mu(x + 1, 0);
  std::vector<u32> primes;
  std::vector<bool> composite(x + 1, false);
  mu[1] = 1;
  for (u64 i = 2; i <= x; ++i) {
    if (!composite[i]) {
      primes.push_back(static_cast<u32>(i));
      mu[i] = -1;
    }
    for (u32 p : primes) {
      const u64 ip = i * p;
      if (ip > x) break;
      composite[ip] = true;
      if (i % p == 0) {
        mu[ip] = 0;
        break;
      }
      mu[ip] = static_cast<signed char>(-mu[i]);
    }
  }
  MultiplicativeWeight w;
  w.name = "moebius";
  w.bound_class = BoundClass::unit;
  w.values.assign(mu.begin(), mu.end());
  w.values[0] = 0.0;
  return w;
}

/// mu^2(n): the indicator of squarefree numbers.
inline MultiplicativeWeight sieve_moebius_sq(u64 x) {
  MultiplicativeWeight w = sieve_moebius(x);
  w.name = "moebius2";
  for (double& v : w.values) v *= v;
  return w;
}

/// Constant weight f == 1 (tau_1 by convention).
inline MultiplicativeWeight sieve_one(u64 x) {
  detail::require_positive(x, "sieve_one");
  MultiplicativeWeight w;
  w.name = "one";
  w.bound_class = BoundClass::unit;
  w.values.assign(x + 1, 1.0);
  w.values[0] = 0.0;
  return w;
}

/// tau_k(n) for n <= x. tau_1 == 1; higher levels by repeated Dirichlet
/// convolution with 1 (harmonic-sum sieve, O(x log x) per level). Values are
/// exact: they stay far below 2^53 at any reachable table size.
inline MultiplicativeWeight sieve_tau_k(u64 x, unsigned k) {
  detail::require_positive(x, "sieve_tau_k");
  if (k < 1) throw domain_error("sieve_tau_k: k must be >= 1");
  std::vector<double> cur(x + 1, 1.0);
  cur[0] = 0.0;
  for (unsigned level = 2; level <= k; ++level) {
    std::vector<double> next(x + 1, 0.0);
    for (u64 d = 1; d <= x; ++d) {
      const double vd = cur[d];
      for (u64 m = d; m <= x; m += d) next[m] += vd;
    }
    cur = std::move(next);
  }
  MultiplicativeWeight w;
  w.name = "tau" + std::to_string(k);
  w.bound_class = k == 1 ? BoundClass::unit : BoundClass::divisor_bounded;
  w.divisor_level = k;
  w.values = std::move(cur);
  return w;
}

/// Raw lattice-point counts r(n) = #{(a,b) in Z^2 : a^2 + b^2 = n}, via
/// r(n) = 4 * sum_{d | n} chi_4(d). r(0) is set to 0.
inline std::vector<i64> r2_counts(u64 x) {
  detail::require_positive(x, "r2_counts");
  std::vector<i64> chi_sum(x + 1, 0);
  for (u64 d = 1; d <= x; d += 2) {
    const i64 s = (d % 4 == 1) ? 1 : -1;
    for (u64 m = d; m <= x; m += d) chi_sum[m] += s;
  }
  for (auto& v : chi_sum) v *= 4;
  return chi_sum;
}

/// The multiplicative weight r(n)/4 = sum_{d|n} chi_4(d). The raw r(n) has
/// r(1) = 4, so only the normalized variant qualifies as a multiplicative
/// weight (f(1) = 1, |f(n)| <= tau(n)). Harnesses that require |f| <= 1
/// reject it through its bound class.
inline MultiplicativeWeight sieve_r2(u64 x) {
  auto raw = r2_counts(x);
  MultiplicativeWeight w;
  w.name = "r2/4";
  w.bound_class = BoundClass::divisor_bounded;
  w.divisor_level = 2;
  w.values.resize(x + 1);
  for (u64 n = 0; n <= x; ++n) w.values[n] = static_cast<double>(raw[n]) / 4.0;
  w.values[0] = 0.0;
  return w;
}

/// P(n) = largest prime divisor of n for 2 <= n <= x; P(1) = 1.
struct LargestPrimeFactorTable {
  std::vector<u64> table; // table[n] for 0 <= n <= x

  u64 limit() const noexcept { return table.empty() ? 0 : table.size() - 1; }
  u64 at(u64 n) const {
    if (n == 0 || n > limit())
      throw domain_error("largest_prime_factor_table: n out of range");
    return table[n];
  }
};

inline LargestPrimeFactorTable largest_prime_factor_table(u64 x) {
  if (x < 2) throw domain_error("largest_prime_factor_table: x must be >= 2");
  LargestPrimeFactorTable t;
  t.table.assign(x + 1, 0);
  t.table[1] = 1;
  // Ascending primes overwrite, so the last writer is the largest factor.
  for (u64 p = 2; p <= x; ++p) {
    if (t.table[p] == 0) {
      for (u64 m = p; m <= x; m += p) t.table[m] = p;
    }
  }
  return t;
}

// -------------------------------------------------------------------------
// Binary weight-table cache (little-endian 64-bit records) so CLI runs can
// skip re-sieving. Layout: magic, name length, name bytes, limit, bound
// class, divisor level, then limit+1 IEEE doubles.
// -------------------------------------------------------------------------

inline constexpr u64 kWeightMagic = 0x314257'4d55534bull; // "KSUMWB1"

inline void save_weight(const MultiplicativeWeight& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  auto put_u64 = [&](u64 v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  put_u64(kWeightMagic);
  put_u64(w.name.size());
  out.write(w.name.data(), static_cast<std::streamsize>(w.name.size()));
  put_u64(w.limit());
  put_u64(static_cast<u64>(w.bound_class));
  put_u64(w.divisor_level);
  out.write(reinterpret_cast<const char*>(w.values.data()),
            static_cast<std::streamsize>(w.values.size() * sizeof(double)));
  if (!out) throw io_error("short write to " + path.string());
}

inline MultiplicativeWeight load_weight(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  auto get_u64 = [&]() {
    u64 v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  if (get_u64() != kWeightMagic) throw io_error(path.string() + ": not a weight table");
  MultiplicativeWeight w;
  const u64 name_len = get_u64();
  if (name_len > 4096) throw io_error(path.string() + ": corrupt header");
  w.name.resize(name_len);
  in.read(w.name.data(), static_cast<std::streamsize>(name_len));
  const u64 limit = get_u64();
  w.bound_class = static_cast<BoundClass>(get_u64());
  w.divisor_level = static_cast<unsigned>(get_u64());
  w.values.resize(limit + 1);
  in.read(reinterpret_cast<char*>(w.values.data()),
          static_cast<std::streamsize>(w.values.size() * sizeof(double)));
  if (!in) throw io_error(path.string() + ": truncated weight table");
  return w;
}

/// CLI-facing lookup: "moebius", "moebius2", "one", "tauK" (K = 1..9), "r2".
inline MultiplicativeWeight weight_by_name(std::string_view name, u64 x) {
  if (name == "moebius" || name == "mu") return sieve_moebius(x);
  if (name == "moebius2" || name == "mu2") return sieve_moebius_sq(x);
  if (name == "one") return sieve_one(x);
  if (name == "r2") return sieve_r2(x);
  if (name.size() == 4 && name.starts_with("tau") && name[3] >= '1' && name[3] <= '9')
    return sieve_tau_k(x, static_cast<unsigned>(name[3] - '0'));
  throw domain_error("unknown weight '" + std::string(name) + "'");
}

} // namespace ksum::multfun
