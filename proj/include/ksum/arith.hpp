#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ksum/common.hpp"
#include "ksum/errors.hpp"

// Exact integer and modular arithmetic substrate: gcd, modular inverses
// (single and batched), prime sieves, divisor counts and the root-of-unity
// evaluator e_q(v) = exp(2*pi*i*v/q).
//
// All operations are pure and safe to call concurrently.

namespace ksum::arith {

/// Default chunk length for prefix-product batch inversion. One extended
/// Euclid call is amortized over this many elements.
inline constexpr std::size_t kBatchInverseChunk = 4096;

inline u64 mulmod(u64 a, u64 b, u64 q) { return static_cast<u64>((u128(a) * b) % q); }

inline u64 addmod(u64 a, u64 b, u64 q) {
  // a, b < q <= 2^63, so a + b cannot wrap.
  u64 s = a + b;
  return s >= q ? s - q : s;
}

/// Euclidean reduction of a signed value into [0, q).
inline u64 reduce(i64 v, u64 q) {
  i64 r = v % static_cast<i64>(q);
  return r < 0 ? static_cast<u64>(r + static_cast<i64>(q)) : static_cast<u64>(r);
}

inline u64 reduce_wide(i128 v, u64 q) {
  i128 r = v % static_cast<i128>(q);
  return r < 0 ? static_cast<u64>(r + static_cast<i128>(q)) : static_cast<u64>(r);
}

inline u64 powmod(u64 base, u64 exp, u64 q) {
  u64 r = 1 % q;
  base %= q;
  while (exp) {
    if (exp & 1) r = mulmod(r, base, q);
    base = mulmod(base, base, q);
    exp >>= 1;
  }
  return r;
}

/// Deterministic Miller-Rabin for the full 64-bit range (the chosen base set
/// is known to have no strong pseudoprimes below 3.3e24).
inline bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    u64 x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < s; ++i) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

namespace detail {

inline u64 pollard_rho(u64 n) {
  // Brent's cycle variant; n must be odd, composite and not a prime power
  // smaller than the trial-division floor.
  for (u64 c = 1;; ++c) {
    auto step = [&](u64 x) { return addmod(mulmod(x, x, n), c, n); };
    u64 y = 2, d = 1;
    for (u64 len = 1; d == 1; len *= 2) {
      const u64 anchor = y;
      u64 prod = 1;
      for (u64 i = 0; i < len && d == 1; ++i) {
        y = step(y);
        prod = mulmod(prod, anchor > y ? anchor - y : y - anchor, n);
        if ((i & 127) == 127 || i + 1 == len) {
          d = std::gcd(prod, n);
          prod = 1;
        }
      }
    }
    if (d != n) return d;
  }
}

inline void factor_into(u64 n, std::vector<u64>& out) {
  if (n == 1) return;
  if (is_prime(n)) {
    out.push_back(n);
    return;
  }
  u64 d = pollard_rho(n);
  factor_into(d, out);
  factor_into(n / d, out);
}

} // namespace detail

struct PrimePower {
  u64 prime = 0;
  unsigned exponent = 0;
  bool operator==(const PrimePower&) const = default;
};

/// Full factorization, ascending by prime. Exact for every 64-bit input.
inline std::vector<PrimePower> factorize(u64 n) {
  std::vector<u64> primes;
  for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull,
                41ull, 43ull, 47ull, 53ull, 59ull, 61ull, 67ull, 71ull, 73ull, 79ull, 83ull,
                89ull, 97ull}) {
    while (n % p == 0) {
      primes.push_back(p);
      n /= p;
    }
  }
  if (n > 1) detail::factor_into(n, primes);
  std::sort(primes.begin(), primes.end());
  std::vector<PrimePower> out;
  for (u64 p : primes) {
    if (!out.empty() && out.back().prime == p) {
      ++out.back().exponent;
    } else {
      out.push_back({p, 1});
    }
  }
  return out;
}

/// The modulus q of the exponential e_q. Carries its factorization so that
/// tau(q), prime divisors and coprimality filters are cheap at every call
/// site. Immutable after construction; safe to share across threads.
class Modulus {
 public:
  explicit Modulus(u64 q) : q_(q) {
    if (q < 3) throw domain_error("modulus must be >= 3, got " + std::to_string(q));
    if (q > static_cast<u64>(std::numeric_limits<i64>::max()))
      throw domain_error("modulus must fit in a signed 64-bit integer");
    factors_ = factorize(q);
  }

  u64 value() const noexcept { return q_; }
  const std::vector<PrimePower>& factorization() const noexcept { return factors_; }

  bool is_prime() const noexcept {
    return factors_.size() == 1 && factors_.front().exponent == 1;
  }

  /// tau(q), the number of divisors.
  u64 divisor_count() const noexcept {
    u64 t = 1;
    for (const auto& f : factors_) t *= f.exponent + 1;
    return t;
  }

  std::vector<u64> prime_divisors() const {
    std::vector<u64> ps;
    ps.reserve(factors_.size());
    for (const auto& f : factors_) ps.push_back(f.prime);
    return ps;
  }

 private:
  u64 q_;
  std::vector<PrimePower> factors_;
};

/// The triple (q, a, b) of S_q(x; f) = sum' f(n) e_q(a n* + b n).
/// The standard constructor enforces gcd(a, q) = 1; `unrestricted` admits
/// general a for the complete-sum bound that covers (a, b, q) jointly.
class KloostermanParams {
 public:
  KloostermanParams(Modulus q, i64 a, i64 b)
      : KloostermanParams(std::move(q), a, b, /*unrestricted=*/false) {
    if (std::gcd(a_, q_.value()) != 1)
      throw not_coprime("a = " + std::to_string(a_) + " is not coprime to q = " +
                        std::to_string(q_.value()));
  }

  static KloostermanParams unrestricted(Modulus q, i64 a, i64 b) {
    return KloostermanParams(std::move(q), a, b, /*unrestricted=*/true);
  }

  const Modulus& modulus() const noexcept { return q_; }
  u64 a() const noexcept { return a_; }
  u64 b() const noexcept { return b_; }
  bool is_unrestricted() const noexcept { return unrestricted_; }

 private:
  KloostermanParams(Modulus q, i64 a, i64 b, bool unrestricted)
      : q_(std::move(q)),
        a_(reduce(a, q_.value())),
        b_(reduce(b, q_.value())),
        unrestricted_(unrestricted) {}

  Modulus q_;
  u64 a_;
  u64 b_;
  bool unrestricted_;
};

/// A point on the unit circle; |re^2 + im^2 - 1| stays within 4 ulp.
struct UnitRoot {
  double re = 1.0;
  double im = 0.0;
  operator std::complex<double>() const { return {re, im}; }
};

/// e_q(v) = exp(2 pi i v / q). The reduction v mod q happens in exact
/// integer arithmetic before any floating-point conversion, so the result
/// is bitwise periodic in v and accurate for |v| near 2^63.
inline UnitRoot unit_root(i64 v, const Modulus& q) {
  const u64 r = reduce(v, q.value());
  const double theta =
      2.0 * std::numbers::pi * (static_cast<double>(r) / static_cast<double>(q.value()));
  return {std::cos(theta), std::sin(theta)};
}

namespace detail {

/// Hot-loop variant of unit_root for an already-reduced residue.
inline std::complex<double> eq_root(u64 residue, u64 q) {
  const double theta =
      2.0 * std::numbers::pi * (static_cast<double>(residue) / static_cast<double>(q));
  return {std::cos(theta), std::sin(theta)};
}

} // namespace detail

/// n* in [1, q) with n n* == 1 (mod q), by extended Euclid. Works for every
/// modulus >= 3, prime or not.
inline u64 mod_inverse(u64 n, const Modulus& q) {
  const u64 qq = q.value();
  u64 r = n % qq;
  if (std::gcd(r, qq) != 1)
    throw not_coprime("n = " + std::to_string(n) + " is not invertible mod " + std::to_string(qq));
  i64 old_s = 1, s = 0;
  i64 old_r = static_cast<i64>(r), rr = static_cast<i64>(qq);
  while (rr != 0) {
    i64 quot = old_r / rr;
    old_r -= quot * rr;
    std::swap(old_r, rr);
    old_s -= quot * s;
    std::swap(old_s, s);
  }
  // old_r == 1, old_s is the Bezout coefficient of n.
  return reduce(old_s, qq);
}

/// In-place batch inversion via the prefix-product trick: one extended
/// Euclid per `chunk` elements, three modular multiplications per element.
/// Elements are reduced mod q first. Throws not_coprime with the first
/// offending index.
inline void batch_inverse_inplace(std::span<u64> ns, const Modulus& q,
                                  std::size_t chunk = kBatchInverseChunk) {
  if (ns.empty()) throw domain_error("batch_inverse: empty input");
  if (chunk == 0) chunk = kBatchInverseChunk;
  const u64 qq = q.value();
  std::vector<u64> prefix(std::min(chunk, ns.size()));
  for (std::size_t base = 0; base < ns.size(); base += chunk) {
    const std::size_t len = std::min(chunk, ns.size() - base);
    u64 acc = 1;
    for (std::size_t i = 0; i < len; ++i) {
      ns[base + i] %= qq;
      prefix[i] = acc;
      acc = mulmod(acc, ns[base + i], qq);
    }
    if (std::gcd(acc, qq) != 1) {
      for (std::size_t i = 0; i < len; ++i) {
        if (std::gcd(ns[base + i], qq) != 1)
          throw not_coprime("batch_inverse: element at index " + std::to_string(base + i) +
                                " shares a factor with q",
                            base + i);
      }
    }
    u64 inv_acc = mod_inverse(acc, q);
    for (std::size_t i = len; i-- > 0;) {
      const u64 inv_i = mulmod(inv_acc, prefix[i], qq);
      inv_acc = mulmod(inv_acc, ns[base + i], qq);
      ns[base + i] = inv_i;
    }
  }
}

inline std::vector<u64> batch_inverse(std::span<const u64> ns, const Modulus& q,
                                      std::size_t chunk = kBatchInverseChunk) {
  std::vector<u64> out(ns.begin(), ns.end());
  batch_inverse_inplace(out, q, chunk);
  return out;
}

/// gcd(|a|, |b|, q) with the convention gcd(0, m) = m, so (0, 0, q) = q.
inline u64 gcd3(i64 a, i64 b, const Modulus& q) {
  auto mag = [](i64 v) -> u64 {
    return v < 0 ? u64(0) - static_cast<u64>(v) : static_cast<u64>(v);
  };
  return std::gcd(std::gcd(mag(a), mag(b)), q.value());
}

/// tau_k(q): the number of ordered factorizations of q into k parts.
/// tau_1 == 1, tau_2 = tau. Computed from the factorization of q;
/// tau_k(p^e) = C(e + k - 1, k - 1).
inline u64 divisor_count(u64 q, unsigned k = 2) {
  if (q == 0) throw domain_error("divisor_count: q must be positive");
  if (k == 0) throw domain_error("divisor_count: k must be >= 1");
  if (k == 1 || q == 1) return 1;
  u128 total = 1;
  for (const auto& f : factorize(q)) {
    // C(e + k - 1, k - 1) by the multiplicative formula.
    u128 binom = 1;
    for (unsigned j = 1; j <= f.exponent; ++j) {
      binom = binom * (k - 1 + j) / j;
    }
    total *= binom;
    if (total > std::numeric_limits<u64>::max())
      throw domain_error("divisor_count: result exceeds 64 bits");
  }
  return static_cast<u64>(total);
}

/// Ascending primes <= z by sieve of Eratosthenes. Returns {} for z < 2.
inline std::vector<u64> primes_up_to(u64 z) {
  std::vector<u64> primes;
  if (z < 2) return primes;
  std::vector<bool> composite(z + 1, false);
  for (u64 p = 2; p * p <= z; ++p) {
    if (!composite[p]) {
      for (u64 m = p * p; m <= z; m += p) composite[m] = true;
    }
  }
  for (u64 n = 2; n <= z; ++n) {
    if (!composite[n]) primes.push_back(n);
  }
  return primes;
}

} // namespace ksum::arith
