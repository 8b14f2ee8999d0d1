#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "ksum/arith.hpp"
#include "ksum/common.hpp"
#include "ksum/errors.hpp"
#include "ksum/parallel.hpp"

// Rough/smooth counting functions Phi(x, y) and Psi(x, y), the Mertens
// product, Chebyshev's theta, and the explicit numeric constants their
// bound checks pin down.

namespace ksum::sievecount {

namespace constants {

/// Coefficient of x / (log y)^2 in the rough-number bound.
inline constexpr double selberg_c = 13.5;

/// Coefficient C of the smooth-number bound Psi(x, y) <= C x e^{-u/2}.
inline constexpr double smooth_C = 67.21;

/// A = 1.01624 e^{2/3}: sum_{p <= z} log p < 1.01624 z rescaled by the
/// prime-power weight cap e^{2/3}.
inline constexpr double cheb_theta_ratio = 1.01624;
inline const double cheb_A = 1.01624 * std::exp(2.0 / 3.0);

/// B: upper bound for sum_p log p / p^{3/2} * (2 - p^{-3/4})/(1 - p^{-3/4})^2.
inline constexpr double series_B = 5.28475;

/// D = (A + B + 1) e^{25/12}, the Rankin-trick constant.
inline const double rankin_D = (cheb_A + series_B + 1.0) * std::exp(25.0 / 12.0);

/// Euler-Mascheroni constant, 20 decimal digits.
inline constexpr double euler_gamma = 0.57721566490153286061;

/// The Rankin exponent alpha = 2 / (3 log y).
inline double rankin_alpha(double y) { return 2.0 / (3.0 * std::log(y)); }

} // namespace constants

/// A (x, y) pair with the derived ratio u = log x / log y.
struct RoughSmoothQuery {
  u64 x = 0;
  u64 y = 0;
  double u() const { return std::log(static_cast<double>(x)) / std::log(static_cast<double>(y)); }
};

/// Phi(x, y): how many n <= x have no prime factor <= y. n = 1 counts (the
/// condition is vacuous). Requires 2 <= y <= x.
inline u64 phi_rough(const RoughSmoothQuery& query) {
  if (query.y < 2 || query.y > query.x)
    throw domain_error("phi_rough: need 2 <= y <= x, got x = " + std::to_string(query.x) +
                       ", y = " + std::to_string(query.y));
  std::vector<bool> keep(query.x + 1, true);
  // keep[p] is still true exactly when p has no smaller prime factor, so the
  // outer loop visits each prime p <= y once.
  for (u64 p = 2; p <= query.y; ++p) {
    if (keep[p]) {
      for (u64 m = p; m <= query.x; m += p) keep[m] = false;
    }
  }
  u64 count = 1; // n = 1
  for (u64 n = 2; n <= query.x; ++n) {
    if (keep[n]) ++count;
  }
  return count;
}

/// Psi(x, y): how many n <= x have all prime factors <= y (n = 1 included).
/// Standard recursion Psi(x, p_k) = Psi(x, p_{k-1}) + Psi(x / p_k, p_k) with
/// memoization; the memo is per call, so concurrent callers do not share
/// state. Total for y >= 2 and any x.
inline u64 psi_smooth(const RoughSmoothQuery& query) {
  if (query.y < 2) throw domain_error("psi_smooth: y must be >= 2");
  if (query.x == 0) return 0;
  const auto primes = arith::primes_up_to(query.y);

  const u64 stride = primes.size() + 1;
  if (query.x > std::numeric_limits<u64>::max() / stride)
    throw domain_error("psi_smooth: x out of supported range");
  std::unordered_map<u64, u64> memo;
  auto key = [stride](u64 x, std::size_t k) { return x * stride + static_cast<u64>(k); };

  auto rec = [&](auto&& self, u64 x, std::size_t k) -> u64 {
    if (x == 0) return 0;
    // Clamp the prime index to pi(x) so equivalent states share a memo slot.
    while (k > 0 && primes[k - 1] > x) --k;
    if (k == 0) return 1;
    const u64 id = key(x, k);
    if (auto it = memo.find(id); it != memo.end()) return it->second;
    const u64 v = self(self, x, k - 1) + self(self, x / primes[k - 1], k);
    memo.emplace(id, v);
    return v;
  };
  return rec(rec, query.x, primes.size());
}

/// Independent enumeration route for Psi: sieve the largest prime factor and
/// count directly. Cross-checks the recursion for x up to desk scale.
inline u64 psi_smooth_by_sieve(u64 x, u64 y) {
  if (y < 2) throw domain_error("psi_smooth_by_sieve: y must be >= 2");
  if (x == 0) return 0;
  std::vector<u64> gpf(x + 1, 0);
  for (u64 p = 2; p <= x; ++p) {
    if (gpf[p] == 0) {
      for (u64 m = p; m <= x; m += p) gpf[m] = p;
    }
  }
  u64 count = 1; // n = 1
  for (u64 n = 2; n <= x; ++n) {
    if (gpf[n] <= y) ++count;
  }
  return count;
}

/// prod_{p <= X} (1 - 1/p)^{-1}, evaluated as a compensated log-domain sum
/// followed by one exponentiation.
inline double mertens_product(u64 X) {
  if (X < 2) throw domain_error("mertens_product: X must be >= 2");
  parallel::Accumulator acc;
  for (u64 p : arith::primes_up_to(X)) {
    acc.add(-std::log1p(-1.0 / static_cast<double>(p)), 0.0, 0.0);
  }
  return std::exp(acc.value().real());
}

/// theta(z) = sum_{p <= z} log p.
inline double chebyshev_theta(u64 z) {
  if (z < 2) throw domain_error("chebyshev_theta: z must be >= 2");
  parallel::Accumulator acc;
  for (u64 p : arith::primes_up_to(z)) acc.add(std::log(static_cast<double>(p)), 0.0, 0.0);
  return acc.value().real();
}

/// Partial sum over p <= P of log p / p^{3/2} * (2 - p^{-3/4})/(1 - p^{-3/4})^2,
/// the closed form of sum_{p, v >= 2} v log p / p^{3v/4}. Monotone in P.
inline double series_b_partial(u64 P) {
  if (P < 2) throw domain_error("series_b_partial: P must be >= 2");
  parallel::Accumulator acc;
  for (u64 p : arith::primes_up_to(P)) {
    const double pd = static_cast<double>(p);
    const double t = std::pow(pd, -0.75);
    acc.add(std::log(pd) / (pd * std::sqrt(pd)) * (2.0 - t) / ((1.0 - t) * (1.0 - t)), 0.0, 0.0);
  }
  return acc.value().real();
}

/// sum_{p <= y} log p / p.
inline double prime_log_sum(u64 y) {
  if (y < 2) throw domain_error("prime_log_sum: y must be >= 2");
  parallel::Accumulator acc;
  for (u64 p : arith::primes_up_to(y)) {
    const double pd = static_cast<double>(p);
    acc.add(std::log(pd) / pd, 0.0, 0.0);
  }
  return acc.value().real();
}

/// Right-hand side of the rough-number bound: x / log y + 13.5 x / (log y)^2.
inline double phi_rough_bound(u64 x, u64 y) {
  const double ly = std::log(static_cast<double>(y));
  const double xd = static_cast<double>(x);
  return xd / ly + constants::selberg_c * xd / (ly * ly);
}

/// Right-hand side of the smooth-number bound: C x e^{-u/2}.
inline double psi_smooth_bound(u64 x, u64 y) {
  const RoughSmoothQuery query{x, y};
  return constants::smooth_C * static_cast<double>(x) * std::exp(-query.u() / 2.0);
}

} // namespace ksum::sievecount
