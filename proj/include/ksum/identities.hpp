#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "ksum/arith.hpp"
#include "ksum/bounds.hpp"
#include "ksum/common.hpp"
#include "ksum/errors.hpp"
#include "ksum/expsum.hpp"
#include "ksum/multfun.hpp"
#include "ksum/rng.hpp"

// Exact combinatorial decompositions checked against direct evaluation:
// the Vaughan-type identity for mu-weighted sums and the Dirichlet
// hyperbola recursion for tau_k-weighted sums, plus the two desk-scale
// decomposition pipelines built on top of them.

namespace ksum::identities {

using arith::KloostermanParams;
using arith::Modulus;
using expsum::SumResult;

/// A tabulated test function F(n), n <= x. Three families: the Kloosterman
/// phase itself, counter-based random values, and F(n) = n.
struct TestFunction {
  std::string origin;
  std::vector<std::complex<double>> values; // values[n], index 0 unused

  u64 limit() const noexcept { return values.empty() ? 0 : values.size() - 1; }

  std::complex<double> at(u64 n) const {
    if (n == 0 || n > limit())
      throw domain_error("test function '" + origin + "' not tabulated at n = " +
                         std::to_string(n));
    return values[n];
  }

  /// F(n) = e_q(a n* + b n) for gcd(n, q) = 1, else 0.
  static TestFunction kloosterman(const KloostermanParams& p, u64 x) {
    TestFunction f;
    f.origin = "kloosterman(" + std::to_string(p.modulus().value()) + "," +
               std::to_string(p.a()) + "," + std::to_string(p.b()) + ")";
    f.values.assign(x + 1, {0.0, 0.0});
    const u64 q = p.modulus().value();
    const auto q_primes = p.modulus().prime_divisors();
    for (u64 n = 1; n <= x; ++n) {
      const u64 r = n % q;
      if (r == 0 || !expsum::detail::coprime_residue(r, q_primes)) continue;
      const u64 inv = arith::mod_inverse(r, p.modulus());
      const u64 phase =
          arith::addmod(arith::mulmod(p.a(), inv, q), arith::mulmod(p.b(), r, q), q);
      f.values[n] = arith::detail::eq_root(phase, q);
    }
    return f;
  }

  /// Both components uniform in [-1, 1), drawn from the splitmix64
  /// counter stream; identical on every platform.
  static TestFunction seeded_random(u64 seed, u64 x) {
    TestFunction f;
    f.origin = "seeded-random(" + std::to_string(seed) + ")";
    f.values.assign(x + 1, {0.0, 0.0});
    for (u64 n = 1; n <= x; ++n) {
      const u64 h = rng::hash2(seed, n);
      f.values[n] = {rng::symmetric_double(h), rng::symmetric_double(rng::splitmix64(h))};
    }
    return f;
  }

  /// F(n) = n.
  static TestFunction polynomial(u64 x) {
    TestFunction f;
    f.origin = "polynomial";
    f.values.assign(x + 1, {0.0, 0.0});
    for (u64 n = 1; n <= x; ++n) f.values[n] = {static_cast<double>(n), 0.0};
    return f;
  }

  /// Sum of |F(n)|, the natural scale for relative identity tolerances.
  double mass() const {
    double m = 0;
    for (const auto& v : values) m += std::abs(v);
    return m;
  }
};

/// a_m = sum_{d | m, d <= y} mu(d), tabulated for y < m <= x/y.
struct VaughanCoefficients {
  u64 x = 0;
  double y = 0;
  u64 lo = 0; // table covers (lo, hi]
  u64 hi = 0;
  std::vector<i64> table;

  i64 at(u64 m) const {
    if (m <= lo || m > hi) throw domain_error("vaughan coefficient out of tabulated range");
    return table[m - lo - 1];
  }
};

inline VaughanCoefficients vaughan_coefficients(u64 x, double y) {
  if (!(y >= 1.0)) throw domain_error("vaughan_coefficients: y must be >= 1");
  VaughanCoefficients c;
  c.x = x;
  c.y = y;
  c.lo = static_cast<u64>(std::floor(y));
  c.hi = static_cast<u64>(std::floor(static_cast<double>(x) / y));
  if (c.hi <= c.lo) {
    c.hi = c.lo;
    return c;
  }
  c.table.assign(c.hi - c.lo, 0);
  const auto mu = multfun::sieve_moebius(c.lo);
  for (u64 d = 1; d <= c.lo; ++d) {
    const i64 mud = static_cast<i64>(mu.values[d]);
    if (mud == 0) continue;
    for (u64 m = (c.lo / d + 1) * d; m <= c.hi; m += d) c.table[m - c.lo - 1] += mud;
  }
  return c;
}

struct VaughanParts {
  std::complex<double> sigma1{0, 0};
  std::complex<double> sigma2{0, 0};
  std::complex<double> sigma3{0, 0};
  std::complex<double> lhs{0, 0}; // sum_{n <= x} mu(n) F(n), evaluated directly
  double budget = 0;

  std::complex<double> recombined() const { return -sigma1 - sigma2 + 2.0 * sigma3; }
  double discrepancy() const { return std::abs(lhs - recombined()); }
};

/// Splits sum_{n <= x} mu(n) F(n) into
///   -Sigma1 - Sigma2 + 2 Sigma3,
///   Sigma1 = sum_{k <= y} mu(k) sum_{m <= y} mu(m) sum_{n <= x/(km)} F(kmn),
///   Sigma2 = sum_{y < m <= x/y} a_m sum_{y < n <= x/m} mu(n) F(mn),
///   Sigma3 = sum_{n <= y} mu(n) F(n).
/// Valid for 1 <= y with y^2 <= x; real cutoffs are floored onto integer
/// ranges. The identity is exact, so lhs must equal the recombination up to
/// the rounding budget.
inline VaughanParts vaughan_decompose(u64 x, double y, const TestFunction& F) {
  if (x < 1) throw domain_error("vaughan_decompose: x must be >= 1");
  if (!(y >= 1.0) || y * y > static_cast<double>(x) + 1e-9)
    throw domain_error("vaughan_decompose: requires 1 <= y and y^2 <= x");
  if (F.limit() < x)
    throw domain_error("vaughan_decompose: test function not tabulated through x");

  const u64 yi = static_cast<u64>(std::floor(y));
  const auto mu = multfun::sieve_moebius(x);

  parallel::Accumulator s1, s2, s3, lhs;
  for (u64 n = 1; n <= x; ++n) {
    const double mun = mu.values[n];
    if (mun != 0.0) lhs.add(mun * F.values[n], std::abs(F.values[n]));
  }
  for (u64 n = 1; n <= yi; ++n) {
    const double mun = mu.values[n];
    if (mun != 0.0) s3.add(mun * F.values[n], std::abs(F.values[n]));
  }
  for (u64 k = 1; k <= yi; ++k) {
    if (mu.values[k] == 0.0) continue;
    for (u64 m = 1; m <= yi; ++m) {
      const double coeff = mu.values[k] * mu.values[m];
      if (coeff == 0.0) continue;
      const u64 km = k * m;
      parallel::Accumulator inner;
      for (u64 n = 1; n <= x / km; ++n) inner.add(F.values[km * n], std::abs(F.values[km * n]));
      s1.add(coeff * inner.value(), inner.mass);
    }
  }
  const auto am = vaughan_coefficients(x, y);
  for (u64 m = yi + 1; m * (yi + 1) <= x; ++m) {
    const auto coeff = static_cast<double>(am.at(m));
    parallel::Accumulator inner;
    for (u64 n = yi + 1; n <= x / m; ++n) {
      const double mun = mu.values[n];
      if (mun != 0.0) inner.add(mun * F.values[m * n], std::abs(F.values[m * n]));
    }
    if (coeff != 0.0) s2.add(coeff * inner.value(), std::abs(coeff) * inner.mass);
  }

  VaughanParts parts;
  parts.sigma1 = s1.value();
  parts.sigma2 = s2.value();
  parts.sigma3 = s3.value();
  parts.lhs = lhs.value();
  parts.budget = expsum::kErrorKappa * std::numeric_limits<double>::epsilon() *
                 (s1.mass + s2.mass + 2.0 * s3.mass + lhs.mass);
  return parts;
}

struct HyperbolaParts {
  std::complex<double> t1{0, 0};
  std::complex<double> t2{0, 0};
  std::complex<double> t3{0, 0};
  std::complex<double> lhs{0, 0}; // sum_{n <= x} tau_k(n) F(n), direct
  double budget = 0;

  std::complex<double> recombined() const { return t1 + t2 - t3; }
  double discrepancy() const { return std::abs(lhs - recombined()); }
};

inline u64 isqrt(u64 x) {
  u64 s = static_cast<u64>(std::sqrt(static_cast<double>(x)));
  while (s > 0 && s * s > x) --s;
  while ((s + 1) * (s + 1) <= x) ++s;
  return s;
}

/// Splits sum_{n <= x} tau_k(n) F(n) = sum_{u v <= x} tau_{k-1}(u) F(u v)
/// at sqrt(x):
///   T1 = sum_{u <= sqrt x} tau_{k-1}(u) sum_{v <= x/u} F(uv)
///   T2 = sum_{u <= sqrt x} sum_{v <= x/u} tau_{k-1}(v) F(uv)
///   T3 = sum_{u, v <= sqrt x} tau_{k-1}(u) F(uv)
/// with lhs = T1 + T2 - T3, exactly.
inline HyperbolaParts hyperbola_decompose(unsigned k, u64 x, const TestFunction& F) {
  if (k < 2) throw domain_error("hyperbola_decompose: k must be >= 2");
  if (x < 1) throw domain_error("hyperbola_decompose: x must be >= 1");
  if (F.limit() < x)
    throw domain_error("hyperbola_decompose: test function not tabulated through x");

  const auto tau_prev = multfun::sieve_tau_k(x, k - 1);
  const auto tau_k = multfun::sieve_tau_k(x, k);
  const u64 s = isqrt(x);

  parallel::Accumulator t1, t2, t3, lhs;
  for (u64 n = 1; n <= x; ++n) {
    lhs.add(tau_k.values[n] * F.values[n], tau_k.values[n] * std::abs(F.values[n]));
  }
  for (u64 u = 1; u <= s; ++u) {
    const double wu = tau_prev.values[u];
    parallel::Accumulator row1, row2;
    for (u64 v = 1; v <= x / u; ++v) {
      const std::complex<double> fv = F.values[u * v];
      row1.add(fv, std::abs(fv));
      row2.add(tau_prev.values[v] * fv, tau_prev.values[v] * std::abs(fv));
    }
    t1.add(wu * row1.value(), wu * row1.mass);
    t2.add(row2.value(), row2.mass);
    parallel::Accumulator row3;
    for (u64 v = 1; v <= s; ++v) row3.add(F.values[u * v], std::abs(F.values[u * v]));
    t3.add(wu * row3.value(), wu * row3.mass);
  }

  HyperbolaParts parts;
  parts.t1 = t1.value();
  parts.t2 = t2.value();
  parts.t3 = t3.value();
  parts.lhs = lhs.value();
  parts.budget = expsum::kErrorKappa * std::numeric_limits<double>::epsilon() *
                 (t1.mass + t2.mass + t3.mass + lhs.mass);
  return parts;
}

// -------------------------------------------------------------------------
// Decomposition pipelines
// -------------------------------------------------------------------------

struct BlockRecord {
  unsigned id = 0;
  u64 m0 = 0, m1 = 0, n0 = 0, n1 = 0;
  double abs_w = 0;
  double budget = 0;
  u64 terms = 0;
};

struct PipelineReport {
  bounds::BoundReport report;
  std::vector<BlockRecord> blocks;
  std::complex<double> direct{0, 0};        // the weighted sum, evaluated directly
  std::complex<double> reconstructed{0, 0}; // recombination of the decomposition
  double reconstruction_error = 0;
  double reconstruction_tol = 0;
  bool reconstruction_ok = false;
  double max_inner_ratio = 0; // worst inner-sum |T| / (incomplete-sum ceiling + budget)
  bool inner_bounds_ok = true;
  u64 block_count = 0;
  double block_cap = 0; // 40 (log q)^2
  std::complex<double> sigma1{0, 0}, sigma2{0, 0}, sigma3{0, 0};
};

namespace detail {

/// Dyadic integer boundaries covering (lo, hi]: lo, 2 lo, 4 lo, ..., hi.
inline std::vector<u64> dyadic_cuts(u64 lo, u64 hi) {
  std::vector<u64> cuts{lo};
  u64 b = std::max<u64>(lo, 1);
  while (b < hi) {
    b = std::min(hi, 2 * b);
    cuts.push_back(b);
  }
  return cuts;
}

/// 4 sqrt(q) log q: the incomplete-sum ceiling for prime q and (a, q) = 1.
inline double prime_incomplete_bound(u64 q) {
  const double qd = static_cast<double>(q);
  return 4.0 * std::sqrt(qd) * std::log(qd);
}

struct InnerBoundTracker {
  double worst = 0;
  bool ok = true;

  void observe(const SumResult& s, double bound) {
    const double ratio = s.abs() / (bound + s.error_budget);
    if (ratio > worst) worst = ratio;
    if (ratio > 1.0) ok = false;
  }
};

} // namespace detail

/// Full Vaughan-route decomposition of sum mu(n) e_q(a n* + b n), n <= x,
/// with y = q^{eps/4}: Sigma1 through per-row prefix sums checked against
/// the incomplete-sum ceiling, Sigma2 through dyadic bilinear blocks routed
/// through the completion construction, Sigma3 directly. The recombination
/// must match the directly evaluated sum to 1e-8 x.
inline PipelineReport theorem5_pipeline(const Modulus& q, i64 a, i64 b, u64 x, double eps) {
  if (!q.is_prime()) throw not_prime("theorem5_pipeline: q must be prime");
  const double qd = static_cast<double>(q.value());
  if (!(eps > 0) || static_cast<double>(x) < std::pow(qd, 0.5 + eps) || x > q.value())
    throw regime_error("theorem5_pipeline: requires q^(1/2+eps) <= x <= q");

  const KloostermanParams params(q, a, b);
  const double y = std::pow(qd, eps / 4.0);
  const u64 yi = static_cast<u64>(std::floor(y));
  const auto F = TestFunction::kloosterman(params, x);
  const auto mu = multfun::sieve_moebius(x);

  PipelineReport out;
  detail::InnerBoundTracker tracker;
  const double inner_bound = detail::prime_incomplete_bound(q.value());

  // Sigma3 and Sigma1: short ranges around the cutoff.
  parallel::Accumulator s3;
  for (u64 n = 1; n <= yi; ++n) {
    if (mu.values[n] != 0.0) s3.add(mu.values[n] * F.values[n], 1.0);
  }
  out.sigma3 = s3.value();

  parallel::Accumulator s1;
  for (u64 k = 1; k <= yi; ++k) {
    if (mu.values[k] == 0.0) continue;
    for (u64 m = 1; m <= yi; ++m) {
      const double coeff = mu.values[k] * mu.values[m];
      if (coeff == 0.0) continue;
      const u64 km = k * m;
      const u64 rkm = km % q.value();
      if (rkm == 0 || std::gcd(rkm, q.value()) != 1) continue; // F(kmn) == 0 throughout
      const u64 L = x / km;
      // Inner sum over n <= L of F(kmn) is a unit-weight sum with shifted
      // parameters (a (km)*, b km).
      const u64 kminv = arith::mod_inverse(rkm, q);
      const auto shifted = KloostermanParams(
          q, static_cast<i64>(arith::mulmod(params.a(), kminv, q.value())),
          static_cast<i64>(arith::mulmod(params.b(), rkm, q.value())));
      const SumResult inner = expsum::prefix_sum(shifted, L);
      tracker.observe(inner, inner_bound);
      s1.add(coeff * inner.value, static_cast<double>(inner.terms));
    }
  }
  out.sigma1 = s1.value();

  // Sigma2: dyadic bilinear blocks with the cap mn <= x folded into the
  // completion construction.
  const auto am = vaughan_coefficients(x, y);
  parallel::Accumulator s2;
  const u64 m_hi = am.hi;
  unsigned next_id = 0;
  if (m_hi > yi) {
    const auto m_cuts = detail::dyadic_cuts(yi, m_hi);
    for (std::size_t i = 0; i + 1 < m_cuts.size(); ++i) {
      const u64 M0 = m_cuts[i], M1 = m_cuts[i + 1];
      const u64 n_hi_block = x / (M0 + 1);
      if (n_hi_block <= yi) continue;
      const auto n_cuts = detail::dyadic_cuts(yi, n_hi_block);
      for (std::size_t j = 0; j + 1 < n_cuts.size(); ++j) {
        const u64 N0 = n_cuts[j], N1 = n_cuts[j + 1];
        if (u128(M0 + 1) * (N0 + 1) > x) continue; // empty under the cap
        expsum::BilinearSpec spec;
        spec.m0 = M0;
        spec.m1 = M1;
        spec.n0 = N0;
        spec.n1 = N1;
        spec.alpha_level = 2; // |a_m| <= tau(m)
        spec.beta_level = 1;  // |mu(n)| <= 1
        spec.lemma6_shape = true;
        spec.alpha.resize(M1 - M0);
        for (u64 m = M0 + 1; m <= M1; ++m)
          spec.alpha[m - M0 - 1] = {static_cast<double>(am.at(m)), 0.0};
        spec.beta.resize(N1 - N0);
        for (u64 n = N0 + 1; n <= N1; ++n) spec.beta[n - N0 - 1] = {mu.values[n], 0.0};
        const SumResult w = expsum::bilinear_completion(params, spec, x);
        out.blocks.push_back(
            {next_id++, M0, M1, N0, N1, w.abs(), w.error_budget, w.terms});
        s2.add(w.value, 0.0);
      }
    }
  }
  out.sigma2 = s2.value();

  const SumResult direct = expsum::weighted_sum(params, mu, x);
  out.direct = direct.value;
  out.reconstructed = -out.sigma1 - out.sigma2 + 2.0 * out.sigma3;
  out.reconstruction_error = std::abs(out.direct - out.reconstructed);
  out.reconstruction_tol = 1e-8 * static_cast<double>(x);
  out.reconstruction_ok = out.reconstruction_error <= out.reconstruction_tol;
  out.max_inner_ratio = tracker.worst;
  out.inner_bounds_ok = tracker.ok;
  out.block_count = out.blocks.size();
  out.block_cap = 40.0 * std::log(qd) * std::log(qd);

  out.report = bounds::theorem56_report(0, q, x, eps, direct);
  out.report.extras.emplace_back("abs_sigma1", std::abs(out.sigma1));
  out.report.extras.emplace_back("abs_sigma2", std::abs(out.sigma2));
  out.report.extras.emplace_back("abs_sigma3", std::abs(out.sigma3));
  out.report.extras.emplace_back("reconstruction_error", out.reconstruction_error);
  out.report.extras.emplace_back("block_count", static_cast<double>(out.block_count));
  out.report.window_X = y;
  out.report.window_Y = y;
  return out;
}

/// Hyperbola-route decomposition of sum tau_k(n) e_q(a n* + b n), n <= x,
/// with secondary cutoffs y = q^{eps/2} and x^{1/4}. k = 1 delegates to the
/// incomplete-sum ceiling. The recombination must match the direct sum to
/// 1e-8 x.
inline PipelineReport theorem6_pipeline(unsigned k, const Modulus& q, i64 a, i64 b, u64 x,
                                        double eps) {
  if (!q.is_prime()) throw not_prime("theorem6_pipeline: q must be prime");
  if (k < 1) throw domain_error("theorem6_pipeline: k must be >= 1");
  const double qd = static_cast<double>(q.value());
  if (!(eps > 0) || static_cast<double>(x) < std::pow(qd, 0.5 + eps) || x > q.value())
    throw regime_error("theorem6_pipeline: requires q^(1/2+eps) <= x <= q");

  const KloostermanParams params(q, a, b);
  PipelineReport out;
  out.block_cap = 40.0 * std::log(qd) * std::log(qd);

  if (k == 1) {
    // Base case: the unit-weight sum itself, checked against the
    // incomplete-sum ceiling.
    const SumResult direct = expsum::prefix_sum(params, x);
    detail::InnerBoundTracker tracker;
    tracker.observe(direct, detail::prime_incomplete_bound(q.value()));
    out.direct = direct.value;
    out.reconstructed = direct.value;
    out.reconstruction_tol = 1e-8 * static_cast<double>(x);
    out.reconstruction_ok = true;
    out.max_inner_ratio = tracker.worst;
    out.inner_bounds_ok = tracker.ok;
    out.report = bounds::theorem56_report(1, q, x, eps, direct);
    out.report.notes += "; k=1 delegates to the incomplete-sum ceiling";
    return out;
  }

  const auto F = TestFunction::kloosterman(params, x);
  const auto tau_prev = multfun::sieve_tau_k(x, k - 1);
  const auto tau_full = multfun::sieve_tau_k(x, k);
  const u64 sqx = isqrt(x);
  const double y = std::pow(qd, eps / 2.0);
  const u64 yi = std::min(static_cast<u64>(std::floor(y)), sqx);
  const u64 x4 = std::min(static_cast<u64>(std::floor(std::pow(static_cast<double>(x), 0.25))),
                          sqx);

  detail::InnerBoundTracker tracker;
  const double inner_bound = detail::prime_incomplete_bound(q.value());
  unsigned next_id = 0;

  auto run_blocks = [&](u64 u_lo, u64 u_hi, u64 v_lo, auto v_hi_for, bool capped,
                        bool alpha_is_tau, bool beta_is_tau,
                        parallel::Accumulator& acc) {
    if (u_hi <= u_lo) return;
    const auto u_cuts = detail::dyadic_cuts(u_lo, u_hi);
    for (std::size_t i = 0; i + 1 < u_cuts.size(); ++i) {
      const u64 U0 = u_cuts[i], U1 = u_cuts[i + 1];
      const u64 v_hi = v_hi_for(U0);
      if (v_hi <= v_lo) continue;
      const auto v_cuts = detail::dyadic_cuts(v_lo, v_hi);
      for (std::size_t j = 0; j + 1 < v_cuts.size(); ++j) {
        const u64 V0 = v_cuts[j], V1 = v_cuts[j + 1];
        if (capped && u128(U0 + 1) * (V0 + 1) > x) continue;
        expsum::BilinearSpec spec;
        spec.m0 = U0;
        spec.m1 = U1;
        spec.n0 = V0;
        spec.n1 = V1;
        spec.alpha_level = alpha_is_tau ? k - 1 : 1;
        spec.beta_level = beta_is_tau ? k - 1 : 1;
        spec.lemma6_shape = true;
        spec.alpha.resize(U1 - U0);
        for (u64 u = U0 + 1; u <= U1; ++u)
          spec.alpha[u - U0 - 1] = {alpha_is_tau ? tau_prev.values[u] : 1.0, 0.0};
        spec.beta.resize(V1 - V0);
        for (u64 v = V0 + 1; v <= V1; ++v)
          spec.beta[v - V0 - 1] = {beta_is_tau ? tau_prev.values[v] : 1.0, 0.0};
        const SumResult w = capped ? expsum::bilinear_completion(params, spec, x)
                                   : expsum::bilinear_sum(params, spec);
        out.blocks.push_back({next_id++, U0, U1, V0, V1, w.abs(), w.error_budget, w.terms});
        acc.add(w.value, 0.0);
      }
    }
  };

  // ----- first hyperbola sum: weight tau_{k-1}(u), inner over v -----
  parallel::Accumulator acc1;
  for (u64 u = 1; u <= yi; ++u) { // induction rows
    const double wu = tau_prev.values[u];
    const u64 ru = u % q.value();
    if (wu == 0.0 || ru == 0 || std::gcd(ru, q.value()) != 1) continue;
    const u64 uinv = arith::mod_inverse(ru, q);
    const auto shifted = KloostermanParams(
        q, static_cast<i64>(arith::mulmod(params.a(), uinv, q.value())),
        static_cast<i64>(arith::mulmod(params.b(), ru, q.value())));
    const SumResult inner = expsum::prefix_sum(shifted, x / u);
    tracker.observe(inner, inner_bound);
    acc1.add(wu * inner.value, 0.0);
  }
  for (u64 u = yi + 1; u <= sqx; ++u) { // short-v strip, directly from the table
    const double wu = tau_prev.values[u];
    if (wu == 0.0) continue;
    parallel::Accumulator row;
    for (u64 v = 1; v <= x4; ++v) row.add(F.values[u * v], 0.0);
    acc1.add(wu * row.value(), 0.0);
  }
  run_blocks(
      yi, sqx, x4, [&](u64 U0) { return x / (U0 + 1); }, /*capped=*/true,
      /*alpha_is_tau=*/true, /*beta_is_tau=*/false, acc1);

  // ----- second hyperbola sum: weight tau_{k-1}(v) -----
  parallel::Accumulator acc2;
  for (u64 v = 1; v <= yi; ++v) { // induction columns
    const double wv = tau_prev.values[v];
    const u64 rv = v % q.value();
    if (wv == 0.0 || rv == 0 || std::gcd(rv, q.value()) != 1) continue;
    const u64 vinv = arith::mod_inverse(rv, q);
    const auto shifted = KloostermanParams(
        q, static_cast<i64>(arith::mulmod(params.a(), vinv, q.value())),
        static_cast<i64>(arith::mulmod(params.b(), rv, q.value())));
    const SumResult inner = expsum::prefix_sum(shifted, sqx);
    tracker.observe(inner, inner_bound);
    acc2.add(wv * inner.value, 0.0);
  }
  for (u64 u = 1; u <= x4; ++u) { // short-u strip
    parallel::Accumulator row;
    for (u64 v = yi + 1; v <= x / u; ++v) row.add(tau_prev.values[v] * F.values[u * v], 0.0);
    acc2.add(row.value(), 0.0);
  }
  run_blocks(
      x4, sqx, yi, [&](u64 U0) { return x / (U0 + 1); }, /*capped=*/true,
      /*alpha_is_tau=*/false, /*beta_is_tau=*/true, acc2);

  // ----- square correction: weight tau_{k-1}(u), u, v <= sqrt(x) -----
  parallel::Accumulator acc3;
  for (u64 u = 1; u <= sqx; ++u) { // min(u, v) <= y corner
    const double wu = tau_prev.values[u];
    if (wu == 0.0) continue;
    const u64 v_hi = u <= yi ? sqx : yi;
    parallel::Accumulator row;
    for (u64 v = 1; v <= v_hi; ++v) row.add(F.values[u * v], 0.0);
    acc3.add(wu * row.value(), 0.0);
  }
  run_blocks(
      yi, sqx, yi, [&](u64) { return sqx; }, /*capped=*/false,
      /*alpha_is_tau=*/true, /*beta_is_tau=*/false, acc3);

  out.sigma1 = acc1.value();
  out.sigma2 = acc2.value();
  out.sigma3 = acc3.value();

  const SumResult direct = expsum::weighted_sum(params, tau_full, x);
  out.direct = direct.value;
  out.reconstructed = out.sigma1 + out.sigma2 - out.sigma3;
  out.reconstruction_error = std::abs(out.direct - out.reconstructed);
  out.reconstruction_tol = 1e-8 * static_cast<double>(x);
  out.reconstruction_ok = out.reconstruction_error <= out.reconstruction_tol;
  out.max_inner_ratio = tracker.worst;
  out.inner_bounds_ok = tracker.ok;
  out.block_count = out.blocks.size();

  out.report = bounds::theorem56_report(k, q, x, eps, direct);
  out.report.extras.emplace_back("abs_sigma1", std::abs(out.sigma1));
  out.report.extras.emplace_back("abs_sigma2", std::abs(out.sigma2));
  out.report.extras.emplace_back("abs_sigma3", std::abs(out.sigma3));
  out.report.extras.emplace_back("reconstruction_error", out.reconstruction_error);
  out.report.extras.emplace_back("block_count", static_cast<double>(out.block_count));
  return out;
}

} // namespace ksum::identities
