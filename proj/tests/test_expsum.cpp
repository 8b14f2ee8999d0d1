#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "ksum/expsum.hpp"
#include "ksum/multfun.hpp"
#include "ksum/rng.hpp"

using namespace ksum;
using namespace ksum::arith;
using namespace ksum::expsum;

namespace {

std::complex<double> e_frac(double num, double den) {
  return std::polar(1.0, 2.0 * std::numbers::pi * num / den);
}

u64 euler_phi(u64 q) {
  u64 phi = 0;
  for (u64 n = 1; n <= q; ++n) {
    if (std::gcd(n, q) == 1) ++phi;
  }
  return phi;
}

// Independent direct evaluator for the complete sum.
std::complex<double> complete_brute(u64 q, u64 a, u64 b) {
  std::complex<double> s{0, 0};
  for (u64 n = 1; n <= q; ++n) {
    if (std::gcd(n, q) != 1) continue;
    u64 inv = 1;
    for (u64 m = 1; m < q; ++m) {
      if (mulmod(n % q, m, q) == 1) {
        inv = m;
        break;
      }
    }
    s += e_frac(static_cast<double>(addmod(mulmod(a, inv, q), mulmod(b, n % q, q), q)),
                static_cast<double>(q));
  }
  return s;
}

} // namespace

TEST_CASE("complete sum worked examples", "[expsum]") {
  const auto s = complete_sum(KloostermanParams(Modulus(5), 1, 1));
  CHECK(s.value.real() == Catch::Approx((3.0 - std::sqrt(5.0)) / 2.0).margin(1e-12));
  CHECK(s.value.imag() == Catch::Approx(0.0).margin(1e-12));
  CHECK(s.terms == 4);

  const auto z = complete_sum(KloostermanParams(Modulus(4), 1, 0));
  CHECK(std::abs(z.value) == Catch::Approx(0.0).margin(1e-12)); // e(1/4) + e(3/4)

  for (u64 q : {6ull, 7ull, 12ull, 36ull}) {
    const auto trivial = complete_sum(KloostermanParams::unrestricted(Modulus(q), 0, 0));
    CHECK(trivial.value.real() == Catch::Approx(static_cast<double>(euler_phi(q))));
    CHECK(trivial.value.imag() == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("complete sum agrees with the brute-force oracle", "[expsum]") {
  rng::Stream rs(11);
  for (int t = 0; t < 40; ++t) {
    const u64 q = rs.range(3, 80);
    const u64 a = rs.below(q);
    const u64 b = rs.below(q);
    const auto s =
        complete_sum(KloostermanParams::unrestricted(Modulus(q), static_cast<i64>(a),
                                                     static_cast<i64>(b)));
    const auto ref = complete_brute(q, a, b);
    REQUIRE(std::abs(s.value - ref) < 1e-9);
  }
}

TEST_CASE("incomplete sum examples", "[expsum]") {
  // q = 7, a = 1, b = 0: inverses of 1, 2, 3 are 1, 4, 5
  const auto s = incomplete_sum(KloostermanParams(Modulus(7), 1, 0), 0, 3);
  const auto expected = e_frac(1, 7) + e_frac(4, 7) + e_frac(5, 7);
  CHECK(std::abs(s.value - expected) < 1e-12);
  CHECK(s.terms == 3);

  // full-period consistency: n = q is never coprime, so the primed sum over
  // (0, q-1] already equals the complete sum
  for (u64 q : {7ull, 12ull, 45ull}) {
    const KloostermanParams p(Modulus(q), 1, 2);
    const auto part = incomplete_sum(p, 0, q - 1);
    const auto comp = complete_sum(p);
    REQUIRE(std::abs(part.value - comp.value) < 1e-9);
    REQUIRE(part.terms == comp.terms);
  }

  // empty effective range: every n in (M, M+N] shares a factor with q
  const auto really_empty =
      incomplete_sum(KloostermanParams(Modulus(36), 1, 0), 1, 2); // n = 2, 3
  CHECK(really_empty.terms == 0);
  CHECK(really_empty.value == std::complex<double>{0.0, 0.0});

  CHECK_THROWS_AS(incomplete_sum(KloostermanParams(Modulus(7), 1, 0), 0, 7), range_too_long);
  CHECK_THROWS_AS(incomplete_sum(KloostermanParams(Modulus(7), 1, 0), 0, 1), domain_error);
}

TEST_CASE("incomplete sum handles negative and large M", "[expsum]") {
  const KloostermanParams p(Modulus(11), 3, 5);
  // shifting M by q leaves the summands' residues unchanged
  const auto s1 = incomplete_sum(p, -4, 6);
  const auto s2 = incomplete_sum(p, -4 + 11, 6);
  CHECK(std::abs(s1.value - s2.value) < 1e-12);
}

TEST_CASE("weighted sum with f = 1 over a full period equals the complete sum", "[expsum]") {
  for (u64 q : {11ull, 24ull, 101ull}) {
    const KloostermanParams p(Modulus(q), q == 24 ? 5 : 2, 3);
    const auto one = multfun::sieve_one(q);
    const auto ws = weighted_sum(p, one, q);
    const auto cs = complete_sum(p);
    REQUIRE(std::abs(ws.value - cs.value) <= ws.error_budget + cs.error_budget + 1e-12);
    REQUIRE(ws.terms == cs.terms);
  }
}

TEST_CASE("weighted moebius sum against a hand enumeration", "[expsum]") {
  // q = 11, a = 1, b = 0, x = 10; inverses mod 11: 1,6,4,3,9,2,8,7,5,10
  const auto mu = multfun::sieve_moebius(10);
  const auto s = weighted_sum(KloostermanParams(Modulus(11), 1, 0), mu, 10);
  const std::complex<double> expected = e_frac(1, 11) - e_frac(6, 11) - e_frac(4, 11) -
                                        e_frac(9, 11) + e_frac(2, 11) - e_frac(8, 11) +
                                        e_frac(10, 11);
  CHECK(std::abs(s.value - expected) < 1e-12);
  CHECK(s.terms == 10);
}

TEST_CASE("weighted sum single term and error cases", "[expsum]") {
  const auto mu = multfun::sieve_moebius(10);
  const KloostermanParams p(Modulus(11), 3, 4);
  const auto s = weighted_sum(p, mu, 1);
  CHECK(std::abs(s.value - std::complex<double>(e_frac(7, 11))) < 1e-12); // f(1) e_q(a + b)

  CHECK_THROWS_AS(weighted_sum(p, mu, 11), weight_too_short);
  const auto mu20 = multfun::sieve_moebius(20);
  CHECK_THROWS_AS(weighted_sum(p, mu20, 12), x_exceeds_q);
  CHECK_NOTHROW(weighted_sum(p, mu20, 12, /*allow_x_gt_q=*/true));
}

TEST_CASE("completion transform reproduces the incomplete sum", "[expsum]") {
  // fixed worked instance
  {
    const KloostermanParams p(Modulus(13), 1, 2);
    const auto direct = incomplete_sum(p, 3, 5);
    const auto via = completion_transform(p, 3, 5);
    REQUIRE(std::abs(direct.value - via.value) < 1e-10);
    CHECK(via.terms == direct.terms);
  }
  // randomized agreement at q = 101 and composite q
  rng::Stream rs(404);
  for (int t = 0; t < 60; ++t) {
    const u64 q = t % 2 == 0 ? 101 : rs.range(10, 140);
    Modulus m(q);
    u64 a = rs.range(1, q - 1);
    while (std::gcd(a, q) != 1) a = rs.range(1, q - 1);
    const u64 b = rs.below(q);
    const u64 N = rs.range(2, q - 1);
    const i64 M = static_cast<i64>(rs.below(3 * q)) - static_cast<i64>(q);
    const KloostermanParams p(m, static_cast<i64>(a), static_cast<i64>(b));
    const auto direct = incomplete_sum(p, M, N);
    const auto via = completion_transform(p, M, N);
    REQUIRE(std::abs(direct.value - via.value) <= 1e-8 * static_cast<double>(N));
  }
}

TEST_CASE("shift orthogonality over a full period", "[expsum]") {
  // sum over a full period of e_q(-c m) vanishes for c != 0 mod q
  const u64 q = 23;
  Modulus m(q);
  for (i64 c = 1; c < static_cast<i64>(q); ++c) {
    std::complex<double> s{0, 0};
    for (u64 mm = 1; mm <= q; ++mm) {
      s += std::complex<double>(unit_root(-c * static_cast<i64>(mm), m));
    }
    REQUIRE(std::abs(s) < 1e-12);
  }
}

TEST_CASE("bilinear sum: single pair and double-loop oracle", "[expsum]") {
  const KloostermanParams p(Modulus(31), 1, 1);
  // length-1 ranges give a single Kloosterman term
  auto spec1 = BilinearSpec::ones(2, 3, 4, 5); // m = 3, n = 5
  const auto s1 = bilinear_sum(p, spec1);
  const u64 q = 31;
  const u64 minv = mod_inverse(3, p.modulus());
  const u64 ninv = mod_inverse(5, p.modulus());
  const u64 phase = addmod(mulmod(mulmod(1, minv, q), ninv, q), mulmod(mulmod(1, 3, q), 5, q), q);
  CHECK(std::abs(s1.value - std::complex<double>(arith::detail::eq_root(phase, q))) < 1e-12);
  CHECK(s1.terms == 1);

  // direct double loop over (2,4] x (2,4]
  auto spec = BilinearSpec::ones(2, 4, 2, 4);
  const auto s = bilinear_sum(p, spec);
  std::complex<double> ref{0, 0};
  for (u64 mm = 3; mm <= 4; ++mm) {
    for (u64 nn = 3; nn <= 4; ++nn) {
      const u64 ph = addmod(mulmod(mulmod(1, mod_inverse(mm, p.modulus()), q),
                                   mod_inverse(nn, p.modulus()), q),
                            mulmod(mm, nn, q), q);
      ref += std::complex<double>(arith::detail::eq_root(ph, q));
    }
  }
  REQUIRE(std::abs(s.value - ref) < 1e-12);

  // cap below the smallest reachable product empties the sum
  const auto capped = bilinear_sum(p, spec, u64(8));
  CHECK(capped.terms == 0);
  CHECK(capped.value == std::complex<double>{0.0, 0.0});
}

TEST_CASE("bilinear sum rejects multiples of a prime modulus in range", "[expsum]") {
  const KloostermanParams p(Modulus(7), 1, 0);
  auto spec = BilinearSpec::ones(5, 9, 1, 3); // m range contains 7
  CHECK_THROWS_AS(bilinear_sum(p, spec), not_coprime);
  // composite modulus keeps the primed-sum convention instead
  const KloostermanParams pc(Modulus(8), 1, 0);
  auto spec_c = BilinearSpec::ones(5, 9, 1, 3);
  CHECK_NOTHROW(bilinear_sum(pc, spec_c));
}

TEST_CASE("bilinear spec shape validation", "[expsum]") {
  auto spec = BilinearSpec::ones(2, 5, 2, 4); // m1 > 2 m0
  spec.lemma6_shape = true;
  const KloostermanParams p(Modulus(31), 1, 1);
  CHECK_THROWS_AS(bilinear_sum(p, spec), domain_error);
  spec.lemma6_shape = false;
  CHECK_NOTHROW(bilinear_sum(p, spec));
  auto bad = BilinearSpec::ones(2, 4, 2, 4);
  bad.alpha.pop_back();
  CHECK_THROWS_AS(bilinear_sum(p, bad), domain_error);
}

TEST_CASE("bilinear completion agrees with the capped bilinear sum", "[expsum]") {
  rng::Stream rs(5150);
  const auto mu = multfun::sieve_moebius(200);
  for (int t = 0; t < 25; ++t) {
    const u64 q = t % 3 == 0 ? 101 : 31;
    u64 a = rs.range(1, q - 1);
    while (std::gcd(a, q) != 1) a = rs.range(1, q - 1);
    const KloostermanParams p(Modulus(q), static_cast<i64>(a), static_cast<i64>(rs.below(q)));
    const u64 m0 = rs.range(1, 8), n0 = rs.range(1, 8);
    const u64 m1 = m0 + rs.range(1, m0), n1 = n0 + rs.range(1, n0);
    BilinearSpec spec;
    spec.m0 = m0;
    spec.m1 = m1;
    spec.n0 = n0;
    spec.n1 = n1;
    spec.alpha.resize(m1 - m0);
    spec.beta.resize(n1 - n0);
    for (u64 m = m0 + 1; m <= m1; ++m)
      spec.alpha[m - m0 - 1] = {mu.values[m], 0.5 * rng::symmetric_double(rs.next())};
    for (u64 n = n0 + 1; n <= n1; ++n)
      spec.beta[n - n0 - 1] = {mu.values[n], 0.5 * rng::symmetric_double(rs.next())};
    const u64 cap = rs.range(m0 * n0 + 1, m1 * n1 + 4);
    const auto direct = bilinear_sum(p, spec, cap);
    const auto via = bilinear_completion(p, spec, cap);
    REQUIRE(std::abs(direct.value - via.value) <=
            1e-8 * static_cast<double>((m1 - m0) * (n1 - n0) + 1));
    REQUIRE(via.terms == direct.terms);
  }
}

TEST_CASE("bilinear completion with a vacuous cap reduces to the uncapped sum", "[expsum]") {
  const KloostermanParams p(Modulus(31), 2, 5);
  auto spec = BilinearSpec::ones(3, 6, 4, 8);
  const auto uncapped = bilinear_sum(p, spec);
  const auto via = bilinear_completion(p, spec, /*cap=*/6 * 8);
  CHECK(std::abs(uncapped.value - via.value) < 1e-9);
  // single-pair ranges match exactly
  auto single = BilinearSpec::ones(2, 3, 4, 5);
  const auto a = bilinear_sum(p, single, u64(100));
  const auto b = bilinear_completion(p, single, 100);
  CHECK(std::abs(a.value - b.value) < 1e-10);
}

TEST_CASE("conjugation symmetry of the complete sum", "[expsum]") {
  rng::Stream rs(8);
  for (int t = 0; t < 30; ++t) {
    const u64 q = rs.range(3, 300);
    u64 a = rs.range(1, q - 1);
    while (std::gcd(a, q) != 1) a = rs.range(1, q - 1);
    const u64 b = rs.below(q);
    const auto s = complete_sum(KloostermanParams(Modulus(q), static_cast<i64>(a),
                                                  static_cast<i64>(b)));
    const auto conj = complete_sum(KloostermanParams(Modulus(q), -static_cast<i64>(a),
                                                     -static_cast<i64>(b)));
    REQUIRE(std::abs(conj.value - std::conj(s.value)) <= s.error_budget + conj.error_budget + 1e-12);
  }
}

TEST_CASE("weil-estermann bound on a small exhaustive block", "[expsum]") {
  for (u64 q = 3; q <= 60; ++q) {
    Modulus m(q);
    const double tq = static_cast<double>(m.divisor_count());
    for (u64 a = 0; a < q; ++a) {
      for (u64 b = 0; b < q; ++b) {
        const auto s = complete_sum(KloostermanParams::unrestricted(m, static_cast<i64>(a),
                                                                    static_cast<i64>(b)));
        const double bound = tq *
                             std::sqrt(static_cast<double>(gcd3(static_cast<i64>(a),
                                                                static_cast<i64>(b), m))) *
                             std::sqrt(static_cast<double>(q));
        REQUIRE(std::abs(s.value) <= bound + s.error_budget);
      }
    }
  }
}

TEST_CASE("error budget model", "[expsum]") {
  const double eps = std::numeric_limits<double>::epsilon();
  for (u64 q : {101ull, 1009ull}) {
    const auto s = complete_sum(KloostermanParams(Modulus(q), 1, 1));
    CHECK(s.error_budget <= kErrorKappa * static_cast<double>(s.terms) * eps * (1 + 1e-12));
    CHECK(std::abs(s.value) <= static_cast<double>(s.terms) + s.error_budget);
  }
}

TEST_CASE("error budget covers the distance to an extended-precision reference", "[expsum]") {
  // spot check at q <= 10^3: evaluate the same sum in 80-bit arithmetic and
  // require the double-precision result to sit inside its own budget
  rng::Stream rs(99173);
  for (int t = 0; t < 25; ++t) {
    const u64 q = rs.range(3, 1000);
    Modulus m(q);
    u64 a = rs.range(1, q - 1);
    while (std::gcd(a, q) != 1) a = rs.range(1, q - 1);
    const u64 b = rs.below(q);
    const KloostermanParams p(m, static_cast<i64>(a), static_cast<i64>(b));
    const auto s = complete_sum(p);

    long double re = 0, im = 0;
    for (u64 n = 1; n <= q; ++n) {
      if (std::gcd(n, q) != 1) continue;
      const u64 inv = mod_inverse(n, m);
      const u64 phase = addmod(mulmod(a, inv, q), mulmod(b, n % q, q), q);
      const long double theta = 2.0L * 3.14159265358979323846264338327950288L *
                                static_cast<long double>(phase) / static_cast<long double>(q);
      re += cosl(theta);
      im += sinl(theta);
    }
    const double diff = std::hypot(static_cast<double>(re - static_cast<long double>(s.value.real())),
                                   static_cast<double>(im - static_cast<long double>(s.value.imag())));
    REQUIRE(diff <= s.error_budget);
  }
}

TEST_CASE("results are bit-identical across thread counts", "[expsum]") {
  const u64 q = 100003;
  const KloostermanParams p(Modulus(q), 7, 13);
  const auto mu = multfun::sieve_moebius(q);
  const auto s1 = weighted_sum(p, mu, q - 1, false, 1);
  const auto s4 = weighted_sum(p, mu, q - 1, false, 4);
  const auto s8 = weighted_sum(p, mu, q - 1, false, 8);
  REQUIRE(s1.value.real() == s4.value.real());
  REQUIRE(s1.value.imag() == s4.value.imag());
  REQUIRE(s1.value.real() == s8.value.real());
  REQUIRE(s1.value.imag() == s8.value.imag());
  const auto c1 = complete_sum(p, 1);
  const auto c3 = complete_sum(p, 3);
  REQUIRE(c1.value.real() == c3.value.real());
  REQUIRE(c1.value.imag() == c3.value.imag());
}
