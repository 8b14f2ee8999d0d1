#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numeric>

#include "ksum/identities.hpp"

using namespace ksum;
using namespace ksum::arith;
using namespace ksum::identities;

TEST_CASE("test function families", "[identities]") {
  const KloostermanParams p(Modulus(11), 1, 0);
  const auto fk = TestFunction::kloosterman(p, 22);
  CHECK(fk.values[11] == std::complex<double>{0.0, 0.0}); // gcd(11, 11) > 1
  CHECK(std::abs(std::abs(fk.values[3]) - 1.0) < 1e-14);
  CHECK(std::abs(fk.values[1] - std::polar(1.0, 2.0 * std::numbers::pi / 11.0)) < 1e-14);

  const auto fr1 = TestFunction::seeded_random(42, 50);
  const auto fr2 = TestFunction::seeded_random(42, 50);
  const auto fr3 = TestFunction::seeded_random(43, 50);
  REQUIRE(fr1.values == fr2.values); // reproducible
  CHECK(fr1.values != fr3.values);
  for (u64 n = 1; n <= 50; ++n) {
    CHECK(std::abs(fr1.values[n].real()) <= 1.0);
    CHECK(std::abs(fr1.values[n].imag()) <= 1.0);
  }

  const auto fp = TestFunction::polynomial(9);
  CHECK(fp.values[7] == std::complex<double>{7.0, 0.0});
}

TEST_CASE("vaughan coefficients", "[identities]") {
  const u64 x = 400;
  const double y = 7.0;
  const auto c = vaughan_coefficients(x, y);
  const auto mu = multfun::sieve_moebius(x);

  // direct divisor-sum oracle and the tau bound
  for (u64 m = c.lo + 1; m <= c.hi; ++m) {
    i64 ref = 0;
    for (u64 d = 1; d <= 7 && d <= m; ++d) {
      if (m % d == 0) ref += static_cast<i64>(mu.values[d]);
    }
    REQUIRE(c.at(m) == ref);
    REQUIRE(static_cast<u64>(std::abs(c.at(m))) <= divisor_count(m));
  }

  // for 1 < m <= y the full divisor sum vanishes
  for (u64 m = 2; m <= 7; ++m) {
    i64 full = 0;
    for (u64 d = 1; d <= m; ++d) {
      if (m % d == 0) full += static_cast<i64>(mu.values[d]);
    }
    REQUIRE(full == 0);
  }

  CHECK_THROWS_AS(c.at(c.lo), domain_error);
  CHECK_THROWS_AS(c.at(c.hi + 1), domain_error);
}

TEST_CASE("vaughan identity on worked examples", "[identities]") {
  // F(n) = n, x = 10, y = 2: both sides vanish
  const auto parts = vaughan_decompose(10, 2.0, TestFunction::polynomial(10));
  CHECK(std::abs(parts.lhs) < 1e-12);
  CHECK(std::abs(parts.recombined()) < 1e-12);

  // F = 1, x = 100, y = 5: the Mertens value M(100) = 1
  TestFunction ones;
  ones.origin = "ones";
  ones.values.assign(101, {1.0, 0.0});
  ones.values[0] = {0.0, 0.0};
  const auto mparts = vaughan_decompose(100, 5.0, ones);
  CHECK(mparts.lhs.real() == Catch::Approx(1.0).margin(1e-9));
  CHECK(mparts.discrepancy() < 1e-9);

  // boundary case x = y^2
  const auto bparts = vaughan_decompose(49, 7.0, TestFunction::seeded_random(5, 49));
  CHECK(bparts.discrepancy() < 1e-11);

  CHECK_THROWS_AS(vaughan_decompose(48, 7.0, TestFunction::seeded_random(5, 48)), domain_error);
  CHECK_THROWS_AS(vaughan_decompose(10, 0.5, TestFunction::polynomial(10)), domain_error);
}

TEST_CASE("vaughan identity holds for real cutoffs below 2", "[identities]") {
  // the decomposition pipelines run with y = q^{eps/4} in (1, 2)
  for (double y : {1.0, 1.19, 1.5, 1.99}) {
    for (u64 x : {4ull, 10ull, 101ull}) {
      const auto F = TestFunction::seeded_random(1000 + x, x);
      const auto parts = vaughan_decompose(x, y, F);
      REQUIRE(parts.discrepancy() <= 1e-9 * (F.mass() + 1.0));
    }
  }
}

TEST_CASE("vaughan identity over a small grid of all three families", "[identities]") {
  const KloostermanParams p(Modulus(103), 2, 3);
  for (u64 x : {4ull, 9ull, 30ull, 77ull, 120ull}) {
    const TestFunction fams[] = {TestFunction::kloosterman(p, x),
                                 TestFunction::seeded_random(x, x),
                                 TestFunction::polynomial(x)};
    for (const auto& F : fams) {
      for (u64 y = 1; y * y <= x; ++y) {
        const auto parts = vaughan_decompose(x, static_cast<double>(y), F);
        REQUIRE(parts.discrepancy() <= 1e-9 * (F.mass() + 1.0));
      }
    }
  }
}

TEST_CASE("hyperbola identity on worked examples", "[identities]") {
  // k = 2, F = 1, x = 16: sum of tau(n) = 50
  TestFunction ones;
  ones.origin = "ones";
  ones.values.assign(17, {1.0, 0.0});
  ones.values[0] = {0.0, 0.0};
  const auto parts = hyperbola_decompose(2, 16, ones);
  CHECK(parts.lhs.real() == Catch::Approx(50.0).epsilon(1e-12));
  CHECK(parts.discrepancy() < 1e-10);

  // x = 1: every sum collapses to the single pair u = v = 1
  const auto single = hyperbola_decompose(3, 1, TestFunction::polynomial(1));
  CHECK(single.t1 == single.t3);
  CHECK(single.discrepancy() < 1e-14);

  // k = 3 with random complex values
  const auto F = TestFunction::seeded_random(77, 200);
  const auto rparts = hyperbola_decompose(3, 200, F);
  REQUIRE(rparts.discrepancy() <= 1e-10 * (F.mass() + 1.0));

  CHECK_THROWS_AS(hyperbola_decompose(1, 10, TestFunction::polynomial(10)), domain_error);
}

TEST_CASE("hyperbola identity for k in 2..4 across families", "[identities]") {
  const KloostermanParams p(Modulus(499), 5, 1);
  for (unsigned k = 2; k <= 4; ++k) {
    for (u64 x : {1ull, 12ull, 100ull, 999ull}) {
      const TestFunction fams[] = {TestFunction::kloosterman(p, x),
                                   TestFunction::seeded_random(k * 1000 + x, x),
                                   TestFunction::polynomial(x)};
      for (const auto& F : fams) {
        const auto parts = hyperbola_decompose(k, x, F);
        // tau_k masses grow, so scale by the weighted mass
        double scale = 1.0;
        const auto tau = multfun::sieve_tau_k(x, k);
        for (u64 n = 1; n <= x; ++n) scale += tau.values[n] * std::abs(F.values[n]);
        REQUIRE(parts.discrepancy() <= 1e-9 * scale);
      }
    }
  }
}

TEST_CASE("mu-route pipeline reconstructs the direct sum", "[identities]") {
  const Modulus q(1009);
  const u64 x = 64; // ceil(q^0.6)
  const auto rep = theorem5_pipeline(q, 1, 1, x, 0.1);
  CHECK(rep.reconstruction_ok);
  CHECK(rep.reconstruction_error <= 1e-8 * 64.0);
  CHECK(rep.inner_bounds_ok);
  CHECK(rep.max_inner_ratio <= 1.0);
  CHECK(static_cast<double>(rep.block_count) <= rep.block_cap);
  // |Sigma3| is trivially at most y (unit terms below the cutoff)
  CHECK(std::abs(rep.sigma3) <= std::pow(1009.0, 0.1 / 4.0) + 1e-12);
  CHECK(rep.report.id == "theorem5");
  CHECK_FALSE(rep.report.asserted);

  CHECK_THROWS_AS(theorem5_pipeline(Modulus(1008), 1, 1, 64, 0.1), not_prime);
  CHECK_THROWS_AS(theorem5_pipeline(q, 1, 1, 20, 0.1), regime_error);
}

TEST_CASE("tau-route pipeline reconstructs the direct sum", "[identities]") {
  const Modulus q(1009);
  const u64 x = 64;
  for (unsigned k : {2u, 3u}) {
    const auto rep = theorem6_pipeline(k, q, 2, 3, x, 0.1);
    REQUIRE(rep.reconstruction_ok);
    CHECK(rep.inner_bounds_ok);
    CHECK(static_cast<double>(rep.block_count) <= rep.block_cap);
    CHECK(rep.report.id == "theorem6");
  }

  // k = 1 delegates to the incomplete-sum ceiling
  const auto base = theorem6_pipeline(1, q, 2, 3, x, 0.1);
  CHECK(base.reconstruction_ok);
  CHECK(base.block_count == 0);
  CHECK(base.inner_bounds_ok);
  CHECK(base.report.notes.find("k=1") != std::string::npos);

  CHECK_THROWS_AS(theorem6_pipeline(2, Modulus(1008), 1, 1, 64, 0.1), not_prime);
}

TEST_CASE("per-block records are emitted", "[identities]") {
  const auto rep = theorem5_pipeline(Modulus(1009), 1, 0, 64, 0.1);
  REQUIRE(rep.block_count == rep.blocks.size());
  REQUIRE(rep.block_count > 0);
  for (const auto& blk : rep.blocks) {
    CHECK(blk.m1 > blk.m0);
    CHECK(blk.n1 > blk.n0);
    CHECK(blk.m1 <= 2 * blk.m0);
    CHECK(blk.abs_w >= 0.0);
  }
}
