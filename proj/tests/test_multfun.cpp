#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <numeric>

#include "ksum/multfun.hpp"
#include "ksum/rng.hpp"

using namespace ksum;
using namespace ksum::multfun;

namespace {

// factorization-based oracle for mu
int mu_brute(u64 n) {
  int factors = 0;
  for (u64 p = 2; p * p <= n; ++p) {
    if (n % p == 0) {
      n /= p;
      if (n % p == 0) return 0;
      ++factors;
    }
  }
  if (n > 1) ++factors;
  return factors % 2 == 0 ? 1 : -1;
}

} // namespace

TEST_CASE("moebius sieve matches definition and brute force", "[multfun]") {
  const auto mu = sieve_moebius(1000);
  CHECK(mu.values[1] == 1);
  CHECK(mu.values[6] == 1);
  CHECK(mu.values[4] == 0);
  CHECK(mu.values[30] == -1);
  double mertens100 = 0;
  for (u64 n = 1; n <= 100; ++n) mertens100 += mu.values[n];
  CHECK(mertens100 == 1.0); // brute-force factorization oracle agrees
  for (u64 n = 1; n <= 1000; ++n) REQUIRE(mu.values[n] == mu_brute(n));
  CHECK(mu.bound_class == BoundClass::unit);
}

TEST_CASE("moebius squared is the pointwise square", "[multfun]") {
  const auto mu = sieve_moebius(500);
  const auto mu2 = sieve_moebius_sq(500);
  for (u64 n = 1; n <= 500; ++n) REQUIRE(mu2.values[n] == mu.values[n] * mu.values[n]);
}

TEST_CASE("tau_k tables", "[multfun]") {
  const auto tau2 = sieve_tau_k(2000, 2);
  CHECK(tau2.values[12] == 6);
  CHECK(tau2.values[1] == 1);
  const auto tau1 = sieve_tau_k(50, 1);
  for (u64 n = 1; n <= 50; ++n) REQUIRE(tau1.values[n] == 1.0);
  const auto tau3 = sieve_tau_k(2000, 3);
  CHECK(tau3.values[4] == 6); // ordered triples (u, v, w) with u v w = 4
  CHECK(tau3.bound_class == BoundClass::divisor_bounded);
  CHECK(tau3.divisor_level == 3);

  // hyperbola consistency: sum_{n<=x} tau_k(n) = sum_{d<=x} tau_{k-1}(d) floor(x/d)
  for (unsigned k = 2; k <= 4; ++k) {
    const u64 x = 10000;
    const auto hi = sieve_tau_k(x, k);
    const auto lo = sieve_tau_k(x, k - 1);
    double lhs = 0, rhs = 0;
    for (u64 n = 1; n <= x; ++n) lhs += hi.values[n];
    for (u64 d = 1; d <= x; ++d) rhs += lo.values[d] * static_cast<double>(x / d);
    REQUIRE(lhs == rhs); // both sides integer-valued and exact in doubles
  }
}

TEST_CASE("r2 counts match lattice enumeration", "[multfun]") {
  const u64 x = 10000;
  const auto r = r2_counts(x);
  CHECK(r[1] == 4);
  CHECK(r[3] == 0);
  CHECK(r[5] == 8);

  // direct lattice-point enumeration
  std::vector<i64> brute(x + 1, 0);
  const i64 lim = 100; // 100^2 = x
  for (i64 a = -lim; a <= lim; ++a) {
    for (i64 b = -lim; b <= lim; ++b) {
      const i64 n = a * a + b * b;
      if (n >= 1 && n <= static_cast<i64>(x)) ++brute[n];
    }
  }
  for (u64 n = 1; n <= x; ++n) REQUIRE(r[n] == brute[n]);

  const auto w = sieve_r2(200);
  CHECK(w.values[1] == 1.0); // normalized variant keeps f(1) = 1
  CHECK(w.values[5] == 2.0);
  CHECK(w.bound_class == BoundClass::divisor_bounded);
}

TEST_CASE("multiplicativity spot-check for generated weights", "[multfun]") {
  const u64 x = 30000;
  const auto weights = {sieve_moebius(x), sieve_moebius_sq(x), sieve_tau_k(x, 3), sieve_r2(x)};
  rng::Stream rs(31337);
  for (const auto& w : weights) {
    CHECK(w.values[1] == 1.0);
    int checked = 0;
    while (checked < 10000) {
      const u64 m = rs.range(2, 400);
      const u64 n = rs.range(2, x / m);
      if (std::gcd(m, n) != 1) continue;
      REQUIRE(w.values[m * n] == w.values[m] * w.values[n]);
      ++checked;
    }
  }
}

TEST_CASE("declared bound class holds pointwise", "[multfun]") {
  const u64 x = 5000;
  const auto tau2 = sieve_tau_k(x, 2);
  for (const auto& w : {sieve_moebius(x), sieve_moebius_sq(x), sieve_one(x)}) {
    for (u64 n = 1; n <= x; ++n) REQUIRE(std::abs(w.values[n]) <= 1.0);
  }
  const auto r = sieve_r2(x);
  for (u64 n = 1; n <= x; ++n) REQUIRE(std::abs(r.values[n]) <= tau2.values[n]);
}

TEST_CASE("largest prime factor table", "[multfun]") {
  const auto t = largest_prime_factor_table(100000);
  CHECK(t.at(12) == 3);
  CHECK(t.at(97) == 97);
  CHECK(t.at(64 * 243) == 3); // 2^6 * 3^5
  CHECK(t.at(1) == 1);
  for (u64 n = 2; n <= 1000; ++n) {
    REQUIRE(n % t.at(n) == 0);
    u64 m = n;
    u64 gpf = 1;
    for (u64 p = 2; p <= m; ++p) {
      while (m % p == 0) {
        m /= p;
        gpf = p;
      }
    }
    REQUIRE(t.at(n) == gpf);
  }
}

TEST_CASE("weight tables round-trip through the binary cache", "[multfun]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "ksum_weight_cache_test";
  fs::create_directories(dir);
  const auto path = dir / "tau3_1000.kwt";

  const auto w = sieve_tau_k(1000, 3);
  save_weight(w, path);
  const auto back = load_weight(path);
  CHECK(back.name == w.name);
  CHECK(back.bound_class == w.bound_class);
  CHECK(back.divisor_level == w.divisor_level);
  REQUIRE(back.values == w.values);

  CHECK_THROWS_AS(load_weight(dir / "missing.kwt"), io_error);
  fs::remove_all(dir);
}

TEST_CASE("weight_by_name covers the CLI names", "[multfun]") {
  CHECK(weight_by_name("moebius", 10).values[6] == 1.0);
  CHECK(weight_by_name("tau3", 10).values[4] == 6.0);
  CHECK(weight_by_name("one", 10).values[7] == 1.0);
  CHECK(weight_by_name("r2", 10).values[5] == 2.0);
  CHECK_THROWS_AS(weight_by_name("nope", 10), domain_error);
}
