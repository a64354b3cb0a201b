#include "cotmorse/estimates.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <string>

using namespace cotmorse;

namespace {

// Independent long-double summation, no adaptivity.
long double brute_G(long double a, long double b, long k, long H) {
  long double sum = 0;
  for (long h = H; h >= 1; --h) sum += 1.0L / (std::pow((long double)h, a) * std::pow((long double)(k + h), b));
  return sum;
}

long double brute_F(long double s, long double r, long k, long H) {
  auto g = [s](long h) -> long double {
    if (h == 0) return 0;
    return std::pow(std::fabs((long double)h), 2 * (s - 1)) * (long double)h;
  };
  long double sum = 0;
  for (long h = -H; h <= H; ++h) {
    const long double d = g(k) - g(h);
    sum += d * d / (std::pow(1 + std::fabs((long double)(k - h)), 2 * s) * std::pow(1 + std::fabs((long double)h), 2 * r));
  }
  return sum;
}

// Least-squares slope of log v against log k, written out directly.
double oracle_slope(const std::vector<long>& ks, const std::vector<long double>& vs) {
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const long double m = ks.size();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const long double x = std::log((long double)ks[i]), y = std::log(vs[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (double)((m * sxy - sx * sy) / (m * sxx - sx * sx));
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("G(2,2,2,1) is pi^2/3 - 3 up to the reported tail") {
  const double exact = std::numbers::pi * std::numbers::pi / 3.0 - 3.0;
  const auto v = lemma_sum_G(2, 2, 2, 1);
  CHECK(v.value < exact);
  CHECK(exact - v.value <= 1.5 * v.tail_estimate);
  CHECK(std::abs((double)brute_G(2, 2, 1, 1000000) - exact) < 1e-12);
  CHECK(v.tail_estimate < 1e-3 * v.value);
}

TEST_CASE("G agrees with direct long double summation at the same cutoff") {
  for (auto [a, b] : {std::pair{1.2, 1.2}, {2.0, 0.8}, {3.0, 0.5}})
    for (long k : {1L, 7L, 300L}) {
      const auto v = lemma_sum_G(a, b, 0.5, k, 20000);
      CHECK(v.value == doctest::Approx((double)brute_G(a, b, k, 20000)).epsilon(1e-12));
    }
}

TEST_CASE("doubling the cutoff changes adaptive sums by less than 0.5%") {
  for (long k : {4L, 64L, 1024L}) {
    const auto g = lemma_sum_G(1.2, 1.2, 1.2, k);
    CHECK(std::abs(lemma_sum_G(1.2, 1.2, 1.2, k, 2 * g.H_max).value / g.value - 1) < 5e-3);
    const auto f = F_of_k(0.55, 0.6, k);
    CHECK(std::abs(F_of_k(0.55, 0.6, k, 2 * f.H_max).value / f.value - 1) < 5e-3);
  }
}

TEST_CASE("hypothesis violations name the inequality") {
  CHECK(error_of([] { lemma_sum_G(0.5, 0.4, 0.1, 4); }).find("alpha + beta > 1") != std::string::npos);
  CHECK(error_of([] { lemma_sum_G(2, 1, 1.5, 4); }).find("gamma <= beta") != std::string::npos);
  CHECK(error_of([] { lemma_sum_G(2, 1, -0.1, 4); }).find("gamma >= 0") != std::string::npos);
  CHECK(error_of([] { F_of_k(0.4, 0.7, 4); }).find("s in (1/2, 1)") != std::string::npos);
  CHECK(error_of([] { F_of_k(0.6, 0.5, 4); }).find("r > 1/2") != std::string::npos);
}

TEST_CASE("F matches direct summation and is even in k") {
  for (long k : {1L, 5L, 40L}) {
    const auto v = F_of_k(0.6, 0.7, k, 4000);
    CHECK(v.value == doctest::Approx((double)brute_F(0.6L, 0.7L, k, 4000)).epsilon(1e-10));
    CHECK(F_of_k(0.6, 0.7, -k).value == doctest::Approx(F_of_k(0.6, 0.7, k).value).epsilon(1e-12));
  }
  CHECK(F_of_k(0.6, 0.7, 0).value > 0);
}

TEST_CASE("G slope fit matches the oracle slope on 2^4..2^12") {
  // Pre-asymptotic: the oracle slope here is about -1.09, outside -1.2 +- 0.1.
  const auto ks = geometric_grid(4, 12);
  std::vector<long double> vs;
  for (long k : ks) vs.push_back(brute_G(1.2L, 1.2L, k, 1L << 22) + std::pow((long double)(1L << 22), -1.4L) / 1.4L);
  const auto fit = fit_lemma_G(1.2, 1.2, 1.2, ks);
  CHECK(fit.slope == doctest::Approx(oracle_slope(ks, vs)).epsilon(2e-3));
  CHECK(fit.residual < 0.05);
}

TEST_CASE("G slope is within 0.1 of -gamma on 2^8..2^16") {
  const auto ks = geometric_grid(8, 16);
  for (auto [a, b, c] : {std::array{1.2, 1.2, 1.2}, {2.0, 1.2, 1.2}, {2.0, 0.8, 0.8}}) {
    const auto fit = fit_lemma_G(a, b, c, ks);
    CHECK(std::abs(fit.slope + c) < 0.1);
    CHECK(fit.residual < 0.05);
  }
}

TEST_CASE("G with beta = gamma = 0 is flat") {
  const auto fit = fit_lemma_G(2.0, 0.0, 0.0, geometric_grid(4, 12));
  CHECK(std::abs(fit.slope) < 0.05);
}

TEST_CASE("F slopes on 2^4..2^11 are within 0.15 of -2(1-s)") {
  const auto ks = geometric_grid(4, 11);
  for (auto [s, r] : {std::pair{0.6, 0.7}, {0.55, 0.6}}) {
    const auto fit = fit_F(s, r, ks);
    CHECK(std::abs(fit.slope + 2 * (1 - s)) < 0.15);
    CHECK(fit.residual < 0.05);
  }
}

TEST_CASE("fit_decay recovers an exact power law") {
  std::vector<double> ks, vs;
  for (int i = 0; i < 6; ++i) {
    ks.push_back(std::pow(2.0, i + 3));
    vs.push_back(3.0 * std::pow(ks.back(), -0.7));
  }
  const auto fit = fit_decay(ks, vs);
  CHECK(fit.slope == doctest::Approx(-0.7).epsilon(1e-12));
  CHECK(std::exp(fit.intercept) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.residual < 1e-12);
  CHECK_THROWS(fit_decay({1.0}, {1.0}));
}

TEST_CASE("multiplication by the identity has ratio 1 / |I|_s for every sample") {
  const auto rep = verify_norm_inequality(InequalityKind::Multiplication, 0.6, 0.3, 5, {8, 16},
                                          MatrixLoop::identity(2, 0));
  const double expect = 1.0 / MatrixLoop::identity(2, 0).sobolev_norm(0.6);
  for (const auto& row : rep.rows)
    for (double q : row.ratios) CHECK(q == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("commutator with a constant multiplier has zero ratios") {
  MatrixLoop A(2, 0);
  A.entry(0, 0).coeffs()(0) = 2.0;
  A.entry(1, 0).coeffs()(0) = 0.5;
  for (auto kind : {InequalityKind::CommutatorV1, InequalityKind::CommutatorV2}) {
    const auto rep = verify_norm_inequality(kind, 0.6, 0.55, 4, {16}, A);
    for (double q : rep.rows.front().ratios) CHECK(q < 1e-12);
  }
}

TEST_CASE("multiplication ratio stabilises across K") {
  const auto rep = verify_norm_inequality(InequalityKind::Multiplication, 0.6, 0.3, 8, {32, 64, 128});
  CHECK(rep.rows.size() == 3);
  CHECK(rep.variation < 0.10);
  CHECK(rep.stabilized);
}

TEST_CASE("inequality kinds parse from config names") {
  CHECK(inequality_kind_from_string("multiplication") == InequalityKind::Multiplication);
  CHECK(inequality_kind_from_string("commutator-v1") == InequalityKind::CommutatorV1);
  CHECK(inequality_kind_from_string("commutator-v2") == InequalityKind::CommutatorV2);
  CHECK_THROWS(inequality_kind_from_string("bogus"));
}
