#include "cotmorse/complex.hpp"
#include "cotmorse/config.hpp"
#include "cotmorse/pipeline.hpp"

#include "doctest.h"

#include <random>
#include <string>

using namespace cotmorse;

namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

BitMatrix random_bits(std::mt19937_64& rng, int r, int c, double density = 0.5) {
  std::bernoulli_distribution coin(density);
  BitMatrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m.set(i, j, coin(rng));
  return m;
}

// Vectors of GF(2)^dim as bit masks; image and kernel by enumeration.
std::vector<std::uint32_t> apply_all(const BitMatrix& m) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t v = 0; v < (1u << m.cols()); ++v) {
    std::uint32_t w = 0;
    for (int i = 0; i < m.rows(); ++i) {
      bool bit = false;
      for (int j = 0; j < m.cols(); ++j) bit ^= m.get(i, j) && ((v >> j) & 1u);
      if (bit) w |= 1u << i;
    }
    out.push_back(w);
  }
  return out;
}

int log2_count(std::size_t n) {
  int k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

int brute_rank(const BitMatrix& m) {
  auto img = apply_all(m);
  std::sort(img.begin(), img.end());
  img.erase(std::unique(img.begin(), img.end()), img.end());
  return log2_count(img.size());
}

Generator gen(const std::string& id, double action, int degree) { return {id, action, degree}; }

}  // namespace

TEST_CASE("GF(2) rank agrees with brute-force image enumeration") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 60; ++trial) {
    const int r = 1 + static_cast<int>(rng() % 9), c = 1 + static_cast<int>(rng() % 9);
    const BitMatrix m = random_bits(rng, r, c, trial % 3 == 0 ? 0.2 : 0.5);
    CHECK(m.rank() == brute_rank(m));
  }
  CHECK(BitMatrix::identity(70).rank() == 70);
  const BitMatrix big = random_bits(rng, 3, 130);
  CHECK((big + big).is_zero());
}

TEST_CASE("pendulum-shaped complex: two connections cancel") {
  const std::vector<Generator> g{gen("x0", -0.05, 0), gen("x1", 0.05, 1)};
  const auto cx = build_complex(g, {{"x1", "x0", 2}});
  CHECK(cx.boundary_at(1)->is_zero());
  const auto h = homology_ranks(cx);
  CHECK(h.at(0) == 1);
  CHECK(h.at(1) == 1);
  const auto acyclic = homology_ranks(build_complex(g, {{"x1", "x0", 1}}));
  CHECK(acyclic.at(0) == 0);
  CHECK(acyclic.at(1) == 0);
}

TEST_CASE("homology ranks agree with brute-force cycles and boundaries") {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 30; ++trial) {
    const int n0 = 1 + static_cast<int>(rng() % 4), n1 = 1 + static_cast<int>(rng() % 5),
              n2 = 1 + static_cast<int>(rng() % 4);
    const BitMatrix d1 = random_bits(rng, n0, n1);
    // columns of d2 drawn from ker d1 so that d1 d2 = 0
    const auto img1 = apply_all(d1);
    std::vector<std::uint32_t> ker;
    for (std::uint32_t v = 0; v < img1.size(); ++v)
      if (img1[v] == 0) ker.push_back(v);
    BitMatrix d2(n1, n2);
    for (int j = 0; j < n2; ++j) {
      const std::uint32_t v = ker[rng() % ker.size()];
      for (int i = 0; i < n1; ++i) d2.set(i, j, (v >> i) & 1u);
    }
    std::vector<Generator> g;
    for (int i = 0; i < n0; ++i) g.push_back(gen("a" + std::to_string(i), i, 0));
    for (int i = 0; i < n1; ++i) g.push_back(gen("b" + std::to_string(i), 10 + i, 1));
    for (int i = 0; i < n2; ++i) g.push_back(gen("c" + std::to_string(i), 20 + i, 2));
    std::vector<ConnectionCount> counts;
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j)
        counts.push_back({"b" + std::to_string(j), "a" + std::to_string(i), d1.get(i, j) ? 3 : 2});
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j)
        counts.push_back({"c" + std::to_string(j), "b" + std::to_string(i), d2.get(i, j) ? 1 : 0});
    const auto h = homology_ranks(build_complex(g, counts));
    const int z1 = log2_count(ker.size());
    CHECK(h.at(0) == n0 - brute_rank(d1));
    CHECK(h.at(1) == z1 - brute_rank(d2));
    CHECK(h.at(2) == n2 - brute_rank(d2));
  }
}

TEST_CASE("nonzero boundary squared is reported with the offending pair") {
  const std::vector<Generator> g{gen("c", 0.0, 0), gen("b", 1.0, 1), gen("a", 2.0, 2)};
  const auto msg = error_of([&] { build_complex(g, {{"a", "b", 1}, {"b", "c", 1}}); });
  CHECK(msg.find("boundary squared is nonzero in degree 2") != std::string::npos);
  CHECK(msg.find("(a -> c)") != std::string::npos);
}

TEST_CASE("missing and malformed counts are rejected") {
  const std::vector<Generator> g{gen("x", 0.0, 0), gen("y", 1.0, 1), gen("z", 1.5, 1)};
  const auto msg = error_of([&] { build_complex(g, {{"y", "x", 1}}); });
  CHECK(msg.find("[z -> x]") != std::string::npos);
  CHECK_THROWS_AS(build_complex(g, {{"y", "x", 1}, {"z", "x", -1}}), ComplexError);
  CHECK_THROWS_AS(build_complex(g, {{"y", "x", 1}, {"z", "x", 0}, {"y", "w", 1}}), ComplexError);
  CHECK_THROWS_AS(build_complex({gen("x", 0, 0), gen("x", 1, 1)}, {}), ComplexError);
}

TEST_CASE("empty complex has no homology") {
  const auto cx = build_complex({}, {});
  CHECK(homology_ranks(cx).empty());
  nlohmann::json j = cx;
  CHECK(j.at("generators").empty());
}

TEST_CASE("generators are sorted by action inside each degree") {
  const auto cx = build_complex({gen("hi", 3.0, 0), gen("lo", -1.0, 0)}, {});
  CHECK(cx.generators.at(0).front().id == "lo");
  CHECK(cx.position(0, "hi") == 1);
  CHECK(cx.position(1, "hi") == -1);
}

TEST_CASE("unitriangular inverse round trip") {
  std::mt19937_64 rng(53);
  for (int n : {1, 2, 7, 65, 130}) {
    BitMatrix m = random_bits(rng, n, n);
    for (int i = 0; i < n; ++i) {
      m.set(i, i, true);
      for (int j = 0; j < i; ++j) m.set(i, j, false);
    }
    REQUIRE(is_upper_unitriangular(m));
    const BitMatrix inv = unitriangular_inverse(m);
    CHECK(is_upper_unitriangular(inv));
    CHECK(m * inv == BitMatrix::identity(n));
    CHECK(inv * m == BitMatrix::identity(n));
  }
  BitMatrix lower = BitMatrix::identity(3);
  lower.set(2, 0, true);
  CHECK_FALSE(is_upper_unitriangular(lower));
  CHECK_THROWS(unitriangular_inverse(lower));
}

TEST_CASE("continuation maps: identity, chain-map violation, induced rank") {
  const std::vector<Generator> g{gen("x0", -0.05, 0), gen("x1", 0.05, 1)};
  const auto cx = build_complex(g, {{"x1", "x0", 2}});
  const auto id = build_continuation(cx, cx, {{"x0", "x0", 1}, {"x1", "x1", 1}});
  CHECK(id.maps.at(0) == BitMatrix::identity(1));
  CHECK(induced_homology_rank(cx, cx, id).at(1) == 1);
  const auto inv = inverse(id);
  CHECK(inv.maps.at(1) == BitMatrix::identity(1));

  // target with d = 1: the identity on generators is no chain map from cx
  const auto target = build_complex(g, {{"x1", "x0", 1}});
  const auto msg = error_of([&] { build_continuation(cx, target, {{"x0", "x0", 1}, {"x1", "x1", 1}}); });
  CHECK(msg.find("x1") != std::string::npos);
  CHECK_THROWS_AS(build_continuation(cx, cx, {{"x0", "x1", 1}}), ComplexError);

  // zero map kills homology
  const auto zero = build_continuation(cx, cx, {{"x0", "x0", 0}, {"x1", "x1", 2}});
  CHECK(induced_homology_rank(cx, cx, zero).at(0) == 0);
}

TEST_CASE("cone profile") {
  CHECK(cone_profile(0.0) == 1.0);
  CHECK(cone_profile(1.0) == 0.0);
  CHECK(cone_profile(0.5) == doctest::Approx(0.5));
  CHECK(cone_profile_derivative(0.0) == 0.0);
  CHECK(cone_profile_derivative(1.0) == 0.0);
  for (double r = 0.05; r < 1.0; r += 0.1) {
    CHECK(cone_profile_derivative(r) < 0.0);
    const double h = 1e-6;
    CHECK(cone_profile_derivative(r) ==
          doctest::Approx((cone_profile(r + h) - cone_profile(r - h)) / (2 * h)).epsilon(1e-8));
  }
}

TEST_CASE("pendulum continuation: constant shift is the identity, eps 0.05 -> 0.08 is unitriangular") {
  auto cfg = load_config(std::string(COTMORSE_SOURCE_DIR) + "/configs/pendulum_continuation.json");
  cfg.k_sweep = {8};

  const auto same = run_continuation(cfg, cfg.hamiltonian, cfg.hamiltonian.plus_constant(0.3), std::nullopt);
  INFO(nlohmann::json(same.failures).dump());
  CHECK(same.failures.empty());
  CHECK(same.shift == 0.0);
  REQUIRE(same.psi);
  for (const auto& [k, m] : same.psi->maps) CHECK(m == BitMatrix::identity(m.rows()));

  const auto cont = run_continuation(cfg, cfg.hamiltonian, *cfg.continuation.target, std::nullopt);
  INFO(nlohmann::json(cont.failures).dump());
  CHECK(cont.failures.empty());
  CHECK(cont.shift == doctest::Approx(0.03).epsilon(1e-6));
  CHECK(cont.chain_map);
  CHECK(cont.unitriangular);
  CHECK(cont.inverse_ok);
  CHECK(cont.isomorphism);
  CHECK(cont.induced_ranks.at(0) == 1);
  CHECK(cont.induced_ranks.at(1) == 1);
}
