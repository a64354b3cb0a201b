#include "cotmorse/operators.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <memory>
#include <numbers>

using namespace cotmorse;

namespace {

constexpr double kPi = std::numbers::pi;

double mixed_inner(const LinearOperatorMatrix& L, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(L.source.gram().cwiseProduct(b));
}

MatrixLoop random_trig_matrix(std::mt19937_64& rng, int n, int degree) {
  MatrixLoop A(n, degree);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A.entry(i, j) = testutil::random_loop(rng, 1, degree, 0.3);
  return A;
}

// Nested random subspaces: the first d columns of one random orthonormal frame.
SubspaceBasis leading(const Eigen::MatrixXd& frame, int d, const Eigen::VectorXd& gram) {
  return SubspaceBasis::from_span(frame.leftCols(d), gram);
}

}  // namespace

TEST_CASE("L is self-adjoint in the mixed metric and reproduces int p q'") {
  std::mt19937_64 rng(1);
  for (int n : {1, 2})
    for (double s : {0.55, 0.7}) {
      const auto L = assemble_L(n, 6, s);
      for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd z = testutil::random_vector(rng, L.matrix.rows());
        const Eigen::VectorXd w = testutil::random_vector(rng, L.matrix.rows());
        const double lhs = mixed_inner(L, L.matrix * z, w), rhs = mixed_inner(L, z, L.matrix * w);
        CHECK(std::abs(lhs - rhs) < 1e-10 * (1.0 + std::abs(lhs)));
        // quadrature route for int p.q' dt
        const auto pz = PhasePoint::from_flat(z, n, 6, WindingVector::Zero(n), s);
        const auto dq = derivative(pz.q);
        const GridTransform g(6, 40);
        const double integral = (g.forward(pz.p).cwiseProduct(g.forward(dq))).sum() / g.points();
        CHECK(0.5 * mixed_inner(L, L.matrix * z, z) == doctest::Approx(integral).epsilon(1e-10));
      }
    }
}

TEST_CASE("quadratic form of q = sin 2 pi t, p = cos 2 pi t is pi") {
  const int K = 4;
  FourierLoop q(1, K), p(1, K);
  q.set_sin_mode(1, Eigen::VectorXd::Ones(1));
  p.set_cos_mode(1, Eigen::VectorXd::Ones(1));
  const PhasePoint z(q, p, WindingVector::Zero(1), 0.6);
  const auto L = assemble_L(1, K, 0.6);
  CHECK(0.5 * mixed_inner(L, L.matrix * z.flat(), z.flat()) == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("L eigenvalues are -1, 0, +1 with multiplicities 2Kn, 2n, 2Kn") {
  for (int n : {1, 2})
    for (int K : {4, 8})
      for (double s : {0.55, 0.6, 0.7}) {
        const auto P = spectral_projectors(assemble_L(n, K, s));
        for (Eigen::Index i = 0; i < P.eigenvalues.size(); ++i) {
          const double ev = P.eigenvalues(i);
          CHECK(std::min({std::abs(ev + 1), std::abs(ev), std::abs(ev - 1)}) < 1e-10);
        }
        CHECK(P.zero_basis.dim() == 2 * n);
        CHECK(P.minus_basis.dim() == 2 * K * n);
        CHECK(P.plus_basis.dim() == 2 * K * n);
      }
}

TEST_CASE("graph of -Delta^{s-1} d/dt is the -1 eigenspace, the + graph the +1 eigenspace") {
  std::mt19937_64 rng(3);
  const int n = 2, K = 7;
  const double s = 0.6;
  const auto L = assemble_L(n, K, s);
  FourierLoop q = testutil::random_loop(rng, n, K);
  q.coeffs().head(n).setZero();
  const FourierLoop slope = delta_power(derivative(q), s - 1.0);
  const PhasePoint minus(q, slope * -1.0, WindingVector::Zero(n), s);
  const PhasePoint plus(q, slope, WindingVector::Zero(n), s);
  CHECK((L.matrix * minus.flat() + minus.flat()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((L.matrix * plus.flat() - plus.flat()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spectral projectors: partition of unity, idempotent, self-adjoint") {
  const auto L = assemble_L(1, 8, 0.6);
  const auto P = spectral_projectors(L);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(L.matrix.rows(), L.matrix.cols());
  CHECK((P.minus.matrix + P.zero.matrix + P.plus.matrix - I).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((P.plus.matrix * P.plus.matrix - P.plus.matrix).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::VectorXd g = L.source.gram();
  for (const auto* Pm : {&P.minus, &P.zero, &P.plus}) {
    const Eigen::MatrixXd WP = g.asDiagonal() * Pm->matrix;
    CHECK((WP - WP.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(P.minus_basis.dim() == 16);
  CHECK(P.minus_basis.orthonormality_error() < 1e-10);
  // constants are fixed by the zero projector
  Eigen::VectorXd c = Eigen::VectorXd::Zero(L.matrix.rows());
  c(0) = 0.3;
  c(L.matrix.rows() / 2) = -1.2;
  CHECK((P.zero.matrix * c - c).norm() < 1e-12);
}

TEST_CASE("multiplication by the identity loop is the identity and preserves norms") {
  std::mt19937_64 rng(5);
  const auto M = multiplication_operator(MatrixLoop::identity(2, 3), 0.4, 0.4, 6);
  CHECK((M.matrix - Eigen::MatrixXd::Identity(M.matrix.rows(), M.matrix.cols())).cwiseAbs().maxCoeff() < 1e-14);
  const auto u = testutil::random_loop(rng, 2, 6);
  const FourierLoop Au(2, 6, M.matrix * u.coeffs());
  CHECK(sobolev_norm(Au, 0.4) == doctest::Approx(sobolev_norm(u, 0.4)).epsilon(1e-14));
}

TEST_CASE("multiplication matrix equals the exact product for low degrees") {
  std::mt19937_64 rng(6);
  const int K = 8;
  const MatrixLoop A = random_trig_matrix(rng, 2, K / 2);
  const auto u = testutil::random_loop(rng, 2, K / 2).resized(K);
  const auto M = multiplication_operator(A, 0.0, 0.0, K);
  const FourierLoop Au(2, K, M.matrix * u.coeffs());
  for (double t : {0.05, 0.31, 0.77}) CHECK((Au.evaluate(t) - A.evaluate(t) * u.evaluate(t)).norm() < 1e-12);
}

TEST_CASE("multiplication norm for the rotation loop stabilises across K") {
  const double s = 0.6, r = 0.5 * s;
  const MatrixLoop A = rotation_loop(1.0);
  std::vector<double> norms;
  for (int K : {32, 64, 128}) norms.push_back(power_iteration_norm(multiplication_operator(A, r, r, K)));
  CHECK(std::abs(norms[2] / norms[1] - 1.0) < 0.05);
  CHECK(std::abs(norms[1] / norms[0] - 1.0) < 0.05);
  // the constant c = |M| / |A|_s stays moderate
  CHECK(norms[2] / A.sobolev_norm(s) < 2.0);
}

TEST_CASE("commutators vanish for constant A") {
  MatrixLoop A(2, 0);
  A.entry(0, 1).coeffs()(0) = 1.3;
  A.entry(1, 0).coeffs()(0) = -0.4;
  for (auto v : {CommutatorVariant::DerivativeInside, CommutatorVariant::DerivativeOutside})
    CHECK(commutator_operator(A, 0.6, 8, v, 0.55).matrix.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("chain rule links the two commutator variants") {
  std::mt19937_64 rng(8);
  const int K = 10;
  const double s = 0.6;
  const MatrixLoop A = random_trig_matrix(rng, 2, 3);
  const auto v1 = commutator_operator(A, s, K, CommutatorVariant::DerivativeInside, 0.55).matrix;
  const auto v2 = commutator_operator(A, s, K, CommutatorVariant::DerivativeOutside, 0.55).matrix;
  const Eigen::MatrixXd Mdot = multiplication_operator(A.derivative(), 0.0, 0.0, K).matrix;
  const Eigen::MatrixXd rhs = v2 - delta_power_matrix(2, K, s - 1.0) * Mdot;
  CHECK((v1 - rhs).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + v1.cwiseAbs().maxCoeff()));
}

TEST_CASE("chart transition of the identity diffeo is the identity") {
  std::mt19937_64 rng(10);
  const ShiftDiffeo id(std::vector<TrigSeries>{TrigSeries(1)});
  const PhasePoint z(testutil::random_loop(rng, 1, 6, 0.1), testutil::random_loop(rng, 1, 6, 0.1),
                     WindingVector::Zero(1), 0.6);
  const auto D = chart_transition_differential(id, z, 6);
  CHECK((D.matrix - Eigen::MatrixXd::Identity(D.matrix.rows(), D.matrix.cols())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-diffeomorphic shift is rejected with the failing node") {
  const ShiftDiffeo bad(std::vector<TrigSeries>{TrigSeries(1, {TrigTerm{0, {1}, 0.0, 0.3}})});
  // det dtau = 1 + 0.6 pi cos 2 pi q is negative near q = 1/2
  const PhasePoint z(FourierLoop::constant(Eigen::VectorXd::Constant(1, 0.5), 4), FourierLoop(1, 4),
                     WindingVector::Zero(1), 0.6);
  bool named = false;
  try {
    chart_transition_differential(bad, z, 4);
  } catch (const std::exception& e) {
    named = std::string(e.what()).find("node") != std::string::npos;
  }
  CHECK(named);
}

TEST_CASE("chart transition of tau composed with its inverse is the identity on low modes") {
  auto tau = std::make_shared<ShiftDiffeo>(std::vector<TrigSeries>{TrigSeries(1, {TrigTerm{0, {1}, 0.0, 0.1}})});
  const InverseDiffeo inv(tau);
  const int K = 32;
  FourierLoop q(1, K), p(1, K);
  q.coeffs()(0) = 0.1;
  q.set_cos_mode(1, Eigen::VectorXd::Constant(1, 0.05));
  p.set_sin_mode(1, Eigen::VectorXd::Constant(1, 0.2));
  const PhasePoint z(q, p, WindingVector::Zero(1), 0.6);
  const PhasePoint w = cotangent_lift(inv, z, 8 * K + 16);
  const Eigen::MatrixXd prod =
      chart_transition_differential(*tau, w, K).matrix * chart_transition_differential(inv, z, K).matrix;
  // compare on inputs and outputs of degree <= K/4 in both components
  const int half = block_count(K), low = block_count(K / 4);
  double err = 0.0;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(low, low);
  for (int a : {0, half})
    for (int b : {0, half}) {
      const Eigen::MatrixXd expected = a == b ? I : Eigen::MatrixXd::Zero(low, low);
      err = std::max(err, (prod.block(a, b, low, low) - expected).cwiseAbs().maxCoeff());
    }
  CHECK(err < 1e-8);
}

TEST_CASE("graph difference operator has the compactness signature") {
  const ShiftDiffeo tau(std::vector<TrigSeries>{TrigSeries(1, {TrigTerm{0, {1}, 0.0, 0.2}})});
  std::vector<LinearOperatorMatrix> sweep;
  // a moving base loop on the zero section; at q = const the difference vanishes identically
  for (int K : {16, 32, 64}) {
    FourierLoop q(1, K);
    q.set_sin_mode(1, Eigen::VectorXd::Constant(1, 0.1));
    const PhasePoint z(q, FourierLoop(1, K), WindingVector::Zero(1), 0.6);
    sweep.push_back(graph_difference_operator(tau, z, K));
  }
  CHECK(sweep.back().singular_values()(0) > 0.05);
  const auto sig = compactness_signature(sweep);
  INFO("head variation ", sig.head_variation, ", tail ratio ", sig.tail_ratio);
  CHECK(sig.head_stable);
  CHECK(sig.tail_decays);
}

TEST_CASE("relative dimension: equal, one extra direction, antisymmetry") {
  std::mt19937_64 rng(13);
  const Eigen::VectorXd gram = Eigen::VectorXd::LinSpaced(12, 1.0, 3.0);
  Eigen::MatrixXd frame(12, 12);
  for (int j = 0; j < 12; ++j) frame.col(j) = testutil::random_vector(rng, 12);
  const auto W = leading(frame, 5, gram);
  const auto V = leading(frame, 6, gram);
  CHECK(relative_dimension(W, W) == 0);
  CHECK(relative_dimension(V, W) == 1);
  CHECK(relative_dimension(W, V) == -1);
}

TEST_CASE("relative dimension against the zero subspace is the dimension") {
  std::mt19937_64 rng(19);
  const Eigen::VectorXd gram = Eigen::VectorXd::LinSpaced(8, 1.0, 2.0);
  Eigen::MatrixXd frame(8, 8);
  for (int j = 0; j < 8; ++j) frame.col(j) = testutil::random_vector(rng, 8);
  const auto zero = leading(frame, 0, gram);
  CHECK(zero.dim() == 0);
  CHECK(relative_dimension(leading(frame, 3, gram), zero) == 3);
  CHECK(relative_dimension(zero, leading(frame, 3, gram)) == -3);
  CHECK(relative_dimension(zero, zero) == 0);
}

TEST_CASE("relative dimension is additive and antisymmetric on random nested triples") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 39);
  const Eigen::VectorXd gram = Eigen::VectorXd::Ones(40);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXd frame(40, 40);
    for (int j = 0; j < 40; ++j) frame.col(j) = testutil::random_vector(rng, 40);
    int d[3] = {dim(rng), dim(rng), dim(rng)};
    const SubspaceBasis U = leading(frame, d[0], gram), V = leading(frame, d[1], gram), W = leading(frame, d[2], gram);
    CHECK(relative_dimension(U, W) == relative_dimension(U, V) + relative_dimension(V, W));
    CHECK(relative_dimension(U, V) == -relative_dimension(V, U));
    CHECK(relative_dimension(U, V) == d[0] - d[1]);
  }
}

TEST_CASE("spectrum report serialises the declared fields") {
  const auto L = assemble_L(1, 4, 0.6);
  const nlohmann::json j = spectrum_report(L, 0.6, 0.6, 5);
  CHECK(j.at("K") == 4);
  CHECK(j.at("top_singular_values").size() == 5);
  CHECK(j.contains("fitted_tail_exponent"));
}
