// Acceptance driver: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.  Tolerances are fixed here, not read from configs.

#include "cotmorse/action.hpp"
#include "cotmorse/complex.hpp"
#include "cotmorse/config.hpp"
#include "cotmorse/estimates.hpp"
#include "cotmorse/flow.hpp"
#include "cotmorse/operators.hpp"
#include "cotmorse/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <cstdlib>
#include <sstream>
#include <string>

using namespace cotmorse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// 1. L eigenstructure
Outcome l_eigenstructure() {
  constexpr double kEigTol = 1e-10;
  constexpr double kMaxSeconds = 60;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string bad;
  for (int n : {1, 2})
    for (int K : {8, 16, 32})
      for (double s : {0.55, 0.6, 0.7}) {
        const auto L = assemble_L(n, K, s);
        const auto P = spectral_projectors(L);
        for (Eigen::Index i = 0; i < P.eigenvalues.size(); ++i) {
          const double ev = P.eigenvalues(i);
          worst = std::max(worst, std::min({std::abs(ev + 1), std::abs(ev), std::abs(ev - 1)}));
        }
        if (P.zero_basis.dim() != 2 * n || P.minus_basis.dim() != 2 * K * n || P.plus_basis.dim() != 2 * K * n)
          bad += " (n=" + std::to_string(n) + ",K=" + std::to_string(K) + ",s=" + fmt(s) + ")";
      }
  const double secs = seconds_since(t0);
  return {worst < kEigTol && bad.empty() && secs < kMaxSeconds,
          "max eigenvalue error " + fmt(worst) + ", multiplicity mismatches:" + (bad.empty() ? " none" : bad) +
              ", " + fmt(secs) + " s"};
}

// 2. Commutator compactness signature
Outcome commutator_signature() {
  constexpr double kNormVariation = 0.20;
  constexpr double kTailRatio = 0.05;
  constexpr double kMaxSeconds = 300;
  const auto t0 = std::chrono::steady_clock::now();
  const MatrixLoop A = rotation_loop(1.0);
  std::vector<double> norms;
  Eigen::VectorXd sv;
  for (int K : {64, 128, 256}) {
    const auto C = commutator_operator(A, 0.6, K, CommutatorVariant::DerivativeInside, 0.55);
    sv = C.singular_values();
    norms.push_back(sv(0));
  }
  double variation = 0.0;
  for (double v : norms) variation = std::max(variation, std::abs(v / norms.back() - 1.0));
  const double tail = sv(19) / sv(0);
  const double secs = seconds_since(t0);
  return {variation < kNormVariation && tail < kTailRatio && secs < kMaxSeconds,
          "norm variation " + fmt(variation) + ", sigma20/sigma1 at K=256 " + fmt(tail) + ", " + fmt(secs) + " s"};
}

// 3. Decay-rate fits
Outcome decay_fits() {
  constexpr double kFSlopeTol = 0.15;
  constexpr double kGSlopeTol = 0.10;
  constexpr double kResidual = 0.05;
  constexpr double kMaxSeconds = 120;
  const auto t0 = std::chrono::steady_clock::now();
  const auto ks = geometric_grid(8, 16);
  bool ok = true;
  std::string detail;
  for (double s : {0.55, 0.6, 0.7}) {
    const auto fit = fit_F(s, s + 0.05, ks);
    ok = ok && std::abs(fit.slope + 2 * (1 - s)) < kFSlopeTol && fit.residual < kResidual;
    detail += "F(s=" + fmt(s) + ") " + fmt(fit.slope) + "/" + fmt(fit.residual) + "; ";
  }
  for (auto [a, b, g] : {std::array{1.2, 1.2, 1.2}, {2.0, 0.8, 0.8}}) {
    const auto fit = fit_lemma_G(a, b, g, ks);
    ok = ok && std::abs(fit.slope + g) < kGSlopeTol && fit.residual < kResidual;
    detail += "G(" + fmt(a) + "," + fmt(b) + "," + fmt(g) + ") " + fmt(fit.slope) + "/" + fmt(fit.residual) + "; ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < kMaxSeconds, "slope/residual on k=2^8..2^16: " + detail + fmt(secs) + " s"};
}

// 4. Gradient correctness
Outcome gradient_fd() {
  constexpr double kRelTol = 1e-6;
  constexpr double kStep = 1e-5;
  const HamiltonianSpec H(
      2, {TrigSeries(2, {TrigTerm{1, {0, 1}, 0.2, 0.0}}), TrigSeries(2, {TrigTerm{0, {1, 0}, 0.0, 0.1}})},
      TrigSeries(2, {TrigTerm{0, {1, 0}, 0.3, 0.1}, TrigTerm{1, {1, 1}, 0.0, 0.2}}));
  const ActionFunctional A(H, 6, 0.6, WindingVector::Zero(2));
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> N01;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd z(A.size()), v(A.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z(i) = 0.3 * N01(rng);
      v(i) = N01(rng);
    }
    const double fd = (A.value(z + kStep * v) - A.value(z - kStep * v)) / (2 * kStep);
    const double exact = A.differential(z).dot(v);
    worst = std::max(worst, std::abs(fd - exact) / std::abs(exact));
  }
  return {worst < kRelTol, "max relative error over 20 points " + fmt(worst)};
}

// 5 and 6. Pendulum end to end, action lower bound
struct PendulumRun {
  Outcome end_to_end;
  Outcome lower_bound;
};

PendulumRun pendulum_end_to_end() {
  constexpr double kResidual = 1e-10;
  constexpr double kMaxSeconds = 900;
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = load_config(std::string(COTMORSE_SOURCE_DIR) + "/configs/defaults.json");
  cfg.k_sweep = {8, 16, 32};
  cfg.bvp.sweep = true;
  const double eps = 0.05;
  cfg.hamiltonian = pendulum_hamiltonian(eps);
  const MorseReport m = run_morse(cfg, cfg.hamiltonian, MorseStages{});
  const double secs = seconds_since(t0);

  std::ostringstream d;
  bool ok = m.failures.empty() && m.points.size() == 2;
  d << m.points.size() << " critical points";
  std::vector<int> idx;
  for (const auto& cp : m.points) {
    ok = ok && cp.residual < kResidual;
    idx.push_back(cp.relative_index);
    d << " [" << cp.id << " A=" << fmt(cp.action) << " res=" << fmt(cp.residual) << " idx=" << cp.relative_index
      << "]";
  }
  ok = ok && idx == std::vector<int>{0, 1} && m.index_stable;
  for (const auto& pc : m.counts) {
    d << "; K=" << pc.K << " " << pc.x << "->" << pc.y << " raw=" << pc.count.base.raw_count
      << " sigma=" << pc.count.base.sigma;
    ok = ok && pc.count.base.raw_count == 2 && pc.count.base.sigma == 0 && pc.count.stable;
    for (const auto& v : pc.count.variants) {
      d << " " << v.name << "=" << v.raw_count;
      ok = ok && v.raw_count == 2 && v.sigma == 0;
    }
  }
  ok = ok && m.counts.size() == 3 && m.counts_stable && m.complex.has_value();
  if (m.complex) {
    bool squared_zero = true;
    try {
      verify_boundary_squared(*m.complex);
    } catch (const ComplexError&) {
      squared_zero = false;
    }
    ok = ok && squared_zero;
    d << "; d^2=0 " << (squared_zero ? "yes" : "no");
  }
  const auto rank = [&](int k) { return m.homology.count(k) ? m.homology.at(k) : 0; };
  ok = ok && rank(0) == 1 && rank(1) == 1;
  d << "; homology (" << rank(0) << "," << rank(1) << ")";
  for (const auto& f : m.failures) d << "; failure: " << f;
  d << "; " << fmt(secs) << " s";
  ok = ok && secs < kMaxSeconds;

  const double c = eps, bound = -0.5 * c * c - 3 * c;
  bool lb = !m.points.empty();
  double lowest = 1e300;
  for (const auto& cp : m.points) {
    lb = lb && cp.action >= bound;
    lowest = std::min(lowest, cp.action);
  }
  return {{ok, d.str()}, {lb, "lowest action " + fmt(lowest) + " >= bound " + fmt(bound)}};
}

// 7. Homogenization
Outcome homogenization() {
  constexpr double kRatio = 0.2;
  constexpr double kMaxSeconds = 60;
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::MatrixXd A(2, 2), B(2, 2);
  A << 0, -1, 1, 0;
  B << -1, 0, 0, -1;
  const auto rows = homogenize_compare(SwitchedFieldSpec::linear(A, B), 1.0, {4, 64});
  const double ratio = rows.back().sup_error / rows.front().sup_error;
  const double secs = seconds_since(t0);
  return {ratio < kRatio && secs < kMaxSeconds,
          "sup error n=4 " + fmt(rows.front().sup_error) + ", n=64 " + fmt(rows.back().sup_error) + ", ratio " +
              fmt(ratio)};
}

// 8. Continuation
Outcome continuation() {
  auto cfg = load_config(std::string(COTMORSE_SOURCE_DIR) + "/configs/pendulum_continuation.json");
  cfg.k_sweep = {8};
  const auto H0 = pendulum_hamiltonian(0.05);
  std::ostringstream d;
  const auto same = run_continuation(cfg, H0, H0.plus_constant(0.3), std::nullopt);
  bool identity = same.failures.empty() && same.psi.has_value();
  if (same.psi)
    for (const auto& [k, m] : same.psi->maps) identity = identity && m == BitMatrix::identity(m.rows());
  d << "H0+0.3: Psi identity " << (identity ? "yes" : "no");
  const auto cont = run_continuation(cfg, H0, pendulum_hamiltonian(0.08), std::nullopt);
  d << "; eps 0.05->0.08 (shift " << fmt(cont.shift) << "): chain map " << cont.chain_map << ", unitriangular "
    << cont.unitriangular << ", isomorphism " << cont.isomorphism;
  for (const auto& f : same.failures) d << "; failure: " << f;
  for (const auto& f : cont.failures) d << "; failure: " << f;
  return {identity && cont.failures.empty() && cont.chain_map && cont.unitriangular && cont.isomorphism, d.str()};
}

// 9. Relative dimension algebra
Outcome relative_dimension_algebra() {
  constexpr int kAmbient = 40;
  constexpr int kTriples = 100;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> N01;
  std::uniform_int_distribution<int> dim(0, kAmbient);
  const Eigen::VectorXd gram = Eigen::VectorXd::LinSpaced(kAmbient, 1.0, 4.0);
  int failures = 0;
  for (int trial = 0; trial < kTriples; ++trial) {
    Eigen::MatrixXd frame(kAmbient, kAmbient);
    for (Eigen::Index i = 0; i < frame.size(); ++i) frame.data()[i] = N01(rng);
    std::array<int, 3> d{dim(rng), dim(rng), dim(rng)};
    std::sort(d.begin(), d.end());
    if (trial % 2) std::swap(d[0], d[2]);
    const auto U = SubspaceBasis::from_span(frame.leftCols(d[0]), gram);
    const auto V = SubspaceBasis::from_span(frame.leftCols(d[1]), gram);
    const auto W = SubspaceBasis::from_span(frame.leftCols(d[2]), gram);
    const int uv = relative_dimension(U, V), vw = relative_dimension(V, W), uw = relative_dimension(U, W);
    if (uv != -relative_dimension(V, U) || uw != uv + vw) ++failures;
  }
  return {failures == 0, std::to_string(kTriples - failures) + "/" + std::to_string(kTriples) +
                             " triples antisymmetric and additive"};
}

// 10. Flow hygiene
Outcome flow_hygiene() {
  constexpr double kMonotoneTol = 1e-10;
  std::ostringstream d;
  bool ok = true;
  // pendulum clouds in winding 0 and 1
  double worst = 0.0;
  bool winding_ok = true;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> N01;
  for (int m : {0, 1}) {
    const ActionFunctional A(pendulum_hamiltonian(0.05), 8, 0.6, WindingVector::Constant(1, m));
    const GradientField F(A);
    FlowOptions opt;
    opt.t_end = 10.0;
    opt.monotone_tol = kMonotoneTol;
    for (int i = 0; i < 8; ++i) {
      Eigen::VectorXd z(A.size());
      for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = N01(rng);
      z *= 0.1 / A.metric_norm(z);
      z(0) += 0.125 * i;
      const auto tr = integrate(F, z, opt);
      worst = std::max(worst, tr.max_action_increase);
      for (std::size_t k = 1; k < tr.actions.size(); ++k)
        worst = std::max(worst, tr.actions[k] - tr.actions[k - 1]);
      for (const auto& p : tr.points) winding_ok = winding_ok && A.point(p).winding == A.winding();
    }
  }
  ok = worst <= kMonotoneTol && winding_ok;
  d << "max per-step action increase " << fmt(worst) << ", winding preserved " << (winding_ok ? "yes" : "no");

  // constructed near-broken trajectory on T^2: (1/2,1/2) -> (0,1/2) -> (0,0)
  const double eps = 0.05;
  const HamiltonianSpec H(2, {}, TrigSeries(2, {TrigTerm{0, {1, 0}, eps, 0.0}, TrigTerm{0, {0, 1}, eps, 0.0}}));
  const ActionFunctional A(H, 4, 0.6, WindingVector::Zero(2));
  const GradientField F(A);
  auto cst = [&](double a, double b) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(A.size());
    z(0) = a;
    z(1) = b;
    return z;
  };
  const std::vector<RestPoint> rest{{"x00", cst(0, 0), A.value(cst(0, 0)), 0},
                                    {"x10", cst(0.5, 0), A.value(cst(0.5, 0)), 1},
                                    {"x01", cst(0, 0.5), A.value(cst(0, 0.5)), 1},
                                    {"x11", cst(0.5, 0.5), A.value(cst(0.5, 0.5)), 2}};
  FlowOptions opt;
  opt.t_end = 60.0;
  opt.critical_tol = 1e-9;
  Trajectory broken = integrate(F, cst(0.49, 0.5), opt);
  const Trajectory leg2 = integrate(F, cst(0.0, 0.49), opt);
  broken.points.insert(broken.points.end(), leg2.points.begin(), leg2.points.end());
  const auto chain = detect_breaking({broken}, rest, A.metric(), 2, 0.02);
  bool strict = chain.ids.size() == 3;
  for (std::size_t i = 1; i < chain.actions.size(); ++i) strict = strict && chain.actions[i] < chain.actions[i - 1];
  d << "; near-broken chain";
  for (const auto& id : chain.ids) d << " " << id;
  d << (strict ? " (strictly action decreasing)" : " (NOT strictly decreasing)");
  return {ok && strict, d.str()};
}

void report(int n, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

// With arguments, runs only the listed criteria, e.g. `acceptance 9 10`.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };
  int failed = 0, ran = 0;
  auto run = [&](int n, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    const Outcome o = guarded(fn);
    report(n, o);
    ++ran;
    failed += o.pass ? 0 : 1;
  };
  run(1, l_eigenstructure);
  run(2, commutator_signature);
  run(3, decay_fits);
  run(4, gradient_fd);
  if (wanted(5) || wanted(6)) {
    PendulumRun pend;
    try {
      pend = pendulum_end_to_end();
    } catch (const std::exception& e) {
      pend.end_to_end = {false, std::string("exception: ") + e.what()};
      pend.lower_bound = {false, "no critical points (criterion 5 aborted)"};
    }
    run(5, [&] { return pend.end_to_end; });
    run(6, [&] { return pend.lower_bound; });
  }
  run(7, homogenization);
  run(8, continuation);
  run(9, relative_dimension_algebra);
  run(10, flow_hygiene);
  std::cout << (failed ? "FAIL" : "PASS") << " acceptance: " << ran - failed << "/" << ran << " criteria" << std::endl;
  return failed ? 1 : 0;
}
