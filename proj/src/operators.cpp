#include "cotmorse/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cotmorse {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct BasisFn {
  int mode;
  bool is_sin;
};

BasisFn basis_fn(int b) { return {mode_of_block(b), b > 0 && b % 2 == 0}; }

int block_of(int mode, bool is_sin) { return mode == 0 ? 0 : (is_sin ? 2 * mode : 2 * mode - 1); }

// Adds c * (f_a * f_b) expanded in the real basis, dropping modes above K.
template <class Sink>
void expand_product(BasisFn a, BasisFn b, double c, int K, Sink&& sink) {
  const int sum = a.mode + b.mode;
  const int diff = a.mode - b.mode;
  const int adiff = std::abs(diff);
  auto emit = [&](int mode, bool is_sin, double v) {
    if (mode > K || v == 0.0) return;
    if (is_sin && mode == 0) return;
    sink(block_of(mode, is_sin), v);
  };
  const double h = 0.5 * c;
  if (!a.is_sin && !b.is_sin) {
    emit(sum, false, h);
    emit(adiff, false, h);
  } else if (a.is_sin && b.is_sin) {
    emit(adiff, false, h);
    emit(sum, false, -h);
  } else if (a.is_sin) {
    // sin a cos b = (sin(a+b) + sin(a-b)) / 2
    emit(sum, true, h);
    emit(adiff, true, diff >= 0 ? h : -h);
  } else {
    // cos a sin b = (sin(a+b) - sin(a-b)) / 2
    emit(sum, true, h);
    emit(adiff, true, diff >= 0 ? -h : h);
  }
}

// (2K+1)^2 Galerkin matrix of u -> a u for a scalar loop a.
Eigen::MatrixXd scalar_product_matrix(const FourierLoop& a, int K) {
  const int size = block_count(K);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(size, size);
  const int KA = a.truncation();
  for (int ba = 0; ba < block_count(KA); ++ba) {
    const double coef = a.coeffs()(ba);
    if (coef == 0.0) continue;
    for (int bu = 0; bu < size; ++bu)
      expand_product(basis_fn(ba), basis_fn(bu), coef, K, [&](int out, double v) { M(out, bu) += v; });
  }
  return M;
}

Eigen::MatrixXd interleave(const std::vector<Eigen::MatrixXd>& blocks, int n, int K) {
  // blocks[i*n+l] acts from component l to component i
  const int size = block_count(K);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * size, n * size);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l) {
      const auto& S = blocks[static_cast<std::size_t>(i * n + l)];
      for (int bo = 0; bo < size; ++bo)
        for (int bi = 0; bi < size; ++bi) M(bo * n + i, bi * n + l) = S(bo, bi);
    }
  return M;
}

Eigen::MatrixXd galerkin_multiplication(const MatrixLoop& A, int K) {
  const int n = A.dim();
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l) blocks.push_back(scalar_product_matrix(A.entry(i, l), K));
  return interleave(blocks, n, K);
}

void check_s(double s) {
  if (!(s > 0.5 && s < 1.0)) throw std::invalid_argument("Sobolev exponent s must lie in (1/2, 1)");
}

}  // namespace

Eigen::VectorXd SpaceSpec::gram() const {
  Eigen::VectorXd g(dim());
  const int block = n * block_count(K);
  for (std::size_t i = 0; i < exponents.size(); ++i)
    g.segment(static_cast<Eigen::Index>(i) * block, block) = gram_diagonal(n, K, exponents[i], kind);
  return g;
}

Eigen::MatrixXd LinearOperatorMatrix::weighted() const {
  const Eigen::VectorXd ws = source.gram().cwiseSqrt();
  const Eigen::VectorXd wt = target.gram().cwiseSqrt();
  return wt.asDiagonal() * matrix * ws.cwiseInverse().asDiagonal();
}

Eigen::VectorXd LinearOperatorMatrix::singular_values() const {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(weighted());
  return svd.singularValues();
}

double LinearOperatorMatrix::norm() const {
  const Eigen::VectorXd sv = singular_values();
  return sv.size() ? sv(0) : 0.0;
}

double power_iteration_norm(const LinearOperatorMatrix& op, int max_iter, double rel_tol) {
  const Eigen::MatrixXd M = op.weighted();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(M.cols()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = M.transpose() * (M * v);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= rel_tol * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(lambda);
}

double SubspaceBasis::orthonormality_error() const {
  const Eigen::MatrixXd G = columns.transpose() * gram.asDiagonal() * columns;
  return (G - Eigen::MatrixXd::Identity(dim(), dim())).cwiseAbs().maxCoeff();
}

SubspaceBasis SubspaceBasis::from_span(const Eigen::MatrixXd& spanning, const Eigen::VectorXd& gram) {
  const Eigen::VectorXd sq = gram.cwiseSqrt();
  if (spanning.cols() == 0) return {Eigen::MatrixXd(gram.size(), 0), gram};
  const Eigen::MatrixXd X = sq.asDiagonal() * spanning;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  const double cut = sv.size() ? 1e-10 * sv(0) : 0.0;
  while (rank < sv.size() && sv(rank) > cut) ++rank;
  return {sq.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank), gram};
}

LinearOperatorMatrix assemble_L(int n, int K, double s) {
  check_s(s);
  const int half = n * block_count(K);
  const Eigen::MatrixXd D = derivative_matrix(n, K);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(2 * half, 2 * half);
  // (q, p) -> (-Delta^{-s} p', Delta^{s-1} q')
  L.topRightCorner(half, half) = -delta_power_matrix(n, K, -s) * D;
  L.bottomLeftCorner(half, half) = delta_power_matrix(n, K, s - 1.0) * D;
  const SpaceSpec space = SpaceSpec::mixed(n, K, s);
  return {std::move(L), space, space, "phase:n" + std::to_string(n) + ":K" + std::to_string(K)};
}

SpectralProjectors spectral_projectors(const LinearOperatorMatrix& op, double boundary, double gap_tol) {
  if (op.source_dim() != op.target_dim()) throw std::invalid_argument("spectral_projectors: operator not square");
  const Eigen::VectorXd g = op.source.gram();
  const Eigen::VectorXd sq = g.cwiseSqrt();
  const Eigen::MatrixXd S = sq.asDiagonal() * op.matrix * sq.cwiseInverse().asDiagonal();
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::invalid_argument("spectral_projectors: operator is not self-adjoint in its inner product");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
  const Eigen::VectorXd& lam = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (std::abs(std::abs(lam(i)) - boundary) < gap_tol) {
      std::ostringstream msg;
      msg << "spectral_projectors: eigenvalue " << lam(i) << " within " << gap_tol << " of cluster boundary";
      throw std::runtime_error(msg.str());
    }
  auto cluster = [&](auto pred) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
      if (pred(lam(i))) idx.push_back(i);
    Eigen::MatrixXd V(S.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) V.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(idx[c]);
    SubspaceBasis basis{sq.cwiseInverse().asDiagonal() * V, g};
    LinearOperatorMatrix P{sq.cwiseInverse().asDiagonal() * V * V.transpose() * sq.asDiagonal(), op.source,
                           op.source, op.basis_tag};
    return std::make_pair(std::move(P), std::move(basis));
  };
  auto [Pm, Bm] = cluster([&](double l) { return l < -boundary; });
  auto [P0, B0] = cluster([&](double l) { return std::abs(l) < boundary; });
  auto [Pp, Bp] = cluster([&](double l) { return l > boundary; });
  return {std::move(Pm), std::move(P0), std::move(Pp), std::move(Bm), std::move(B0), std::move(Bp), lam};
}

LinearOperatorMatrix multiplication_operator(const MatrixLoop& A, double r_in, double r_out, int K) {
  return {galerkin_multiplication(A, K), SpaceSpec::loop(A.dim(), K, r_in), SpaceSpec::loop(A.dim(), K, r_out),
          "loop:n" + std::to_string(A.dim()) + ":K" + std::to_string(K)};
}

LinearOperatorMatrix commutator_operator(const MatrixLoop& A, double s, int K, CommutatorVariant variant,
                                         double r_in) {
  check_s(s);
  const int n = A.dim();
  const Eigen::MatrixXd M = galerkin_multiplication(A, K);
  const Eigen::MatrixXd Dl = delta_power_matrix(n, K, s - 1.0);
  const Eigen::MatrixXd D = derivative_matrix(n, K);
  Eigen::MatrixXd C;
  if (variant == CommutatorVariant::DerivativeInside) {
    const Eigen::MatrixXd S = Dl * D;
    C = M * S - S * M;
  } else {
    C = (M * Dl - Dl * M) * D;
  }
  return {std::move(C), SpaceSpec::loop(n, K, r_in), SpaceSpec::loop(n, K, 1.0 - s),
          "loop:n" + std::to_string(n) + ":K" + std::to_string(K)};
}

ShiftDiffeo::ShiftDiffeo(std::vector<TrigSeries> shift) : shift_(std::move(shift)) {
  for (const auto& c : shift_)
    if (c.dim() != dim()) throw std::invalid_argument("ShiftDiffeo: component dimension mismatch");
}

Eigen::VectorXd ShiftDiffeo::apply(double t, const Eigen::VectorXd& q) const {
  Eigen::VectorXd out = q;
  for (int i = 0; i < dim(); ++i) out(i) += shift_[static_cast<std::size_t>(i)].value(t, q);
  return out;
}

Eigen::MatrixXd ShiftDiffeo::jacobian(double t, const Eigen::VectorXd& q) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(dim(), dim());
  for (int i = 0; i < dim(); ++i) J.row(i) += shift_[static_cast<std::size_t>(i)].jet(t, q, 1).grad.transpose();
  return J;
}

Eigen::MatrixXd ShiftDiffeo::jacobian_derivative(double t, const Eigen::VectorXd& q, int j) const {
  Eigen::MatrixXd dJ(dim(), dim());
  for (int i = 0; i < dim(); ++i) dJ.row(i) = shift_[static_cast<std::size_t>(i)].jet(t, q, 2).hess.row(j);
  return dJ;
}

Eigen::VectorXd InverseDiffeo::apply(double t, const Eigen::VectorXd& q) const {
  Eigen::VectorXd x = q;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd r = base_->apply(t, x) - q;
    if (r.norm() < 1e-15 * (1.0 + q.norm())) return x;
    x -= base_->jacobian(t, x).partialPivLu().solve(r);
  }
  const Eigen::VectorXd r = base_->apply(t, x) - q;
  if (r.norm() > 1e-12 * (1.0 + q.norm())) throw std::runtime_error("InverseDiffeo: Newton did not converge");
  return x;
}

Eigen::MatrixXd InverseDiffeo::jacobian(double t, const Eigen::VectorXd& q) const {
  return base_->jacobian(t, apply(t, q)).inverse();
}

Eigen::MatrixXd InverseDiffeo::jacobian_derivative(double t, const Eigen::VectorXd& q, int j) const {
  const Eigen::VectorXd x = apply(t, q);
  const Eigen::MatrixXd Jinv = base_->jacobian(t, x).inverse();
  const Eigen::VectorXd dx = Jinv.col(j);
  Eigen::MatrixXd dJ = Eigen::MatrixXd::Zero(dim(), dim());
  for (int l = 0; l < dim(); ++l) dJ += dx(l) * base_->jacobian_derivative(t, x, l);
  return -Jinv * dJ * Jinv;
}

namespace {

int default_grid(int K, int grid_points) { return grid_points > 0 ? grid_points : 8 * K + 16; }

Eigen::VectorXd base_point(const PhasePoint& z, double t) {
  return z.winding.cast<double>() * t + z.q.evaluate(t);
}

struct ChartData {
  MatrixLoop dtau;      // A^{-1} in the transition formula
  MatrixLoop dtau_inv;  // A
  MatrixLoop dtau_inv_T;
  MatrixLoop B;
};

ChartData chart_data(const TorusDiffeo& tau, const PhasePoint& z, int K_mult, int N) {
  const int n = tau.dim();
  if (z.dim() != n) throw std::invalid_argument("chart transition: dimension mismatch");
  // det check on the grid
  for (int j = 0; j < N; ++j) {
    const double t = static_cast<double>(j) / N;
    const Eigen::VectorXd q = base_point(z, t);
    const double det = tau.jacobian(t, q).determinant();
    if (!(det > 0.0)) {
      std::ostringstream msg;
      msg << "chart transition: det dtau = " << det << " <= 0 at grid node t = " << t << ", q = ["
          << q.transpose() << "]; map is not an orientation-preserving diffeomorphism";
      throw std::runtime_error(msg.str());
    }
  }
  auto J = [&](double t) { return tau.jacobian(t, base_point(z, t)); };
  auto Bfun = [&](double t) {
    const Eigen::VectorXd q = base_point(z, t);
    const Eigen::VectorXd p = z.p.evaluate(t);
    const Eigen::MatrixXd JinvT = tau.jacobian(t, q).inverse().transpose();
    Eigen::MatrixXd Bm(n, n);
    for (int jdx = 0; jdx < n; ++jdx)
      Bm.col(jdx) = -JinvT * tau.jacobian_derivative(t, q, jdx).transpose() * JinvT * p;
    return Bm;
  };
  return {MatrixLoop::from_function(n, K_mult, N, J),
          MatrixLoop::from_function(n, K_mult, N, [&](double t) { return Eigen::MatrixXd(J(t).inverse()); }),
          MatrixLoop::from_function(n, K_mult, N,
                                    [&](double t) { return Eigen::MatrixXd(J(t).inverse().transpose()); }),
          MatrixLoop::from_function(n, K_mult, N, Bfun)};
}

}  // namespace

PhasePoint cotangent_lift(const TorusDiffeo& tau, const PhasePoint& z, int grid_points) {
  const int n = z.dim(), K = z.truncation();
  const int N = default_grid(K, grid_points);
  GridTransform grid(K, N);
  Eigen::MatrixXd qs(N, n), ps(N, n);
  const Eigen::VectorXd m = z.winding.cast<double>();
  for (int j = 0; j < N; ++j) {
    const double t = grid.time(j);
    const Eigen::VectorXd q = base_point(z, t);
    qs.row(j) = (tau.apply(t, q) - m * t).transpose();
    ps.row(j) = (tau.jacobian(t, q).inverse().transpose() * z.p.evaluate(t)).transpose();
  }
  return PhasePoint(grid.inverse(qs), grid.inverse(ps), z.winding, z.s);
}

LinearOperatorMatrix chart_transition_differential(const TorusDiffeo& tau, const PhasePoint& z, int K,
                                                   int grid_points) {
  const int n = tau.dim();
  const int N = default_grid(K, grid_points);
  const ChartData cd = chart_data(tau, z, std::min(2 * K, (N - 1) / 2), N);
  const int half = n * block_count(K);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * half, 2 * half);
  T.topLeftCorner(half, half) = galerkin_multiplication(cd.dtau, K);
  T.bottomLeftCorner(half, half) = galerkin_multiplication(cd.B, K);
  T.bottomRightCorner(half, half) = galerkin_multiplication(cd.dtau_inv_T, K);
  const SpaceSpec space = SpaceSpec::mixed(n, K, z.s);
  return {std::move(T), space, space, "phase:n" + std::to_string(n) + ":K" + std::to_string(K)};
}

LinearOperatorMatrix graph_difference_operator(const TorusDiffeo& tau, const PhasePoint& z, int K,
                                               int grid_points) {
  const int n = tau.dim();
  const int N = default_grid(K, grid_points);
  const ChartData cd = chart_data(tau, z, std::min(2 * K, (N - 1) / 2), N);
  // Intermediate products live at degree 2K so that clipping A h at degree K
  // does not leak into the top modes; the result is the leading K block.
  const int Ke = 2 * K;
  const Eigen::MatrixXd S = delta_power_matrix(n, Ke, z.s - 1.0) * derivative_matrix(n, Ke);
  const Eigen::MatrixXd MA = galerkin_multiplication(cd.dtau_inv, Ke);
  const Eigen::MatrixXd Ge = galerkin_multiplication(cd.B, Ke) * MA +
                             galerkin_multiplication(cd.dtau, Ke) * S * MA - S;
  const Eigen::Index m = static_cast<Eigen::Index>(n) * block_count(K);
  Eigen::MatrixXd G = Ge.topLeftCorner(m, m);
  return {std::move(G), SpaceSpec::loop(n, K, z.s), SpaceSpec::loop(n, K, 1.0 - z.s),
          "loop:n" + std::to_string(n) + ":K" + std::to_string(K)};
}

namespace {

int decided_rank(const Eigen::MatrixXd& cross, double rel_tol, double ambiguity_low) {
  if (cross.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const auto& sv = svd.singularValues();
  // Bases are orthonormal, so every singular value lies in [0, 1] and the
  // natural scale is 1 rather than the possibly tiny largest value.
  const double scale = 1.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) >= rel_tol * scale) {
      ++rank;
    } else if (sv(i) > ambiguity_low * scale) {
      std::ostringstream msg;
      msg << "relative_dimension: singular value " << sv(i) << " inside ambiguity band [" << ambiguity_low << ", "
          << rel_tol << "]; choose a different rank tolerance";
      throw std::runtime_error(msg.str());
    }
  }
  return rank;
}

}  // namespace

int relative_dimension(const SubspaceBasis& V, const SubspaceBasis& W, double rel_tol, double ambiguity_low) {
  if (V.ambient_dim() != W.ambient_dim() || (V.gram - W.gram).cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("relative_dimension: subspaces live in different spaces");
  const Eigen::MatrixXd cross = V.columns.transpose() * V.gram.asDiagonal() * W.columns;
  const int r1 = decided_rank(cross, rel_tol, ambiguity_low);
  const int r2 = decided_rank(cross.transpose(), rel_tol, ambiguity_low);
  // dim(V cap W^perp) = dim V - rank, dim(V^perp cap W) = dim W - rank
  return (V.dim() - r1) - (W.dim() - r2);
}

SpectrumReport spectrum_report(const LinearOperatorMatrix& op, double s, double r, int top) {
  const Eigen::VectorXd sv = op.singular_values();
  SpectrumReport rep;
  rep.K = op.source.K;
  rep.s = s;
  rep.r = r;
  const int count = std::min<int>(top, static_cast<int>(sv.size()));
  for (int i = 0; i < count; ++i) rep.top_singular_values.push_back(sv(i));
  // log-log least squares over indices 2..count with non-negligible values
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (int i = 1; i < count; ++i) {
    if (sv(i) <= 1e-14 * std::max(sv(0), 1e-300)) break;
    const double x = std::log(i + 1.0), y = std::log(sv(i));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m >= 2) rep.fitted_tail_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

void to_json(nlohmann::json& j, const SpectrumReport& rep) {
  j = nlohmann::json{{"K", rep.K},
                     {"s", rep.s},
                     {"r", rep.r},
                     {"top_singular_values", rep.top_singular_values},
                     {"fitted_tail_exponent", rep.fitted_tail_exponent}};
}

CompactnessSignature compactness_signature(const std::vector<LinearOperatorMatrix>& sweep, int tail_index,
                                           double head_tol, double tail_tol) {
  CompactnessSignature sig;
  Eigen::VectorXd last;
  for (const auto& op : sweep) {
    last = op.singular_values();
    sig.Ks.push_back(op.source.K);
    sig.sigma1.push_back(last.size() ? last(0) : 0.0);
  }
  if (sweep.empty()) return sig;
  const double ref = sig.sigma1.back();
  for (double v : sig.sigma1) sig.head_variation = std::max(sig.head_variation, std::abs(v / ref - 1.0));
  sig.tail_ratio = tail_index - 1 < last.size() && ref > 0 ? last(tail_index - 1) / ref : 0.0;
  sig.head_stable = sig.head_variation < head_tol;
  sig.tail_decays = sig.tail_ratio < tail_tol;
  return sig;
}

MatrixLoop rotation_loop(double alpha, int K_A) {
  return MatrixLoop::from_function(2, K_A, 8 * K_A + 1, [alpha](double t) {
    const double th = alpha * std::sin(kTwoPi * t);
    Eigen::MatrixXd R(2, 2);
    R << std::cos(th), std::sin(th), -std::sin(th), std::cos(th);
    return R;
  });
}

}  // namespace cotmorse
