#include "cotmorse/loopspace.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cotmorse {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_same_shape(const FourierLoop& u, const FourierLoop& v) {
  if (u.dim() != v.dim() || u.truncation() != v.truncation())
    throw std::invalid_argument("loop shape mismatch");
}
}  // namespace

double mode_weight(int k, double r, NormKind kind) {
  if (kind == NormKind::Inhomogeneous) return std::pow(1.0 + k, 2.0 * r);
  if (k == 0) return 1.0;
  return std::pow(kTwoPi * k, 2.0 * r);
}

FourierLoop::FourierLoop(int n, int K) : FourierLoop(n, K, Eigen::VectorXd::Zero(n * block_count(K))) {}

FourierLoop::FourierLoop(int n, int K, Eigen::VectorXd coeffs) : n_(n), K_(K), coeffs_(std::move(coeffs)) {
  if (n <= 0 || K < 0) throw std::invalid_argument("FourierLoop: need n > 0 and K >= 0");
  if (coeffs_.size() != n * block_count(K))
    throw std::invalid_argument("FourierLoop: coefficient length must be n(2K+1) = " +
                                std::to_string(n * block_count(K)));
}

FourierLoop FourierLoop::constant(const Eigen::VectorXd& value, int K) {
  FourierLoop u(static_cast<int>(value.size()), K);
  u.coeffs_.head(value.size()) = value;
  return u;
}

Eigen::VectorXd FourierLoop::evaluate(double t) const {
  Eigen::VectorXd out = mean();
  for (int k = 1; k <= K_; ++k) {
    const double c = std::cos(kTwoPi * k * t), s = std::sin(kTwoPi * k * t);
    out += c * cos_mode(k) + s * sin_mode(k);
  }
  return out;
}

FourierLoop FourierLoop::resized(int K) const {
  FourierLoop out(n_, K);
  const int common = n_ * block_count(std::min(K, K_));
  out.coeffs_.head(common) = coeffs_.head(common);
  return out;
}

FourierLoop FourierLoop::operator+(const FourierLoop& o) const {
  require_same_shape(*this, o);
  return FourierLoop(n_, K_, coeffs_ + o.coeffs_);
}

FourierLoop FourierLoop::operator-(const FourierLoop& o) const {
  require_same_shape(*this, o);
  return FourierLoop(n_, K_, coeffs_ - o.coeffs_);
}

FourierLoop FourierLoop::operator*(double c) const { return FourierLoop(n_, K_, coeffs_ * c); }

Eigen::VectorXd gram_diagonal(int n, int K, double r, NormKind kind) {
  Eigen::VectorXd g(n * block_count(K));
  for (int b = 0; b < block_count(K); ++b) {
    const int k = mode_of_block(b);
    g.segment(b * n, n).setConstant(basis_mass(k) * mode_weight(k, r, kind));
  }
  return g;
}

double sobolev_inner(const FourierLoop& u, const FourierLoop& v, double r, NormKind kind) {
  require_same_shape(u, v);
  const Eigen::VectorXd g = gram_diagonal(u.dim(), u.truncation(), r, kind);
  return (g.array() * u.coeffs().array() * v.coeffs().array()).sum();
}

double sobolev_norm(const FourierLoop& u, double r, NormKind kind) {
  return std::sqrt(std::max(0.0, sobolev_inner(u, u, r, kind)));
}

Eigen::MatrixXd delta_power_matrix(int n, int K, double sigma) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n * block_count(K));
  for (int b = 1; b < block_count(K); ++b)
    d.segment(b * n, n).setConstant(std::pow(kTwoPi * mode_of_block(b), 2.0 * sigma));
  return d.asDiagonal();
}

Eigen::MatrixXd derivative_matrix(int n, int K) {
  const int size = n * block_count(K);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(size, size);
  for (int k = 1; k <= K; ++k) {
    const int cb = (2 * k - 1) * n, sb = 2 * k * n;
    for (int i = 0; i < n; ++i) {
      // (a, b) -> 2 pi k (b, -a)
      D(cb + i, sb + i) = kTwoPi * k;
      D(sb + i, cb + i) = -kTwoPi * k;
    }
  }
  return D;
}

FourierLoop delta_power(const FourierLoop& u, double sigma) {
  FourierLoop out(u.dim(), u.truncation());
  for (int k = 1; k <= u.truncation(); ++k) {
    const double f = std::pow(kTwoPi * k, 2.0 * sigma);
    out.set_cos_mode(k, f * u.cos_mode(k));
    out.set_sin_mode(k, f * u.sin_mode(k));
  }
  return out;
}

FourierLoop derivative(const FourierLoop& u) {
  FourierLoop out(u.dim(), u.truncation());
  for (int k = 1; k <= u.truncation(); ++k) {
    out.set_cos_mode(k, kTwoPi * k * u.sin_mode(k));
    out.set_sin_mode(k, -kTwoPi * k * u.cos_mode(k));
  }
  return out;
}

GridTransform::GridTransform(int K, int N) : K_(K), N_(N), synth_(N, block_count(K)) {
  if (N < 2 * K + 1)
    throw std::invalid_argument("grid_transform: N = " + std::to_string(N) +
                                " is below 2K+1 = " + std::to_string(2 * K + 1));
  for (int j = 0; j < N; ++j) {
    const double t = time(j);
    synth_(j, 0) = 1.0;
    for (int k = 1; k <= K; ++k) {
      synth_(j, 2 * k - 1) = std::cos(kTwoPi * k * t);
      synth_(j, 2 * k) = std::sin(kTwoPi * k * t);
    }
  }
}

Eigen::MatrixXd GridTransform::forward(const FourierLoop& u) const {
  if (u.truncation() != K_) throw std::invalid_argument("grid_transform: truncation mismatch");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> C(u.coeffs().data(), block_count(K_), u.dim());
  return synth_ * C;
}

FourierLoop GridTransform::inverse(const Eigen::MatrixXd& samples) const {
  if (samples.rows() != N_) throw std::invalid_argument("grid_transform: sample count mismatch");
  const int n = static_cast<int>(samples.cols());
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat C = synth_.transpose() * samples / static_cast<double>(N_);
  // cos^2 and sin^2 average to 1/2 on the grid.
  C.bottomRows(2 * K_) *= 2.0;
  return FourierLoop(n, K_, Eigen::Map<const Eigen::VectorXd>(C.data(), C.size()));
}

PhasePoint::PhasePoint(FourierLoop q_, FourierLoop p_, WindingVector m, double s_)
    : q(std::move(q_)), p(std::move(p_)), winding(std::move(m)), s(s_) {
  if (q.dim() != p.dim() || q.truncation() != p.truncation())
    throw std::invalid_argument("PhasePoint: q and p must share n and K");
  if (winding.size() != q.dim()) throw std::invalid_argument("PhasePoint: winding length must be n");
}

Eigen::VectorXd PhasePoint::flat() const {
  Eigen::VectorXd z(q.size() + p.size());
  z << q.coeffs(), p.coeffs();
  return z;
}

PhasePoint PhasePoint::from_flat(const Eigen::VectorXd& z, int n, int K, const WindingVector& m,
                                 double s) {
  const int half = n * block_count(K);
  if (z.size() != 2 * half) throw std::invalid_argument("PhasePoint: flat length mismatch");
  return PhasePoint(FourierLoop(n, K, z.head(half)), FourierLoop(n, K, z.tail(half)), m, s);
}

Eigen::VectorXd mixed_gram_diagonal(int n, int K, double s, NormKind kind) {
  Eigen::VectorXd g(phase_size(n, K));
  g << gram_diagonal(n, K, s, kind), gram_diagonal(n, K, 1.0 - s, kind);
  return g;
}

MatrixLoop::MatrixLoop(int n, int K) : n_(n), K_(K), entries_(static_cast<std::size_t>(n * n), FourierLoop(1, K)) {}

Eigen::MatrixXd MatrixLoop::evaluate(double t) const {
  Eigen::MatrixXd A(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) A(i, j) = entry(i, j).evaluate(t)(0);
  return A;
}

MatrixLoop MatrixLoop::derivative() const {
  MatrixLoop out(n_, K_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) out.entry(i, j) = cotmorse::derivative(entry(i, j));
  return out;
}

double MatrixLoop::sobolev_norm(double r) const {
  double sum = 0.0;
  for (const auto& e : entries_) sum += sobolev_inner(e, e, r);
  return std::sqrt(sum);
}

bool MatrixLoop::is_constant(double tol) const {
  for (const auto& e : entries_)
    if (e.coeffs().tail(e.coeffs().size() - 1).lpNorm<Eigen::Infinity>() > tol) return false;
  return true;
}

MatrixLoop MatrixLoop::identity(int n, int K) {
  MatrixLoop I(n, K);
  for (int i = 0; i < n; ++i) I.entry(i, i).coeffs()(0) = 1.0;
  return I;
}

MatrixLoop MatrixLoop::from_function(int n, int K, int N,
                                     const std::function<Eigen::MatrixXd(double)>& f) {
  GridTransform grid(K, N);
  std::vector<Eigen::MatrixXd> samples(static_cast<std::size_t>(n * n), Eigen::MatrixXd(N, 1));
  for (int j = 0; j < N; ++j) {
    const Eigen::MatrixXd A = f(grid.time(j));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) samples[static_cast<std::size_t>(a * n + b)](j, 0) = A(a, b);
  }
  MatrixLoop out(n, K);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out.entry(a, b) = grid.inverse(samples[static_cast<std::size_t>(a * n + b)]);
  return out;
}

void to_json(nlohmann::json& j, const FourierLoop& u) {
  j = nlohmann::json{{"n", u.dim()},
                     {"K", u.truncation()},
                     {"coeffs", std::vector<double>(u.coeffs().data(), u.coeffs().data() + u.coeffs().size())}};
}

FourierLoop loop_from_json(const nlohmann::json& j) {
  const auto c = j.at("coeffs").get<std::vector<double>>();
  return FourierLoop(j.at("n").get<int>(), j.at("K").get<int>(),
                     Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
}

void to_json(nlohmann::json& j, const PhasePoint& z) {
  std::vector<int> m(z.winding.data(), z.winding.data() + z.winding.size());
  const Eigen::VectorXd f = z.flat();
  j = nlohmann::json{{"n", z.dim()},
                     {"K", z.truncation()},
                     {"winding", m},
                     {"s", z.s},
                     {"coeffs", std::vector<double>(f.data(), f.data() + f.size())}};
}

PhasePoint phase_point_from_json(const nlohmann::json& j) {
  const int n = j.at("n").get<int>(), K = j.at("K").get<int>();
  const auto m = j.at("winding").get<std::vector<int>>();
  const auto c = j.at("coeffs").get<std::vector<double>>();
  WindingVector w = Eigen::Map<const Eigen::VectorXi>(m.data(), static_cast<Eigen::Index>(m.size()));
  return PhasePoint::from_flat(Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())),
                               n, K, w, j.at("s").get<double>());
}

}  // namespace cotmorse
