#include "cotmorse/action.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cotmorse {

namespace {
constexpr double kPi = std::numbers::pi;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<TrigSeries> empty_theta(int n) { return std::vector<TrigSeries>(static_cast<std::size_t>(n), TrigSeries(n)); }
}  // namespace

HamiltonianSpec::HamiltonianSpec(int n_, std::vector<TrigSeries> theta_, TrigSeries U_, std::string note_)
    : n(n_), theta(std::move(theta_)), U(std::move(U_)), note(std::move(note_)) {
  if (theta.empty()) theta = empty_theta(n);
  if (static_cast<int>(theta.size()) != n) throw std::invalid_argument("HamiltonianSpec: theta needs n components");
  if (U.dim() != n) throw std::invalid_argument("HamiltonianSpec: U dimension mismatch");
  for (const auto& c : theta)
    if (c.dim() != n) throw std::invalid_argument("HamiltonianSpec: theta component dimension mismatch");
}

bool HamiltonianSpec::autonomous() const {
  if (U.time_dependent()) return false;
  return std::none_of(theta.begin(), theta.end(), [](const TrigSeries& c) { return c.time_dependent(); });
}

bool HamiltonianSpec::has_magnetic_term() const {
  return std::any_of(theta.begin(), theta.end(), [](const TrigSeries& c) { return !c.empty(); });
}

double HamiltonianSpec::value(double t, const Eigen::VectorXd& q, const Eigen::VectorXd& p) const {
  Eigen::VectorXd th(n);
  for (int i = 0; i < n; ++i) th(i) = theta[static_cast<std::size_t>(i)].value(t, q);
  return 0.5 * (p - th).squaredNorm() + U.value(t, q);
}

HamiltonianSpec HamiltonianSpec::plus_constant(double c) const {
  HamiltonianSpec out = *this;
  out.U = U.plus_constant(c);
  return out;
}

HamiltonianSpec pendulum_hamiltonian(double eps) {
  return HamiltonianSpec(1, {}, TrigSeries(1, {TrigTerm{0, {1}, eps, 0.0}}), "pendulum");
}

HamiltonianSpec free_hamiltonian(int n) { return HamiltonianSpec(n, {}, TrigSeries(n), "free"); }

void to_json(nlohmann::json& j, const HamiltonianSpec& H) {
  nlohmann::json theta = nlohmann::json::array();
  for (const auto& c : H.theta) theta.push_back(c.terms());
  j = nlohmann::json{{"n", H.n}, {"U", H.U.terms()}, {"theta", theta}, {"note", H.note}};
}

HamiltonianSpec hamiltonian_from_json(const nlohmann::json& j) {
  const int n = j.at("n").get<int>();
  TrigSeries U(n, j.value("U", std::vector<TrigTerm>{}));
  std::vector<TrigSeries> theta;
  if (j.contains("theta") && !j.at("theta").empty())
    for (const auto& comp : j.at("theta")) theta.emplace_back(n, comp.get<std::vector<TrigTerm>>());
  return HamiltonianSpec(n, std::move(theta), std::move(U), j.value("note", std::string{}));
}

ActionFunctional::ActionFunctional(HamiltonianSpec H, int K, double s, WindingVector winding, int quadrature_points)
    : H_(std::move(H)),
      K_(K),
      s_(s),
      m_(std::move(winding)),
      half_(H_.n * block_count(K)),
      grid_(K, quadrature_points > 0 ? quadrature_points : std::max(8 * K, 32)),
      W_(mixed_gram_diagonal(H_.n, K, s)),
      B_(Eigen::MatrixXd::Zero(2 * half_, 2 * half_)) {
  if (m_.size() != H_.n) throw std::invalid_argument("ActionFunctional: winding length must be n");
  if (grid_.points() < 4 * K + 1) throw std::invalid_argument("ActionFunctional: quadrature needs N >= 4K+1");
  const int n = H_.n;
  for (int k = 1; k <= K; ++k)
    for (int i = 0; i < n; ++i) {
      const int qa = (2 * k - 1) * n + i, qb = 2 * k * n + i;
      const int pc = half_ + qa, pd = half_ + qb;
      // int p.q' = sum_k pi k (c_k b_k - d_k a_k)
      B_(pc, qb) = B_(qb, pc) = kPi * k;
      B_(pd, qa) = B_(qa, pd) = -kPi * k;
    }
}

Eigen::MatrixXd ActionFunctional::free_form() const {
  Eigen::MatrixXd F = B_;
  const Eigen::VectorXd mass = gram_diagonal(H_.n, K_, 0.0, NormKind::Inhomogeneous);
  F.bottomRightCorner(half_, half_).diagonal() -= mass;
  return F;
}

ActionFunctional::GridState ActionFunctional::samples(const Eigen::VectorXd& z) const {
  if (z.size() != 2 * half_) throw std::invalid_argument("ActionFunctional: state size mismatch");
  const int n = H_.n, nb = block_count(K_);
  Eigen::Map<const RowMat> Cq(z.data(), nb, n), Cp(z.data() + half_, nb, n);
  GridState g{grid_.synthesis() * Cq, grid_.synthesis() * Cp};
  const Eigen::RowVectorXd m = m_.cast<double>().transpose();
  for (int j = 0; j < grid_.points(); ++j) g.Q.row(j) += grid_.time(j) * m;
  return g;
}

double ActionFunctional::value(const Eigen::VectorXd& z) const {
  const auto g = samples(z);
  const int n = H_.n, N = grid_.points();
  double integral = 0.0;
  for (int j = 0; j < N; ++j) integral += H_.value(grid_.time(j), g.Q.row(j).transpose(), g.P.row(j).transpose());
  const double liouville = 0.5 * z.dot(B_ * z) + m_.cast<double>().dot(z.segment(half_, n));
  return liouville - integral / N;
}

Eigen::VectorXd ActionFunctional::differential(const Eigen::VectorXd& z) const {
  const auto g = samples(z);
  const int n = H_.n, N = grid_.points(), nb = block_count(K_);
  RowMat Gq(N, n), Gp(N, n);
  for (int j = 0; j < N; ++j) {
    const double t = grid_.time(j);
    const Eigen::VectorXd q = g.Q.row(j).transpose();
    Eigen::VectorXd th(n);
    Eigen::MatrixXd Dth(n, n);
    for (int i = 0; i < n; ++i) {
      const auto jet = H_.theta[static_cast<std::size_t>(i)].jet(t, q, 1);
      th(i) = jet.value;
      Dth.row(i) = jet.grad.transpose();
    }
    const Eigen::VectorXd v = g.P.row(j).transpose() - th;
    Gq.row(j) = (Dth.transpose() * v - H_.U.jet(t, q, 1).grad).transpose();
    Gp.row(j) = -v.transpose();
  }
  Eigen::VectorXd d = B_ * z;
  d.segment(half_, n) += m_.cast<double>();
  RowMat Cq = grid_.synthesis().transpose() * Gq / static_cast<double>(N);
  RowMat Cp = grid_.synthesis().transpose() * Gp / static_cast<double>(N);
  d.head(half_) += Eigen::Map<const Eigen::VectorXd>(Cq.data(), nb * n);
  d.tail(half_) += Eigen::Map<const Eigen::VectorXd>(Cp.data(), nb * n);
  return d;
}

double ActionFunctional::gradient_norm(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd d = differential(z);
  return std::sqrt(d.dot(d.cwiseQuotient(W_)));
}

Eigen::MatrixXd ActionFunctional::hessian_form(const Eigen::VectorXd& z) const {
  const auto g = samples(z);
  const int n = H_.n, N = grid_.points(), nb = block_count(K_);
  // weights[(i*n + l)] for qq and qp blocks; pp is -delta_il
  std::vector<Eigen::VectorXd> wqq(static_cast<std::size_t>(n * n), Eigen::VectorXd::Zero(N));
  std::vector<Eigen::VectorXd> wpq(static_cast<std::size_t>(n * n), Eigen::VectorXd::Zero(N));
  const bool magnetic = H_.has_magnetic_term();
  for (int j = 0; j < N; ++j) {
    const double t = grid_.time(j);
    const Eigen::VectorXd q = g.Q.row(j).transpose();
    Eigen::MatrixXd Mqq = -H_.U.jet(t, q, 2).hess;
    Eigen::MatrixXd Dth = Eigen::MatrixXd::Zero(n, n);
    if (magnetic) {
      Eigen::VectorXd th(n);
      std::vector<Eigen::MatrixXd> hth;
      for (int r = 0; r < n; ++r) {
        auto jet = H_.theta[static_cast<std::size_t>(r)].jet(t, q, 2);
        th(r) = jet.value;
        Dth.row(r) = jet.grad.transpose();
        hth.push_back(std::move(jet.hess));
      }
      const Eigen::VectorXd v = g.P.row(j).transpose() - th;
      Mqq -= Dth.transpose() * Dth;
      for (int r = 0; r < n; ++r) Mqq += v(r) * hth[static_cast<std::size_t>(r)];
    }
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l) {
        wqq[static_cast<std::size_t>(i * n + l)](j) = Mqq(i, l);
        wpq[static_cast<std::size_t>(i * n + l)](j) = Dth(i, l);
      }
  }
  const Eigen::MatrixXd& S = grid_.synthesis();
  Eigen::MatrixXd F = B_;
  auto scatter = [&](const Eigen::MatrixXd& blk, int row0, int col0, int i, int l) {
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) F(row0 + a * n + i, col0 + b * n + l) += blk(a, b);
  };
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l) {
      const auto& qq = wqq[static_cast<std::size_t>(i * n + l)];
      if (qq.cwiseAbs().maxCoeff() > 0.0)
        scatter(S.transpose() * (qq.asDiagonal() * S) / N, 0, 0, i, l);
      const auto& pq = wpq[static_cast<std::size_t>(i * n + l)];
      if (pq.cwiseAbs().maxCoeff() > 0.0) {
        const Eigen::MatrixXd blk = S.transpose() * (pq.asDiagonal() * S) / N;
        scatter(blk, half_, 0, i, l);               // p_i row, q_l column
        scatter(blk.transpose(), 0, half_, l, i);  // symmetric partner
      }
    }
  // p-p block: -int w_p . v_p
  F.bottomRightCorner(half_, half_).diagonal() -= gram_diagonal(n, K_, 0.0, NormKind::Inhomogeneous);
  return F;
}

Eigen::VectorXd ActionFunctional::metric_hessian_spectrum(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd isq = W_.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd F = hessian_form(z);
  const Eigen::MatrixXd S = isq.asDiagonal() * (0.5 * (F + F.transpose())) * isq.asDiagonal();
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues();
}

Eigen::VectorXd ActionFunctional::flat(const PhasePoint& z) const {
  if (z.dim() != H_.n || z.truncation() != K_) throw std::invalid_argument("ActionFunctional: point shape mismatch");
  if (z.winding != m_) throw std::invalid_argument("ActionFunctional: winding mismatch");
  return z.flat();
}

double eval_action(const HamiltonianSpec& H, const PhasePoint& z) {
  const ActionFunctional A(H, z.truncation(), z.s, z.winding);
  return A.value(z.flat());
}

PhasePoint gradient_mixed(const HamiltonianSpec& H, const PhasePoint& z) {
  const ActionFunctional A(H, z.truncation(), z.s, z.winding);
  return PhasePoint::from_flat(A.gradient(z.flat()), z.dim(), z.truncation(), z.winding, z.s);
}

LinearOperatorMatrix hessian(const HamiltonianSpec& H, const PhasePoint& z) {
  const ActionFunctional A(H, z.truncation(), z.s, z.winding);
  const SpaceSpec space = SpaceSpec::mixed(z.dim(), z.truncation(), z.s);
  return {A.metric_hessian(z.flat()), space, space, "phase:n" + std::to_string(z.dim()) + ":K" + std::to_string(z.truncation())};
}

bool FinderResult::any_degenerate() const {
  return std::any_of(points.begin(), points.end(), [](const CriticalPoint& c) { return c.degenerate; });
}

NewtonOutcome newton_critical_point(const ActionFunctional& A, Eigen::VectorXd z, const FinderOptions& opt) {
  NewtonOutcome out;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    out.iterations = it;
    if (!z.allFinite() || z.cwiseAbs().maxCoeff() > opt.divergence_bound) {
      out.failure = "diverged";
      return out;
    }
    const Eigen::VectorXd d = A.differential(z);
    const double res = std::sqrt(d.dot(d.cwiseQuotient(A.metric())));
    if (res < opt.newton_tol) {
      out.z = std::move(z);
      return out;
    }
    if (it == opt.max_iterations) break;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A.hessian_form(z));
    if (!(lu.rcond() > 1e-14)) {
      out.failure = "singular Hessian at iterate";
      return out;
    }
    z -= lu.solve(d);
  }
  out.failure = "max iterations";
  return out;
}

int relative_index(const ActionFunctional& A, const Eigen::VectorXd& z) {
  const Eigen::VectorXd ev = A.metric_hessian_spectrum(z);
  const int neg = static_cast<int>((ev.array() < 0.0).count());
  return neg - reference_negative_dimension(A.dim(), A.truncation());
}

CriticalPoint make_critical_point(const ActionFunctional& A, const Eigen::VectorXd& z, const FinderOptions& opt) {
  const Eigen::VectorXd ev = A.metric_hessian_spectrum(z);
  CriticalPoint cp{std::string{}, A.point(z)};
  cp.action = A.value(z);
  cp.residual = A.gradient_norm(z);
  cp.hyperbolicity_gap = ev.cwiseAbs().minCoeff();
  cp.negative_count = static_cast<int>((ev.array() < 0.0).count());
  cp.relative_index = cp.negative_count - reference_negative_dimension(A.dim(), A.truncation());
  cp.K_used = A.truncation();
  cp.degenerate = !(cp.hyperbolicity_gap > opt.hyperbolicity_tol);
  return cp;
}

Eigen::VectorXd canonical_lift(int n, const Eigen::VectorXd& z) {
  Eigen::VectorXd out = z;
  constexpr double delta = 1e-9;
  for (int i = 0; i < n; ++i) out(i) -= std::floor(out(i) + delta);
  return out;
}

double torus_distance(const ActionFunctional& A, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd d = a - b;
  for (int i = 0; i < A.dim(); ++i) d(i) -= std::round(d(i));
  return A.metric_norm(d);
}

FinderResult find_critical_points(const HamiltonianSpec& H, const SeedGrid& seeds, int K, double s,
                                  const FinderOptions& opt) {
  const int n = H.n;
  std::vector<WindingVector> windings = seeds.windings;
  if (windings.empty()) windings.push_back(WindingVector::Zero(n));
  FinderResult result;

  struct Found {
    WindingVector m;
    Eigen::VectorXd z;
  };
  std::vector<Found> found;
  for (const auto& m : windings) {
    const ActionFunctional A(H, K, s, m, opt.quadrature_points);
    long total = 1;
    for (int i = 0; i < n; ++i) total *= seeds.q_points;
    for (double poff : seeds.p_offsets)
      for (long idx = 0; idx < total; ++idx) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(A.size());
        long rem = idx;
        std::ostringstream label;
        label << "winding=[" << m.transpose() << "] q0=[";
        for (int i = 0; i < n; ++i) {
          z(i) = static_cast<double>(rem % seeds.q_points) / seeds.q_points;
          rem /= seeds.q_points;
          label << (i ? " " : "") << z(i);
          z(n * block_count(K) + i) = poff;
        }
        label << "] p0=" << poff;
        auto outcome = newton_critical_point(A, z, opt);
        if (!outcome.z) {
          result.failed.push_back({label.str(), outcome.failure});
          continue;
        }
        found.push_back({m, canonical_lift(n, *outcome.z)});
      }
  }

  // Deterministic order then dedup.
  std::vector<std::pair<CriticalPoint, Eigen::VectorXd>> cands;
  for (const auto& f : found) {
    const ActionFunctional A(H, K, s, f.m, opt.quadrature_points);
    cands.emplace_back(make_critical_point(A, f.z, opt), f.z);
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.first.action != b.first.action) return a.first.action < b.first.action;
    const auto& x = a.second;
    const auto& y = b.second;
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  });
  std::vector<Eigen::VectorXd> kept;
  for (auto& [cp, z] : cands) {
    const ActionFunctional A(H, K, s, cp.z.winding, opt.quadrature_points);
    bool dup = false;
    for (std::size_t i = 0; i < kept.size() && !dup; ++i)
      dup = result.points[i].z.winding == cp.z.winding && torus_distance(A, kept[i], z) < opt.dedup_tol;
    if (dup) continue;
    kept.push_back(z);
    result.points.push_back(std::move(cp));
  }
  for (std::size_t i = 0; i < result.points.size(); ++i) result.points[i].id = "x" + std::to_string(i);
  return result;
}

IndexReport relative_index(const HamiltonianSpec& H, const CriticalPoint& cp, const std::vector<int>& Ks,
                           const FinderOptions& opt) {
  IndexReport rep;
  std::vector<int> sorted = Ks;
  std::sort(sorted.begin(), sorted.end());
  for (int K : sorted) {
    const ActionFunctional A(H, K, cp.z.s, cp.z.winding, opt.quadrature_points);
    const PhasePoint zK(cp.z.q.resized(K), cp.z.p.resized(K), cp.z.winding, cp.z.s);
    auto outcome = newton_critical_point(A, zK.flat(), opt);
    if (!outcome.z)
      throw std::runtime_error("relative_index: point " + cp.id + " lost at K=" + std::to_string(K) + " (" +
                               outcome.failure + ")");
    rep.Ks.push_back(K);
    rep.indices.push_back(relative_index(A, *outcome.z));
  }
  if (rep.indices.empty()) throw std::invalid_argument("relative_index: empty K sweep");
  rep.index = rep.indices.back();
  rep.stable = rep.indices.size() < 2 || rep.indices[rep.indices.size() - 2] == rep.indices.back();
  if (!rep.stable) {
    std::ostringstream msg;
    msg << "relative_index: point " << cp.id << " has index " << rep.indices[rep.indices.size() - 2] << " at K="
        << rep.Ks[rep.Ks.size() - 2] << " but " << rep.indices.back() << " at K=" << rep.Ks.back()
        << "; increase K";
    throw std::runtime_error(msg.str());
  }
  return rep;
}

LowerBound action_lower_bound(const HamiltonianSpec& H) {
  const TrigSeries* Uptr = &H.U;
  const double cU = sup_norm(std::span<const TrigSeries>(Uptr, 1));
  const double cT = sup_norm(std::span<const TrigSeries>(H.theta));
  LowerBound lb;
  lb.c = std::max(cU, cT);
  lb.bound = -0.5 * lb.c * lb.c - 3.0 * lb.c;
  return lb;
}

void to_json(nlohmann::json& j, const CriticalPoint& cp) {
  j = nlohmann::json{{"id", cp.id},
                     {"z", cp.z},
                     {"action", cp.action},
                     {"residual", cp.residual},
                     {"hyperbolicity_gap", cp.hyperbolicity_gap},
                     {"negative_count", cp.negative_count},
                     {"relative_index", cp.relative_index},
                     {"K_used", cp.K_used},
                     {"degenerate", cp.degenerate}};
}

}  // namespace cotmorse
