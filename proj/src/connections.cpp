#include "cotmorse/connections.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace cotmorse {

const char* to_string(BvpFailure f) {
  switch (f) {
    case BvpFailure::None: return "none";
    case BvpFailure::Diverged: return "diverged";
    case BvpFailure::MaxIterations: return "max iterations";
    case BvpFailure::ConvergedToConstant: return "converged to endpoint constant";
    case BvpFailure::SingularJacobian: return "singular collocation Jacobian";
    case BvpFailure::BoundaryDefect: return "boundary defect above tolerance";
    case BvpFailure::ActionNotDecreasing: return "action not decreasing";
  }
  return "?";
}

std::vector<double> mesh_times(double T, int mesh) {
  std::vector<double> t(static_cast<std::size_t>(mesh + 1));
  for (int i = 0; i <= mesh; ++i) t[static_cast<std::size_t>(i)] = -T + 2.0 * T * i / mesh;
  t[static_cast<std::size_t>(mesh / 2)] = 0.0;
  return t;
}

RestLinearization linearize_at(const VectorField& field, const Eigen::VectorXd& z) {
  const Eigen::VectorXd sq = field.metric().cwiseSqrt();
  const Eigen::MatrixXd J = field.jacobian(z);
  const Eigen::MatrixXd S = sq.asDiagonal() * J * sq.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
  const Eigen::VectorXd& lam = eig.eigenvalues();
  std::vector<Eigen::Index> neg, pos;
  for (Eigen::Index i = 0; i < lam.size(); ++i) (lam(i) < 0 ? neg : pos).push_back(i);
  auto take = [&](const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd V(S.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) V.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(idx[c]);
    return Eigen::MatrixXd(sq.cwiseInverse().asDiagonal() * V);
  };
  return {take(neg), take(pos), lam};
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Collocation {
  const ConnectionProblem& prob;
  int D;
  int M;
  double h;
  std::vector<double> times;
  Eigen::MatrixXd BL{};  // rows: stable basis of x, transposed, times W
  Eigen::MatrixXd BR{};  // rows: unstable basis of y, transposed, times W
  Eigen::VectorXd phase_ref{};
  Eigen::VectorXd phase_dir{};  // W F(ref)
  bool phase = false;

  int rows() const {
    return M * D + static_cast<int>(BL.rows()) + static_cast<int>(BR.rows()) + (phase ? 1 : 0);
  }
  int cols() const { return (M + 1) * D; }

  Eigen::Map<const Eigen::VectorXd> node(const Eigen::VectorXd& u, int i) const {
    return Eigen::Map<const Eigen::VectorXd>(u.data() + static_cast<Eigen::Index>(i) * D, D);
  }

  // values[side][node]
  void field_values(const Eigen::VectorXd& u, std::vector<Eigen::VectorXd>& FL, std::vector<Eigen::VectorXd>& FR) const {
    FL.assign(static_cast<std::size_t>(M + 1), Eigen::VectorXd());
    FR.assign(static_cast<std::size_t>(M + 1), Eigen::VectorXd());
    for (int i = 0; i <= M; ++i) {
      const double t = times[static_cast<std::size_t>(i)];
      if (t <= 0) FL[static_cast<std::size_t>(i)] = prob.left->value(node(u, i));
      if (t >= 0) FR[static_cast<std::size_t>(i)] = prob.right->value(node(u, i));
    }
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& u) const {
    std::vector<Eigen::VectorXd> FL, FR;
    field_values(u, FL, FR);
    Eigen::VectorXd R(rows());
    for (int i = 0; i < M; ++i) {
      const bool left = times[static_cast<std::size_t>(i + 1)] <= 0;
      const auto& F = left ? FL : FR;
      R.segment(static_cast<Eigen::Index>(i) * D, D) =
          node(u, i + 1) - node(u, i) - 0.5 * h * (F[static_cast<std::size_t>(i)] + F[static_cast<std::size_t>(i + 1)]);
    }
    Eigen::Index r = static_cast<Eigen::Index>(M) * D;
    R.segment(r, BL.rows()) = BL * (node(u, 0) - prob.x.z);
    r += BL.rows();
    R.segment(r, BR.rows()) = BR * (node(u, M) - prob.y.z);
    r += BR.rows();
    if (phase) R(r) = phase_dir.dot(node(u, M / 2) - phase_ref);
    return R;
  }

  SpMat jacobian(const Eigen::VectorXd& u) const {
    std::vector<Eigen::MatrixXd> JL(static_cast<std::size_t>(M + 1)), JR(static_cast<std::size_t>(M + 1));
    for (int i = 0; i <= M; ++i) {
      const double t = times[static_cast<std::size_t>(i)];
      if (t <= 0) JL[static_cast<std::size_t>(i)] = prob.left->jacobian(node(u, i));
      if (t >= 0) JR[static_cast<std::size_t>(i)] = prob.right->jacobian(node(u, i));
    }
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(2 * M) * static_cast<std::size_t>(D * D) + static_cast<std::size_t>(D * D));
    auto put_block = [&](int row0, int col0, const Eigen::MatrixXd& B) {
      for (Eigen::Index c = 0; c < B.cols(); ++c)
        for (Eigen::Index r = 0; r < B.rows(); ++r)
          if (B(r, c) != 0.0) trip.emplace_back(row0 + static_cast<int>(r), col0 + static_cast<int>(c), B(r, c));
    };
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(D, D);
    for (int i = 0; i < M; ++i) {
      const bool left = times[static_cast<std::size_t>(i + 1)] <= 0;
      const auto& J = left ? JL : JR;
      put_block(i * D, i * D, -I - 0.5 * h * J[static_cast<std::size_t>(i)]);
      put_block(i * D, (i + 1) * D, I - 0.5 * h * J[static_cast<std::size_t>(i + 1)]);
    }
    int r = M * D;
    put_block(r, 0, BL);
    r += static_cast<int>(BL.rows());
    put_block(r, M * D, BR);
    r += static_cast<int>(BR.rows());
    if (phase) put_block(r, (M / 2) * D, phase_dir.transpose());
    SpMat J(rows(), cols());
    J.setFromTriplets(trip.begin(), trip.end());
    J.makeCompressed();
    return J;
  }
};

double condition_estimate(const SpMat& J, Eigen::SparseLU<SpMat>& lu) {
  const Eigen::Index n = J.cols();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
  double smax = 0.0;
  for (int it = 0; it < 30; ++it) {
    Eigen::VectorXd w = J.transpose() * (J * v);
    smax = std::sqrt(w.norm());
    v = w.normalized();
  }
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0).normalized();
  double inv = 0.0;
  for (int it = 0; it < 30; ++it) {
    Eigen::VectorXd y = lu.solve(x);
    Eigen::VectorXd w = lu.transpose().solve(y);
    if (!w.allFinite()) return std::numeric_limits<double>::infinity();
    inv = std::sqrt(w.norm());
    x = w.normalized();
  }
  return smax * inv;
}

double metric_dist(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& W) {
  const Eigen::VectorXd d = a - b;
  return std::sqrt(d.dot(W.cwiseProduct(d)));
}

}  // namespace

ConnectionResult solve_connection(const ConnectionProblem& prob, const std::vector<Eigen::VectorXd>& guess,
                                  const BvpOptions& opt) {
  if (!prob.left || !prob.right) throw std::invalid_argument("solve_connection: missing field");
  if (prob.mesh < 2 || prob.mesh % 2) throw std::invalid_argument("solve_connection: mesh must be even");
  if (static_cast<int>(guess.size()) != prob.mesh + 1)
    throw std::invalid_argument("solve_connection: guess must have mesh+1 nodes");
  const int D = prob.left->size();
  Collocation col{prob, D, prob.mesh, 2.0 * prob.T / prob.mesh, mesh_times(prob.T, prob.mesh)};
  const Eigen::VectorXd& W = prob.left->metric();
  const auto lx = linearize_at(*prob.left, prob.x.z);
  const auto ly = linearize_at(*prob.right, prob.y.z);
  col.BL = lx.stable.transpose() * W.asDiagonal();
  col.BR = ly.unstable.transpose() * prob.right->metric().asDiagonal();
  // the phase row is only needed when the time-shift family exists (index gap one)
  col.phase = prob.phase_condition && lx.unstable.cols() == ly.unstable.cols() + 1;
  if (col.phase) {
    col.phase_ref = guess[static_cast<std::size_t>(prob.mesh / 2)];
    const Eigen::VectorXd f = prob.left->value(col.phase_ref);
    const double nf = prob.left->metric_norm(f);
    if (!(nf > 0)) throw std::invalid_argument("solve_connection: phase anchor sits at a rest point");
    col.phase_dir = W.cwiseProduct(f) / nf;
  }
  if (col.rows() != col.cols()) {
    std::ostringstream msg;
    msg << "solve_connection: " << col.rows() << " equations for " << col.cols()
        << " unknowns; unstable dimensions " << lx.unstable.cols() << " and " << ly.unstable.cols()
        << " do not match the phase setting";
    throw std::invalid_argument(msg.str());
  }

  Eigen::VectorXd u(col.cols());
  for (int i = 0; i <= prob.mesh; ++i) u.segment(static_cast<Eigen::Index>(i) * D, D) = guess[static_cast<std::size_t>(i)];

  ConnectionResult res;
  Eigen::VectorXd R = col.residual(u);
  int it = 0;
  for (;; ++it) {
    if (!R.allFinite() || !u.allFinite() || u.cwiseAbs().maxCoeff() > opt.divergence_bound) {
      res.failure = BvpFailure::Diverged;
      res.detail = "iterate left the bounded region at iteration " + std::to_string(it);
      return res;
    }
    if (R.lpNorm<Eigen::Infinity>() < opt.residual_tol) break;
    if (it >= opt.max_iterations) {
      res.failure = BvpFailure::MaxIterations;
      std::ostringstream msg;
      msg << "residual " << R.lpNorm<Eigen::Infinity>() << " after " << it << " iterations";
      res.detail = msg.str();
      return res;
    }
    const SpMat J = col.jacobian(u);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) {
      res.failure = BvpFailure::SingularJacobian;
      res.detail = "factorisation failed: " + lu.lastErrorMessage();
      res.condition_estimate = std::numeric_limits<double>::infinity();
      return res;
    }
    const Eigen::VectorXd delta = lu.solve(-R);
    const double r0 = R.norm();
    double alpha = 1.0;
    Eigen::VectorXd u_new, R_new;
    for (int ls = 0; ls < 10; ++ls, alpha *= 0.5) {
      u_new = u + alpha * delta;
      R_new = col.residual(u_new);
      if (R_new.allFinite() && R_new.norm() < (1.0 - 1e-4 * alpha) * r0) break;
    }
    u = std::move(u_new);
    R = std::move(R_new);
  }

  ConnectionSolution sol;
  sol.times = col.times;
  sol.iterations = it;
  sol.residual = R.lpNorm<Eigen::Infinity>();
  double max_dev = 0.0;
  for (int i = 0; i <= prob.mesh; ++i) {
    const Eigen::VectorXd z = u.segment(static_cast<Eigen::Index>(i) * D, D);
    max_dev = std::max(max_dev, metric_dist(z, prob.x.z, W));
    const double t = col.times[static_cast<std::size_t>(i)];
    sol.action_profile.push_back(t < 0 ? prob.left->lyapunov(z) : prob.right->lyapunov(z));
    sol.path.push_back(z);
  }
  sol.defect_left = metric_dist(sol.path.front(), prob.x.z, W);
  sol.defect_right = metric_dist(sol.path.back(), prob.y.z, W);
  sol.constant = max_dev < opt.constant_tol;

  {
    const SpMat J = col.jacobian(u);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(J);
    sol.condition_estimate =
        lu.info() == Eigen::Success ? condition_estimate(J, lu) : std::numeric_limits<double>::infinity();
  }
  res.condition_estimate = sol.condition_estimate;

  if (sol.constant && !opt.allow_constant) {
    res.failure = BvpFailure::ConvergedToConstant;
    res.detail = "path stays within " + std::to_string(max_dev) + " of the start point";
    return res;
  }
  if (!(sol.condition_estimate < opt.condition_limit)) {
    res.failure = BvpFailure::SingularJacobian;
    std::ostringstream msg;
    msg << "condition estimate " << sol.condition_estimate << " exceeds " << opt.condition_limit
        << " (non-transversal intersection suspected)";
    res.detail = msg.str();
    return res;
  }
  if (sol.defect_left > opt.defect_tol || sol.defect_right > opt.defect_tol) {
    res.failure = BvpFailure::BoundaryDefect;
    std::ostringstream msg;
    msg << "endpoint defects " << sol.defect_left << ", " << sol.defect_right << " exceed " << opt.defect_tol;
    res.detail = msg.str();
    return res;
  }
  if (!sol.constant) {
    for (int i = 0; i < prob.mesh; ++i) {
      const double t1 = col.times[static_cast<std::size_t>(i + 1)];
      if (t1 == 0.0 && prob.left != prob.right) continue;  // the switch may raise the action
      const double inc = sol.action_profile[static_cast<std::size_t>(i + 1)] - sol.action_profile[static_cast<std::size_t>(i)];
      if (inc > opt.monotone_tol) {
        res.failure = BvpFailure::ActionNotDecreasing;
        std::ostringstream msg;
        msg << "action increases by " << inc << " between nodes " << i << " and " << i + 1;
        res.detail = msg.str();
        return res;
      }
    }
  }
  res.solution = std::move(sol);
  return res;
}

Eigen::MatrixXd relative_unstable_directions(const GradientField& field, const Eigen::VectorXd& x, int count) {
  const ActionFunctional& A = field.action();
  const auto lin = linearize_at(field, x);
  const Eigen::MatrixXd& U = lin.unstable;
  if (U.cols() == 0) return U;
  const auto proj = spectral_projectors(assemble_L(A.dim(), A.truncation(), A.exponent()));
  const int half = A.size() / 2;
  Eigen::MatrixXd E(A.size(), proj.minus_basis.dim() + A.dim());
  E.leftCols(proj.minus_basis.dim()) = proj.minus_basis.columns;
  E.rightCols(A.dim()).setZero();
  for (int i = 0; i < A.dim(); ++i) E(half + i, proj.minus_basis.dim() + i) = 1.0 / std::sqrt(A.metric()(half + i));
  const Eigen::VectorXd& W = A.metric();
  const Eigen::MatrixXd R = U - E * (E.transpose() * W.asDiagonal() * U);
  const Eigen::MatrixXd C = W.cwiseSqrt().asDiagonal() * R;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
  const int take = std::clamp(count, 1, static_cast<int>(U.cols()));
  return U * svd.matrixV().leftCols(take);
}

namespace {

Eigen::VectorXd point_at_level(const ConnectionSolution& s, double level) {
  const auto& a = s.action_profile;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    if ((a[i] - level) * (a[i + 1] - level) <= 0.0 && a[i] != a[i + 1]) {
      const double w = (a[i] - level) / (a[i] - a[i + 1]);
      return (1.0 - w) * s.path[i] + w * s.path[i + 1];
    }
  }
  return level > a.front() ? s.path.front() : s.path.back();
}

// Nearest lift of a rest point: integer shift of the torus coordinates.
struct Capture {
  std::size_t rest = 0;
  Eigen::VectorXd shift;
  double distance = std::numeric_limits<double>::infinity();
};

Capture nearest_rest(const Eigen::VectorXd& z, const std::vector<RestPoint>& rest, const Eigen::VectorXd& W, int tdim) {
  Capture best;
  for (std::size_t r = 0; r < rest.size(); ++r) {
    Eigen::VectorXd d = z - rest[r].z;
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(tdim);
    for (int i = 0; i < tdim; ++i) {
      shift(i) = std::round(d(i));
      d(i) -= shift(i);
    }
    const double dist = std::sqrt(d.dot(W.cwiseProduct(d)));
    if (dist < best.distance) best = {r, shift, dist};
  }
  return best;
}

Eigen::VectorXd lifted(const Eigen::VectorXd& z, const Eigen::VectorXd& shift) {
  Eigen::VectorXd out = z;
  out.head(shift.size()) += shift;
  return out;
}

std::vector<Eigen::VectorXd> guess_from_trajectory(const Trajectory& tr, const Eigen::VectorXd& x,
                                                   const Eigen::VectorXd& y, double Ax, double Ay, double T, int mesh) {
  // centre the mesh where the action is halfway between the endpoints
  const double mid_level = 0.5 * (Ax + Ay);
  double t_mid = tr.times.back() * 0.5;
  for (std::size_t i = 0; i + 1 < tr.actions.size(); ++i)
    if (tr.actions[i] >= mid_level && tr.actions[i + 1] <= mid_level) {
      const double w = (tr.actions[i] - mid_level) / std::max(tr.actions[i] - tr.actions[i + 1], 1e-300);
      t_mid = tr.times[i] + w * (tr.times[i + 1] - tr.times[i]);
      break;
    }
  const auto times = mesh_times(T, mesh);
  std::vector<Eigen::VectorXd> g;
  for (double tau : times) {
    const double s = t_mid + tau;
    if (s <= 0.0) {
      g.push_back(x + (tr.points.front() - x) * std::exp(s));
    } else if (s >= tr.times.back()) {
      g.push_back(y + (tr.points.back() - y) * std::exp(-(s - tr.times.back())));
    } else {
      const auto it = std::upper_bound(tr.times.begin(), tr.times.end(), s);
      const std::size_t j = static_cast<std::size_t>(it - tr.times.begin());
      const double w = (s - tr.times[j - 1]) / (tr.times[j] - tr.times[j - 1]);
      g.push_back((1.0 - w) * tr.points[j - 1] + w * tr.points[j]);
    }
  }
  return g;
}

// Adds sol to reps unless it duplicates one; throws on ambiguous distances.
bool add_representative(std::vector<ConnectionSolution>& reps, ConnectionSolution sol, const Eigen::VectorXd& W,
                        double tol, double factor, bool time_shift_invariant) {
  for (const auto& r : reps) {
    double d = 0.0;
    if (metric_dist(r.path.back(), sol.path.back(), W) > 10 * tol) {
      d = std::numeric_limits<double>::infinity();  // different target lifts
    } else if (time_shift_invariant) {
      d = path_distance(r, sol, W);
    } else {
      for (std::size_t i = 0; i < r.path.size(); ++i) d = std::max(d, metric_dist(r.path[i], sol.path[i], W));
    }
    if (d < tol) return false;
    if (d <= factor * tol) {
      std::ostringstream msg;
      msg << "count_connections: two solutions at distance " << d << " inside the ambiguity band [" << tol << ", "
          << factor * tol << "]; use a finer dedup tolerance";
      throw std::runtime_error(msg.str());
    }
  }
  reps.push_back(std::move(sol));
  return true;
}

}  // namespace

double path_distance(const ConnectionSolution& a, const ConnectionSolution& b, const Eigen::VectorXd& metric,
                     int levels) {
  const double top = std::min(a.action_profile.front(), b.action_profile.front());
  const double bottom = std::max(a.action_profile.back(), b.action_profile.back());
  if (!(top > bottom)) {
    double d = 0.0;
    for (std::size_t i = 0; i < std::min(a.path.size(), b.path.size()); ++i)
      d = std::max(d, metric_dist(a.path[i], b.path[i], metric));
    return d;
  }
  double ss = 0.0;
  for (int j = 0; j < levels; ++j) {
    const double level = top - (top - bottom) * (j + 1.0) / (levels + 1.0);
    const double d = metric_dist(point_at_level(a, level), point_at_level(b, level), metric);
    ss += d * d;
  }
  return std::sqrt(ss / levels);
}

CountResult count_connections(const GradientField& field, const VectorField& flow_field, const ConnectionEndpoint& x,
                              const ConnectionEndpoint& y, const std::vector<RestPoint>& rest, const CountOptions& opt) {
  CountResult out;
  if (y.action >= x.action) {  // the action must strictly decrease along a connection
    out.reliable = true;
    out.coverage = 1.0;
    return out;
  }
  const Eigen::VectorXd& W = flow_field.metric();
  const int tdim = flow_field.torus_dim();
  const auto lin = linearize_at(field, x.z);
  const Eigen::MatrixXd dirs = relative_unstable_directions(field, x.z, std::max(1, x.index));
  if (dirs.cols() == 0) {
    out.reliable = true;
    out.coverage = 1.0;
    return out;
  }
  double min_action = x.action;
  for (const auto& r : rest) min_action = std::min(min_action, r.action);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> N01;
  ExponentialIntegrator integ(flow_field);
  int resolved = 0;
  for (int sidx = 0; sidx < opt.multistart; ++sidx) {
    Eigen::VectorXd v;
    if (dirs.cols() == 1) {
      v = (sidx % 2 == 0 ? 1.0 : -1.0) * dirs.col(0);
    } else {
      Eigen::VectorXd c(dirs.cols());
      for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = N01(rng);
      v = dirs * c.normalized();
    }
    if (sidx >= 2 || dirs.cols() > 1) {
      Eigen::VectorXd c(lin.unstable.cols());
      for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = N01(rng);
      v += opt.seed_perturbation * (lin.unstable * c.normalized());
      v /= flow_field.metric_norm(v);
    }
    const Eigen::VectorXd z0 = x.z + opt.shoot_offset * v;

    FlowOptions fo;
    fo.t_end = opt.shoot_t_max;
    Capture cap;
    bool escaped = false;
    fo.stop = [&](double, const Eigen::VectorXd& z) {
      if (flow_field.lyapunov(z) < min_action - 1.0) {
        escaped = true;
        return true;
      }
      const Capture c = nearest_rest(z, rest, W, tdim);
      const bool own = rest[c.rest].id == x.id && c.shift.cwiseAbs().maxCoeff() == 0.0;
      if (!own && c.distance < opt.capture_radius) {
        cap = c;
        return true;
      }
      return false;
    };
    Trajectory tr;
    try {
      tr = integ.integrate(z0, fo);
    } catch (const StepCollapse& e) {
      out.seeds.push_back({"escaped", e.what()});
      continue;
    }
    if (escaped || tr.stop_reason != "stop condition") {
      out.seeds.push_back({"escaped", "shooting ended without reaching a rest point (" + tr.stop_reason + ")"});
      continue;
    }
    if (rest[cap.rest].id != y.id) {
      out.seeds.push_back({"other-endpoint", "reached " + rest[cap.rest].id});
      ++resolved;
      continue;
    }
    ConnectionEndpoint target = y;
    target.z = lifted(y.z, cap.shift);
    ConnectionProblem prob{&flow_field, &flow_field, x, target, opt.T, opt.mesh, true};
    const auto guess = guess_from_trajectory(tr, x.z, target.z, x.action, y.action, opt.T, opt.mesh);
    ConnectionResult res = solve_connection(prob, guess, opt.bvp);
    if (!res.ok()) {
      out.seeds.push_back({"bvp-failed", std::string(to_string(res.failure)) + ": " + res.detail});
      continue;
    }
    ++resolved;
    const bool added = add_representative(out.representatives, std::move(*res.solution), W, opt.dedup_tol,
                                          opt.ambiguity_factor, true);
    out.seeds.push_back({"connection", added ? "new representative" : "duplicate"});
  }
  out.raw_count = static_cast<int>(out.representatives.size());
  out.sigma = out.raw_count % 2;
  out.coverage = opt.multistart > 0 ? static_cast<double>(resolved) / opt.multistart : 1.0;
  out.reliable = out.coverage >= opt.coverage_min;
  return out;
}

CountResult count_hybrid(const VectorField& F0, const VectorField& F1, const ConnectionEndpoint& x,
                         const ConnectionEndpoint& y, const CountOptions& opt) {
  CountResult out;
  out.reliable = true;
  out.coverage = 1.0;
  const int tdim = F0.torus_dim();
  const Eigen::VectorXd& W = F0.metric();
  // action must not increase across the hybrid path
  if (F1.lyapunov(y.z) > F0.lyapunov(x.z) + 1e-9) return out;
  const auto times = mesh_times(opt.T, opt.mesh);
  long combos = 1;
  for (int i = 0; i < tdim; ++i) combos *= 3;
  BvpOptions bopt = opt.bvp;
  bopt.allow_constant = true;
  for (long c = 0; c < combos; ++c) {
    Eigen::VectorXd shift(tdim);
    long rem = c;
    for (int i = 0; i < tdim; ++i) {
      shift(i) = static_cast<double>(rem % 3 - 1);
      rem /= 3;
    }
    ConnectionEndpoint target = y;
    target.z = lifted(y.z, shift);
    std::vector<Eigen::VectorXd> guess;
    for (double t : times) {
      const double sig = 1.0 / (1.0 + std::exp(-6.0 * t));  // cone coordinate r(t)
      guess.push_back(x.z + (target.z - x.z) * sig);
    }
    ConnectionProblem prob{&F0, &F1, x, target, opt.T, opt.mesh, false};
    ConnectionResult res = solve_connection(prob, guess, bopt);
    if (!res.ok()) {
      out.seeds.push_back({"bvp-failed", std::string(to_string(res.failure)) + ": " + res.detail});
      continue;
    }
    const bool added = add_representative(out.representatives, std::move(*res.solution), W, opt.dedup_tol,
                                          opt.ambiguity_factor, false);
    out.seeds.push_back({"connection", added ? "new representative" : "duplicate"});
  }
  out.raw_count = static_cast<int>(out.representatives.size());
  out.sigma = out.raw_count % 2;
  return out;
}

StableCount count_connections_stable(const GradientField& field, const VectorField& flow_field,
                                     const ConnectionEndpoint& x, const ConnectionEndpoint& y,
                                     const std::vector<RestPoint>& rest, const CountOptions& opt, bool sweep) {
  StableCount sc;
  sc.base = count_connections(field, flow_field, x, y, rest, opt);
  sc.stable = sc.base.reliable;
  if (!sweep) return sc;
  struct V {
    const char* name;
    double T;
    int mesh;
    int ms;
  };
  const V variants[] = {{"T doubled", 2 * opt.T, 2 * opt.mesh, opt.multistart},
                        {"mesh refined", opt.T, 2 * opt.mesh, opt.multistart},
                        {"multistart doubled", opt.T, opt.mesh, 2 * opt.multistart}};
  for (const auto& v : variants) {
    CountOptions o = opt;
    o.T = v.T;
    o.mesh = v.mesh;
    o.multistart = v.ms;
    const auto r = count_connections(field, flow_field, x, y, rest, o);
    sc.variants.push_back({v.name, v.T, v.mesh, v.ms, r.raw_count, r.sigma, r.reliable});
    sc.stable = sc.stable && r.reliable && r.raw_count == sc.base.raw_count && r.sigma == sc.base.sigma;
  }
  return sc;
}

namespace {

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Eigen::VectorXd low_mode_direction(const ActionFunctional& A, int modes, std::mt19937_64& rng) {
  std::normal_distribution<double> N01;
  const int n = A.dim(), half = A.size() / 2;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(A.size());
  const int upto = n * block_count(std::min(modes, A.truncation()));
  for (int i = 0; i < upto; ++i) {
    v(i) = N01(rng);
    v(half + i) = N01(rng);
  }
  return v / A.metric_norm(v);
}

}  // namespace

PerturbedField::PerturbedField(const GradientField& base, const std::vector<RestPoint>& rest, double amplitude,
                               std::uint64_t seed, double rest_radius, int modes, int directions)
    : base_(base), rest_(rest), amplitude_(amplitude), radius_(rest_radius) {
  std::mt19937_64 rng(seed);
  const int tdim = base.torus_dim();
  dirs_.resize(base.size(), directions);
  freqs_.resize(tdim, directions);
  phases_.resize(directions);
  std::uniform_int_distribution<int> freq(-1, 1);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
  for (int j = 0; j < directions; ++j) {
    dirs_.col(j) = low_mode_direction(base.action(), modes, rng);
    for (int i = 0; i < tdim; ++i) freqs_(i, j) = freq(rng);
    phases_(j) = ph(rng);
  }
  action_lo_ = std::numeric_limits<double>::infinity();
  action_hi_ = -std::numeric_limits<double>::infinity();
  for (const auto& r : rest_) {
    action_lo_ = std::min(action_lo_, r.action);
    action_hi_ = std::max(action_hi_, r.action);
  }
  if (rest_.empty()) action_lo_ = action_hi_ = 0.0;
  action_lo_ -= 1.0;
  action_hi_ += 1.0;
}

double PerturbedField::cutoff(const Eigen::VectorXd& z) const {
  if (amplitude_ == 0.0) return 0.0;
  double d = std::numeric_limits<double>::infinity();
  for (const auto& r : rest_) d = std::min(d, torus_metric_distance(z, r.z, metric(), torus_dim()));
  const double chi_dist = smoothstep((d - radius_) / radius_);
  const double a = base_.lyapunov(z);
  const double out_of_window = std::max({0.0, action_lo_ - a, a - action_hi_});
  const double chi_action = smoothstep(1.0 - out_of_window);
  return chi_dist * chi_action;
}

Eigen::VectorXd PerturbedField::direction_field(const Eigen::VectorXd& z) const {
  Eigen::VectorXd X = Eigen::VectorXd::Zero(size());
  const Eigen::VectorXd qbar = z.head(torus_dim());
  for (Eigen::Index j = 0; j < dirs_.cols(); ++j)
    X += std::cos(2.0 * std::numbers::pi * freqs_.col(j).dot(qbar) + phases_(j)) * dirs_.col(j);
  return X / static_cast<double>(dirs_.cols());
}

Eigen::VectorXd PerturbedField::perturbation(const Eigen::VectorXd& z) const {
  const double chi = cutoff(z);
  if (chi == 0.0) return Eigen::VectorXd::Zero(size());
  const Eigen::VectorXd F = base_.value(z);
  return amplitude_ * chi * base_.metric_norm(F) * direction_field(z);
}

Eigen::VectorXd PerturbedField::value(const Eigen::VectorXd& z) const { return base_.value(z) + perturbation(z); }

Eigen::MatrixXd PerturbedField::jacobian(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd J = base_.jacobian(z);
  if (amplitude_ == 0.0) return J;
  double d = std::numeric_limits<double>::infinity();
  for (const auto& r : rest_) d = std::min(d, torus_metric_distance(z, r.z, metric(), torus_dim()));
  if (d < 0.9 * radius_) return J;  // perturbation vanishes on a neighbourhood
  for (int i = 0; i < size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(z(i)));
    Eigen::VectorXd zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    J.col(i) += (perturbation(zp) - perturbation(zm)) / (2.0 * h);
  }
  return J;
}

LyapunovCheck check_lyapunov(const PerturbedField& field, const std::vector<Eigen::VectorXd>& samples) {
  LyapunovCheck chk;
  chk.worst = -std::numeric_limits<double>::infinity();
  const auto& base = dynamic_cast<const GradientField&>(field.base());
  for (const auto& z : samples) {
    const Eigen::VectorXd F = base.value(z);
    const double f2 = F.dot(field.metric().cwiseProduct(F));
    if (!(f2 > 0)) continue;
    // dA[P] = <grad A, P>_W = -<F, P>_W
    const double rate = -F.dot(field.metric().cwiseProduct(field.value(z))) / f2;
    ++chk.samples;
    if (rate > chk.worst) {
      chk.worst = rate;
      chk.worst_sample = z;
    }
  }
  chk.ok = chk.samples == 0 || chk.worst < 0.0;
  return chk;
}

std::unique_ptr<PerturbedField> perturb_field(const GradientField& base, const std::vector<RestPoint>& rest,
                                              double amplitude, std::uint64_t seed, int sample_count) {
  auto field = std::make_unique<PerturbedField>(base, rest, amplitude, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> radius(0.1, 0.4);
  std::uniform_int_distribution<std::size_t> pick(0, rest.empty() ? 0 : rest.size() - 1);
  std::vector<Eigen::VectorXd> samples;
  for (int i = 0; i < sample_count; ++i) {
    Eigen::VectorXd center = rest.empty() ? Eigen::VectorXd::Zero(base.size()) : rest[pick(rng)].z;
    samples.push_back(center + radius(rng) * low_mode_direction(base.action(), 2, rng));
  }
  const auto chk = check_lyapunov(*field, samples);
  if (!chk.ok) {
    std::ostringstream msg;
    msg << "perturb_field: amplitude " << amplitude << " breaks the Lyapunov property; dA[P]/|F|^2 = " << chk.worst
        << " at a sample with q-mean";
    for (int i = 0; i < base.torus_dim(); ++i) msg << ' ' << chk.worst_sample(i);
    throw std::runtime_error(msg.str());
  }
  return field;
}

void to_json(nlohmann::json& j, const ConnectionSolution& sol) {
  j = nlohmann::json{{"residual", sol.residual},
                     {"defect_left", sol.defect_left},
                     {"defect_right", sol.defect_right},
                     {"condition_estimate", sol.condition_estimate},
                     {"iterations", sol.iterations},
                     {"constant", sol.constant},
                     {"action_start", sol.action_profile.front()},
                     {"action_end", sol.action_profile.back()}};
  nlohmann::json pts = nlohmann::json::array();
  const std::size_t stride = std::max<std::size_t>(1, sol.path.size() / 24);
  for (std::size_t i = 0; i < sol.path.size(); i += stride) {
    std::vector<double> z(sol.path[i].data(), sol.path[i].data() + sol.path[i].size());
    pts.push_back({{"t", sol.times[i]}, {"action", sol.action_profile[i]}, {"z", z}});
  }
  j["samples"] = pts;
}

}  // namespace cotmorse
