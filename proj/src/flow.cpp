#include "cotmorse/flow.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace cotmorse {

GradientField::GradientField(ActionFunctional A) : A_(std::move(A)) {
  // exactly the part of -W^{-1} Hess that does not depend on the point
  lin_ = -(A_.metric().cwiseInverse().asDiagonal() * A_.free_form());
}

std::vector<std::vector<int>> coupled_blocks(const Eigen::MatrixXd& M) {
  const int D = static_cast<int>(M.rows());
  std::vector<int> parent(static_cast<std::size_t>(D));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      if (i != j && M(i, j) != 0.0) parent[static_cast<std::size_t>(find(i))] = find(j);
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < D; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [root, idx] : groups) out.push_back(std::move(idx));
  return out;
}

PhiFunctions phi_functions(const Eigen::MatrixXd& X, const std::vector<std::vector<int>>& blocks) {
  const Eigen::Index D = X.rows();
  PhiFunctions out{Eigen::MatrixXd::Zero(D, D), Eigen::MatrixXd::Zero(D, D), Eigen::MatrixXd::Zero(D, D)};
  for (const auto& blk : blocks) {
    const int b = static_cast<int>(blk.size());
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(3 * b, 3 * b);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) aug(i, j) = X(blk[static_cast<std::size_t>(i)], blk[static_cast<std::size_t>(j)]);
    aug.block(0, b, b, b).setIdentity();
    aug.block(b, 2 * b, b, b).setIdentity();
    const Eigen::MatrixXd ex = aug.exp();
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        const auto r = blk[static_cast<std::size_t>(i)], c = blk[static_cast<std::size_t>(j)];
        out.E(r, c) = ex(i, j);
        out.phi1(r, c) = ex(i, b + j);
        out.phi2(r, c) = ex(i, 2 * b + j);
      }
  }
  return out;
}

ExponentialIntegrator::ExponentialIntegrator(const VectorField& field)
    : field_(field), blocks_(coupled_blocks(field.linear_part())) {}

const ExponentialIntegrator::Propagators& ExponentialIntegrator::propagators(double h) const {
  auto it = cache_.find(h);
  if (it != cache_.end()) return it->second;
  auto phi = phi_functions(h * field_.linear_part(), blocks_);
  Propagators p{std::move(phi.E), h * phi.phi1, h * phi.phi2};
  return cache_.emplace(h, std::move(p)).first->second;
}

Trajectory ExponentialIntegrator::integrate(const Eigen::VectorXd& z0, const FlowOptions& opt) const {
  const Eigen::MatrixXd& Lin = field_.linear_part();
  auto remainder = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& Fz) { return Eigen::VectorXd(Fz - Lin * z); };

  Trajectory tr;
  Eigen::VectorXd z = z0;
  Eigen::VectorXd Fz = field_.value(z);
  double A = field_.lyapunov(z);
  double t = 0.0;
  auto record = [&](double h) {
    tr.times.push_back(t);
    tr.points.push_back(z);
    tr.actions.push_back(A);
    tr.field_norms.push_back(field_.metric_norm(Fz));
    if (h > 0) tr.steps.push_back(h);
  };
  record(0.0);
  if (opt.critical_tol > 0 && tr.field_norms.back() < opt.critical_tol) {
    tr.stop_reason = "critical";
    return tr;
  }

  double h = opt.initial_step;
  while (t < opt.t_end) {
    const bool last = h >= opt.t_end - t;
    const double step = last ? opt.t_end - t : h;
    const auto& P = propagators(step);
    const Eigen::VectorXd Nz = remainder(z, Fz);
    const Eigen::VectorXd a = P.E * z + P.hphi1 * Nz;
    const Eigen::VectorXd Fa = field_.value(a);
    const Eigen::VectorXd corr = P.hphi2 * (remainder(a, Fa) - Nz);
    const Eigen::VectorXd z1 = a + corr;
    const double err = field_.metric_norm(corr);
    const double scale = 1.0 + field_.metric_norm(z);
    const double A1 = z1.allFinite() ? field_.lyapunov(z1) : std::numeric_limits<double>::infinity();
    const bool ok = z1.allFinite() && err <= opt.error_tol * scale && A1 - A <= opt.monotone_tol * step;
    if (!ok) {
      ++tr.rejected_steps;
      h = 0.5 * step;
      if (h < opt.min_step) {
        std::ostringstream msg;
        msg << "flow: step collapsed below " << opt.min_step << " at t=" << t << " (local error " << err
            << ", action change " << A1 - A << ", |F|=" << field_.metric_norm(Fz) << ")";
        throw StepCollapse(msg.str());
      }
      continue;
    }
    tr.max_action_increase = std::max(tr.max_action_increase, A1 - A);
    z = z1;
    Fz = field_.value(z);
    A = A1;
    t = last ? opt.t_end : t + step;
    record(step);
    if (opt.critical_tol > 0 && tr.field_norms.back() < opt.critical_tol) {
      tr.stop_reason = "critical";
      return tr;
    }
    if (opt.stop && opt.stop(t, z)) {
      tr.stop_reason = "stop condition";
      return tr;
    }
    if (!last && err < opt.error_tol * scale / 16.0) h = std::min(2.0 * step, opt.max_step);
  }
  tr.stop_reason = "t_end";
  return tr;
}

Trajectory integrate(const VectorField& field, const Eigen::VectorXd& z0, const FlowOptions& opt) {
  return ExponentialIntegrator(field).integrate(z0, opt);
}

SwitchedFieldSpec SwitchedFieldSpec::linear(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  SwitchedFieldSpec spec;
  spec.X = [A](const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x); };
  spec.Y = [B](const Eigen::VectorXd& x) { return Eigen::VectorXd(B * x); };
  spec.X_matrix = A;
  spec.Y_matrix = B;
  return spec;
}

namespace {

using Field = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd rk4(const Field& f, Eigen::VectorXd x, double dt, int steps) {
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = f(x);
    const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

std::vector<Eigen::VectorXd> circle_points(int dim, int count) {
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    const double th = 2.0 * std::numbers::pi * i / count;
    x(0) = std::cos(th);
    if (dim > 1) x(1) = std::sin(th);
    pts.push_back(x);
  }
  return pts;
}

}  // namespace

std::vector<HomogenizationRow> homogenize_compare(const SwitchedFieldSpec& spec, double T,
                                                  const std::vector<int>& n_list, const HomogenizationOptions& opt) {
  const bool exact = spec.X_matrix && spec.Y_matrix;
  int dim = 2;
  if (exact) dim = static_cast<int>(spec.X_matrix->rows());
  const auto starts = circle_points(dim, opt.initial_points);
  std::vector<HomogenizationRow> rows;
  for (int n : n_list) {
    const double tau = 1.0 / n;
    const int intervals = static_cast<int>(std::ceil(T * n - 1e-12));
    double sup = 0.0;
    if (exact) {
      const Eigen::MatrixXd& A = *spec.X_matrix;
      const Eigen::MatrixXd& B = *spec.Y_matrix;
      const Eigen::MatrixXd M = 0.5 * (A + B);
      const Eigen::MatrixXd EA = (tau * A).exp(), EB = (tau * B).exp();
      // sample times: uniform grid and every switch time
      std::vector<double> times;
      for (int i = 0; i < opt.time_samples; ++i) times.push_back(T * i / (opt.time_samples - 1));
      for (int k = 0; k <= intervals; ++k) times.push_back(std::min(T, k * tau));
      std::sort(times.begin(), times.end());
      for (const auto& x0 : starts) {
        Eigen::VectorXd x = x0;  // switched state at the start of interval k
        int k = 0;
        for (double t : times) {
          while (k < intervals && (k + 1) * tau <= t) {
            x = (k % 2 == 0 ? EA : EB) * x;
            ++k;
          }
          const double rem = t - k * tau;
          const Eigen::VectorXd xs = rem > 0 ? Eigen::VectorXd(((k % 2 == 0 ? A : B) * rem).exp() * x) : x;
          const Eigen::VectorXd xa = (M * t).exp() * x0;
          sup = std::max(sup, (xs - xa).norm());
        }
      }
    } else {
      const Field avg = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(0.5 * (spec.X(x) + spec.Y(x))); };
      const double dt = tau / opt.substeps;
      for (const auto& x0 : starts) {
        Eigen::VectorXd xs = x0, xa = x0;
        for (int k = 0; k < intervals; ++k) {
          const double len = std::min(tau, T - k * tau);
          const int steps = std::max(1, static_cast<int>(std::round(len / dt)));
          xs = rk4(k % 2 == 0 ? spec.X : spec.Y, xs, len / steps, steps);
          xa = rk4(avg, xa, len / steps, steps);
          sup = std::max(sup, (xs - xa).norm());
        }
      }
    }
    rows.push_back({n, sup});
  }
  return rows;
}

double fit_log_slope(const std::vector<HomogenizationRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& r : rows) {
    if (!(r.sup_error > 0)) continue;
    const double x = std::log(static_cast<double>(r.n)), y = std::log(r.sup_error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 2) return 0.0;
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace {

int flat_mode(int n, int K, Eigen::Index i) {
  const int half = n * block_count(K);
  return mode_of_block(static_cast<int>(i % half) / n);
}

}  // namespace

double positive_tail_energy(const ActionFunctional& A, const Eigen::MatrixXd& P_plus, const Eigen::VectorXd& z, int k0) {
  const Eigen::VectorXd v = P_plus * z;
  double e = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (flat_mode(A.dim(), A.truncation(), i) > k0) e += A.metric()(i) * v(i) * v(i);
  return e;
}

std::vector<TailRow> vertical_tail_diagnostic(const GradientField& field, const std::vector<Eigen::VectorXd>& cloud,
                                              double t_end, const std::vector<int>& k0_list,
                                              const std::vector<double>& report_times, const FlowOptions& base) {
  const ActionFunctional& A = field.action();
  const auto proj = spectral_projectors(assemble_L(A.dim(), A.truncation(), A.exponent()));
  const Eigen::MatrixXd& Pp = proj.plus.matrix;
  std::vector<TailRow> rows;
  for (double t : report_times)
    for (int k0 : k0_list) rows.push_back({t, k0, 0.0, 0.0});
  std::vector<double> stops;
  for (double t : report_times)
    if (t <= t_end) stops.push_back(t);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  ExponentialIntegrator integ(field);
  for (const auto& z0 : cloud) {
    // integrate leg by leg so every report time is hit exactly
    Eigen::VectorXd z = z0;
    double now = 0.0;
    for (double t : stops) {
      if (t > now) {
        FlowOptions opt = base;
        opt.t_end = t - now;
        z = integ.integrate(z, opt).points.back();
        now = t;
      }
      const double total = A.metric_norm(z);
      for (auto& row : rows) {
        if (row.t != t) continue;
        const double e = positive_tail_energy(A, Pp, z, row.k0);
        row.max_tail_energy = std::max(row.max_tail_energy, e);
        row.max_tail_ratio = std::max(row.max_tail_ratio, total > 0 ? e / (total * total) : 0.0);
      }
    }
  }
  return rows;
}

Eigen::MatrixXd linearized_flow(const VectorField& field, const Eigen::VectorXd& z, double t, double h) {
  const Eigen::Index D = z.size();
  Eigen::MatrixXd Y = Eigen::MatrixXd::Identity(D, D);
  if (t <= 0) return Y;
  const int steps = std::max(1, static_cast<int>(std::ceil(t / h - 1e-12)));
  const double dt = t / steps;
  Eigen::VectorXd x = z;
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = field.value(x);
    const Eigen::MatrixXd K1 = field.jacobian(x) * Y;
    const Eigen::VectorXd x2 = x + 0.5 * dt * k1;
    const Eigen::VectorXd k2 = field.value(x2);
    const Eigen::MatrixXd K2 = field.jacobian(x2) * (Y + 0.5 * dt * K1);
    const Eigen::VectorXd x3 = x + 0.5 * dt * k2;
    const Eigen::VectorXd k3 = field.value(x3);
    const Eigen::MatrixXd K3 = field.jacobian(x3) * (Y + 0.5 * dt * K2);
    const Eigen::VectorXd x4 = x + dt * k3;
    const Eigen::VectorXd k4 = field.value(x4);
    const Eigen::MatrixXd K4 = field.jacobian(x4) * (Y + dt * K3);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    Y += dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4);
  }
  return Y;
}

InvarianceReport invariance_indicator(const GradientField& field, const Eigen::VectorXd& z, double t, int k0,
                                      double h) {
  const ActionFunctional& A = field.action();
  const auto proj = spectral_projectors(assemble_L(A.dim(), A.truncation(), A.exponent()));
  const Eigen::MatrixXd& P = proj.minus.matrix;
  const Eigen::Index D = z.size();
  const Eigen::MatrixXd Y = linearized_flow(field, z, t, h);
  InvarianceReport rep;
  rep.t = t;
  rep.k0 = k0;
  rep.op = (Eigen::MatrixXd::Identity(D, D) - P) * Y * P;
  const Eigen::VectorXd sq = A.metric().cwiseSqrt();
  const Eigen::MatrixXd Wop = sq.asDiagonal() * rep.op * sq.cwiseInverse().asDiagonal();
  const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(Wop).singularValues();
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(sv.size(), 40); ++i) rep.singular_values.push_back(sv(i));
  rep.sigma1 = sv.size() ? sv(0) : 0.0;
  rep.tail_ratio = sv.size() > 9 && rep.sigma1 > 0 ? sv(9) / rep.sigma1 : 0.0;
  std::vector<Eigen::Index> hi;
  for (Eigen::Index i = 0; i < D; ++i)
    if (flat_mode(A.dim(), A.truncation(), i) > k0) hi.push_back(i);
  if (!hi.empty()) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(hi.size()), static_cast<Eigen::Index>(hi.size()));
    for (std::size_t a = 0; a < hi.size(); ++a)
      for (std::size_t b = 0; b < hi.size(); ++b) sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = Wop(hi[a], hi[b]);
    rep.above_k0_norm = Eigen::BDCSVD<Eigen::MatrixXd>(sub).singularValues()(0);
  }
  return rep;
}

double torus_metric_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& metric,
                             int torus_dim) {
  Eigen::VectorXd d = a - b;
  for (int i = 0; i < torus_dim; ++i) d(i) -= std::round(d(i));
  return std::sqrt(d.dot(metric.cwiseProduct(d)));
}

BreakingChain chain_along(const std::vector<Eigen::VectorXd>& path, const std::vector<RestPoint>& rest,
                          const Eigen::VectorXd& metric, int torus_dim, double tol) {
  BreakingChain chain;
  std::vector<std::size_t> visited;
  for (const auto& z : path) {
    std::optional<std::size_t> near;
    double best = tol;
    for (std::size_t r = 0; r < rest.size(); ++r) {
      const double d = torus_metric_distance(z, rest[r].z, metric, torus_dim);
      if (d < best) {
        best = d;
        near = r;
      }
    }
    if (near && (visited.empty() || visited.back() != *near)) visited.push_back(*near);
  }
  for (std::size_t i = 0; i < visited.size(); ++i) {
    const auto& r = rest[visited[i]];
    chain.ids.push_back(r.id);
    chain.actions.push_back(r.action);
    if (i > 0) {
      const auto& prev = rest[visited[i - 1]];
      chain.action_decreasing = chain.action_decreasing && r.action < prev.action;
      if (r.index && prev.index) chain.index_decreasing = chain.index_decreasing && *r.index < *prev.index;
    }
  }
  return chain;
}

BreakingChain detect_breaking(const std::vector<Trajectory>& family, const std::vector<RestPoint>& rest,
                              const Eigen::VectorXd& metric, int torus_dim, double tol) {
  BreakingChain best;
  for (const auto& tr : family) {
    auto c = chain_along(tr.points, rest, metric, torus_dim, tol);
    if (c.ids.size() > best.ids.size()) best = std::move(c);
  }
  return best;
}

}  // namespace cotmorse
