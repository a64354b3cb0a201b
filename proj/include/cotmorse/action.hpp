#pragma once

// Hamiltonian action on truncated loops in T*T^n for
//   H(t, q, p) = |p - theta(t, q)|^2 / 2 + U(t, q).

#include "cotmorse/loopspace.hpp"
#include "cotmorse/operators.hpp"
#include "cotmorse/trig.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cotmorse {

struct HamiltonianSpec {
  int n = 1;
  std::vector<TrigSeries> theta;  // n components, possibly empty series
  TrigSeries U{1};
  std::string note;

  HamiltonianSpec() = default;
  HamiltonianSpec(int n_, std::vector<TrigSeries> theta_, TrigSeries U_, std::string note_ = {});

  bool autonomous() const;
  bool has_magnetic_term() const;
  double value(double t, const Eigen::VectorXd& q, const Eigen::VectorXd& p) const;
  HamiltonianSpec plus_constant(double c) const;
};

// U = eps cos(2 pi q), theta = 0, n = 1.
HamiltonianSpec pendulum_hamiltonian(double eps);
// U = theta = 0.
HamiltonianSpec free_hamiltonian(int n);

void to_json(nlohmann::json& j, const HamiltonianSpec& H);
HamiltonianSpec hamiltonian_from_json(const nlohmann::json& j);

// Action, differential and Hessian in flat phase coordinates [q | p] at a
// fixed truncation, exponent and winding.  The metric is the homogeneous
// H^s x H^{1-s} inner product, under which the Liouville part is represented
// by assemble_L.
class ActionFunctional {
public:
  ActionFunctional(HamiltonianSpec H, int K, double s, WindingVector winding, int quadrature_points = 0);

  const HamiltonianSpec& hamiltonian() const { return H_; }
  int dim() const { return H_.n; }
  int truncation() const { return K_; }
  double exponent() const { return s_; }
  const WindingVector& winding() const { return m_; }
  int size() const { return 2 * half_; }
  int quadrature_points() const { return grid_.points(); }

  const Eigen::VectorXd& metric() const { return W_; }
  // Symmetric matrix with z^T B z = 2 int p.q0' (q0 the periodic part).
  const Eigen::MatrixXd& liouville_form() const { return B_; }
  // Liouville form plus the fiber mass term -int |p|^2.
  Eigen::MatrixXd free_form() const;

  double value(const Eigen::VectorXd& z) const;
  Eigen::VectorXd differential(const Eigen::VectorXd& z) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const { return differential(z).cwiseQuotient(W_); }
  double gradient_norm(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd hessian_form(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd metric_hessian(const Eigen::VectorXd& z) const {
    return W_.cwiseInverse().asDiagonal() * hessian_form(z);
  }
  // Eigenvalues of the metric Hessian (real: it is W-self-adjoint), ascending.
  Eigen::VectorXd metric_hessian_spectrum(const Eigen::VectorXd& z) const;

  double metric_norm(const Eigen::VectorXd& v) const { return std::sqrt(v.dot(W_.cwiseProduct(v))); }

  Eigen::VectorXd flat(const PhasePoint& z) const;
  PhasePoint point(const Eigen::VectorXd& z) const { return PhasePoint::from_flat(z, H_.n, K_, m_, s_); }

private:
  struct GridState {
    Eigen::MatrixXd Q, P;  // N x n
  };
  GridState samples(const Eigen::VectorXd& z) const;

  HamiltonianSpec H_;
  int K_;
  double s_;
  WindingVector m_;
  int half_;
  GridTransform grid_;
  Eigen::VectorXd W_;
  Eigen::MatrixXd B_;
};

double eval_action(const HamiltonianSpec& H, const PhasePoint& z);
PhasePoint gradient_mixed(const HamiltonianSpec& H, const PhasePoint& z);
LinearOperatorMatrix hessian(const HamiltonianSpec& H, const PhasePoint& z);

struct CriticalPoint {
  std::string id;
  PhasePoint z;
  double action = 0.0;
  double residual = 0.0;
  double hyperbolicity_gap = 0.0;
  int negative_count = 0;
  int relative_index = 0;
  int K_used = 0;
  bool degenerate = false;
};

// Dimension of the truncated reference space against which indices are
// measured: the negative space of int p.q' - |p|^2/2, i.e. 2Kn + n.
inline int reference_negative_dimension(int n, int K) { return 2 * K * n + n; }

struct SeedGrid {
  int q_points = 8;                      // per axis, constants q0 = j / q_points
  std::vector<WindingVector> windings;   // default {0}
  std::vector<double> p_offsets{0.0};    // constant fiber offsets
};

struct FinderOptions {
  double newton_tol = 1e-10;
  int max_iterations = 60;
  double dedup_tol = 1e-6;
  double hyperbolicity_tol = 1e-6;
  double divergence_bound = 1e6;
  int quadrature_points = 0;
};

struct FailedSeed {
  std::string seed;
  std::string reason;
};

struct FinderResult {
  std::vector<CriticalPoint> points;  // sorted by (action, coefficients)
  std::vector<FailedSeed> failed;
  bool any_degenerate() const;
};

// Newton iteration on dA = 0 from a flat start; returns the converged flat
// point or nullopt with a reason.
struct NewtonOutcome {
  std::optional<Eigen::VectorXd> z;
  std::string failure;
  int iterations = 0;
};
NewtonOutcome newton_critical_point(const ActionFunctional& A, Eigen::VectorXd z, const FinderOptions& opt);

CriticalPoint make_critical_point(const ActionFunctional& A, const Eigen::VectorXd& z, const FinderOptions& opt);

FinderResult find_critical_points(const HamiltonianSpec& H, const SeedGrid& seeds, int K, double s,
                                  const FinderOptions& opt = {});

struct IndexReport {
  std::vector<int> Ks;
  std::vector<int> indices;
  int index = 0;
  bool stable = false;
};

// Re-solves the point at every K in the sweep and counts negatives.  Throws
// if the two largest K disagree.
IndexReport relative_index(const HamiltonianSpec& H, const CriticalPoint& cp, const std::vector<int>& Ks,
                           const FinderOptions& opt = {});
int relative_index(const ActionFunctional& A, const Eigen::VectorXd& z);

struct LowerBound {
  double c = 0.0;
  double bound = 0.0;
};
LowerBound action_lower_bound(const HamiltonianSpec& H);

// Distance modulo integer shifts of the q mean, in the metric of A.
double torus_distance(const ActionFunctional& A, const Eigen::VectorXd& a, const Eigen::VectorXd& b);
// Shifts the q mean of each component into [-delta, 1 - delta).
Eigen::VectorXd canonical_lift(int n, const Eigen::VectorXd& z);

void to_json(nlohmann::json& j, const CriticalPoint& cp);

}  // namespace cotmorse
