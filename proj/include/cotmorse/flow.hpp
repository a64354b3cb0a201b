#pragma once

// Negative-gradient flows, switched-flow homogenization and flow diagnostics.

#include "cotmorse/action.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotmorse {

// Autonomous vector field on flat phase coordinates with a Lyapunov function
// and a bounded linear part that the integrator treats exactly.
class VectorField {
public:
  virtual ~VectorField() = default;
  virtual int size() const = 0;
  // Number of torus directions (the q means), used for integer lifts.
  virtual int torus_dim() const = 0;
  virtual Eigen::VectorXd value(const Eigen::VectorXd& z) const = 0;
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const = 0;
  virtual double lyapunov(const Eigen::VectorXd& z) const = 0;
  virtual const Eigen::VectorXd& metric() const = 0;
  virtual const Eigen::MatrixXd& linear_part() const = 0;

  double metric_norm(const Eigen::VectorXd& v) const { return std::sqrt(v.dot(metric().cwiseProduct(v))); }
};

// z' = -grad A(z) in the homogeneous mixed metric.
class GradientField final : public VectorField {
public:
  explicit GradientField(ActionFunctional A);

  const ActionFunctional& action() const { return A_; }
  int size() const override { return A_.size(); }
  int torus_dim() const override { return A_.dim(); }
  Eigen::VectorXd value(const Eigen::VectorXd& z) const override { return -A_.gradient(z); }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const override { return -A_.metric_hessian(z); }
  double lyapunov(const Eigen::VectorXd& z) const override { return A_.value(z); }
  const Eigen::VectorXd& metric() const override { return A_.metric(); }
  const Eigen::MatrixXd& linear_part() const override { return lin_; }

private:
  ActionFunctional A_;
  Eigen::MatrixXd lin_;
};

struct FlowOptions {
  double t_end = 10.0;
  double initial_step = 0.05;
  double min_step = 1e-10;
  double max_step = 0.5;
  double error_tol = 1e-7;        // local error per step, relative to 1 + |z|
  double monotone_tol = 1e-10;    // allowed action increase per unit step
  double critical_tol = 0.0;      // stop when |F(z)| falls below (0 disables)
  std::function<bool(double, const Eigen::VectorXd&)> stop;  // extra stop condition
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> points;
  std::vector<double> actions;
  std::vector<double> field_norms;
  std::vector<double> steps;  // accepted step sizes
  int rejected_steps = 0;
  std::string stop_reason;
  double max_action_increase = 0.0;  // max over steps of A(next) - A(prev)
};

class StepCollapse : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Second-order exponential time differencing (ETD2RK) with the linear part
// propagated exactly.  Throws StepCollapse if the step falls below min_step.
class ExponentialIntegrator {
public:
  explicit ExponentialIntegrator(const VectorField& field);

  Trajectory integrate(const Eigen::VectorXd& z0, const FlowOptions& opt) const;

  struct Propagators {
    Eigen::MatrixXd E;     // exp(h L)
    Eigen::MatrixXd hphi1; // h phi1(h L)
    Eigen::MatrixXd hphi2; // h phi2(h L)
  };
  const Propagators& propagators(double h) const;

private:
  const VectorField& field_;
  std::vector<std::vector<int>> blocks_;  // coupled index groups of the linear part
  mutable std::map<double, Propagators> cache_;
};

Trajectory integrate(const VectorField& field, const Eigen::VectorXd& z0, const FlowOptions& opt);

struct PhiFunctions {
  Eigen::MatrixXd E;
  Eigen::MatrixXd phi1;
  Eigen::MatrixXd phi2;
};

// exp(X), phi1(X) = X^{-1}(e^X - I), phi2(X) = X^{-2}(e^X - I - X), computed
// with one augmented exponential per coupled block of X.
PhiFunctions phi_functions(const Eigen::MatrixXd& X, const std::vector<std::vector<int>>& blocks);
std::vector<std::vector<int>> coupled_blocks(const Eigen::MatrixXd& M);

// Z_n(t, x) = X(x) on [2k/n, (2k+1)/n), Y(x) otherwise.
struct SwitchedFieldSpec {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> X;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> Y;
  std::optional<Eigen::MatrixXd> X_matrix;  // if both given the flows are exact exponentials
  std::optional<Eigen::MatrixXd> Y_matrix;

  static SwitchedFieldSpec linear(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
};

struct HomogenizationRow {
  int n = 0;
  double sup_error = 0.0;
};

struct HomogenizationOptions {
  int initial_points = 16;   // on the unit circle (first two coordinates)
  int time_samples = 101;    // uniform grid on [0, T], plus every switch time
  int substeps = 8;          // RK4 steps per switching interval for nonlinear fields
};

std::vector<HomogenizationRow> homogenize_compare(const SwitchedFieldSpec& spec, double T, const std::vector<int>& n_list,
                                                  const HomogenizationOptions& opt = {});

double fit_log_slope(const std::vector<HomogenizationRow>& rows);

struct TailRow {
  double t = 0.0;
  int k0 = 0;
  double max_tail_energy = 0.0;
  double max_tail_ratio = 0.0;  // tail energy over |z|^2 in the metric
};

// Energy of the L-positive projection above mode k0, maximised over the
// cloud at each report time.
std::vector<TailRow> vertical_tail_diagnostic(const GradientField& field, const std::vector<Eigen::VectorXd>& cloud,
                                              double t_end, const std::vector<int>& k0_list,
                                              const std::vector<double>& report_times, const FlowOptions& base = {});

double positive_tail_energy(const ActionFunctional& A, const Eigen::MatrixXd& P_plus, const Eigen::VectorXd& z, int k0);

// Linearised flow Y(t) = D phi_t(z) by RK4 on the variational system.
Eigen::MatrixXd linearized_flow(const VectorField& field, const Eigen::VectorXd& z, double t, double h = 0.01);

struct InvarianceReport {
  double t = 0.0;
  int k0 = 0;
  std::vector<double> singular_values;
  double sigma1 = 0.0;
  double tail_ratio = 0.0;     // sigma_10 / sigma_1
  double above_k0_norm = 0.0;  // norm of the block with input and output modes > k0
  Eigen::MatrixXd op;          // (I - P) D phi_t P
};

// (I - P) D phi_t(z) P with P the projector onto the truncated L-negative space.
InvarianceReport invariance_indicator(const GradientField& field, const Eigen::VectorXd& z, double t, int k0,
                                      double h = 0.01);

struct RestPoint {
  std::string id;
  Eigen::VectorXd z;
  double action = 0.0;
  std::optional<int> index;
};

struct BreakingChain {
  std::vector<std::string> ids;
  std::vector<double> actions;
  bool action_decreasing = true;
  bool index_decreasing = true;
};

// Ordered rest points visited within tol (torus distance in `metric`) along a
// sampled path; consecutive repeats collapse.
BreakingChain chain_along(const std::vector<Eigen::VectorXd>& path, const std::vector<RestPoint>& rest,
                          const Eigen::VectorXd& metric, int torus_dim, double tol);

// Longest chain over a family of connecting trajectories.
BreakingChain detect_breaking(const std::vector<Trajectory>& family, const std::vector<RestPoint>& rest,
                              const Eigen::VectorXd& metric, int torus_dim, double tol);

double torus_metric_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& metric,
                             int torus_dim);

}  // namespace cotmorse
