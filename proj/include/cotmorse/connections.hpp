#pragma once

// Connecting orbits between rest points of gradient-like fields by
// trapezoidal collocation on [-T, T] with projection boundary conditions.

#include "cotmorse/action.hpp"
#include "cotmorse/flow.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cotmorse {

struct ConnectionEndpoint {
  std::string id;
  Eigen::VectorXd z;  // flat point; for the target this is the chosen lift
  double action = 0.0;
  int index = 0;
};

// The left field acts on t < 0 and the right field on t >= 0.  For an
// ordinary connection both are the same field and a phase condition removes
// the time-shift symmetry; for a hybrid (continuation) problem they differ
// and no phase condition is used.
struct ConnectionProblem {
  const VectorField* left = nullptr;
  const VectorField* right = nullptr;
  ConnectionEndpoint x;
  ConnectionEndpoint y;
  double T = 12.0;
  int mesh = 240;  // number of intervals, even
  bool phase_condition = true;
};

struct BvpOptions {
  double residual_tol = 1e-10;      // max-norm of the collocation residual
  int max_iterations = 40;
  double divergence_bound = 1e4;
  double defect_tol = 1e-4;         // endpoint distance to x and y in the metric
  double constant_tol = 1e-6;       // path within this of x everywhere -> constant
  double monotone_tol = 1e-12;      // allowed action increase between nodes
  double condition_limit = 1e12;    // above: singular / non-transversal
  bool allow_constant = false;
};

struct ConnectionSolution {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> path;
  std::vector<double> action_profile;
  double residual = 0.0;
  double defect_left = 0.0;
  double defect_right = 0.0;
  double condition_estimate = 0.0;
  int iterations = 0;
  bool constant = false;
};

enum class BvpFailure { None, Diverged, MaxIterations, ConvergedToConstant, SingularJacobian, BoundaryDefect, ActionNotDecreasing };
const char* to_string(BvpFailure f);

struct ConnectionResult {
  std::optional<ConnectionSolution> solution;
  BvpFailure failure = BvpFailure::None;
  std::string detail;
  double condition_estimate = 0.0;
  bool ok() const { return solution.has_value(); }
};

// Node times of the mesh on [-T, T].
std::vector<double> mesh_times(double T, int mesh);

ConnectionResult solve_connection(const ConnectionProblem& prob, const std::vector<Eigen::VectorXd>& guess,
                                  const BvpOptions& opt = {});

// W-orthonormal eigenbasis of the linearisation at a rest point, split by sign.
struct RestLinearization {
  Eigen::MatrixXd stable;    // eigenvalues < 0
  Eigen::MatrixXd unstable;  // eigenvalues > 0
  Eigen::VectorXd eigenvalues;
};
RestLinearization linearize_at(const VectorField& field, const Eigen::VectorXd& z);

struct CountOptions {
  double T = 12.0;
  int mesh = 240;
  int multistart = 4;
  double shoot_offset = 1e-4;
  double seed_perturbation = 0.05;
  double capture_radius = 0.05;
  double shoot_t_max = 80.0;
  double dedup_tol = 0.02;
  double ambiguity_factor = 5.0;  // distances in [tol, factor*tol] are ambiguous
  double coverage_min = 0.9;
  std::uint64_t seed = 12345;
  BvpOptions bvp;
};

struct SeedOutcome {
  std::string kind;  // "connection", "other-endpoint", "escaped", "bvp-failed"
  std::string detail;
};

struct CountResult {
  int raw_count = 0;
  int sigma = 0;
  std::vector<ConnectionSolution> representatives;
  std::vector<SeedOutcome> seeds;
  double coverage = 0.0;
  bool reliable = false;
};

// Relative unstable directions at x: unstable eigenvectors with the least
// overlap with the reference space (L-negative space plus vertical constants).
Eigen::MatrixXd relative_unstable_directions(const GradientField& field, const Eigen::VectorXd& x, int count);

// Action-level distance between two paths from the same x: the paths are
// compared at `levels` interior action values, so time shifts do not matter.
double path_distance(const ConnectionSolution& a, const ConnectionSolution& b, const Eigen::VectorXd& metric,
                     int levels = 9);

// Counts connections x -> y (index gap one) of an autonomous field by
// multistart shooting plus collocation.  `rest` lists all known rest points
// (used to classify shooting endpoints).
CountResult count_connections(const GradientField& field, const VectorField& flow_field, const ConnectionEndpoint& x,
                              const ConnectionEndpoint& y, const std::vector<RestPoint>& rest, const CountOptions& opt);

// Hybrid connections for continuation: left field F0 with rest point x,
// right field F1 with rest point y, equal index.  Candidates are the lifts of
// y shifted by at most one period in each torus direction.
CountResult count_hybrid(const VectorField& F0, const VectorField& F1, const ConnectionEndpoint& x,
                         const ConnectionEndpoint& y, const CountOptions& opt);

struct StabilityVariant {
  std::string name;
  double T = 0.0;
  int mesh = 0;
  int multistart = 0;
  int raw_count = 0;
  int sigma = 0;
  bool reliable = false;
};

struct StableCount {
  CountResult base;
  std::vector<StabilityVariant> variants;
  bool stable = false;
};

// Base count plus the T-doubling, mesh-refinement and doubled-multistart reruns.
StableCount count_connections_stable(const GradientField& field, const VectorField& flow_field,
                                     const ConnectionEndpoint& x, const ConnectionEndpoint& y,
                                     const std::vector<RestPoint>& rest, const CountOptions& opt, bool sweep = true);

// F + a chi ||F|| X with X a fixed combination of low-mode directions of
// metric norm at most one and chi a cutoff vanishing near rest points and
// outside an action window.
class PerturbedField final : public VectorField {
public:
  PerturbedField(const GradientField& base, const std::vector<RestPoint>& rest, double amplitude, std::uint64_t seed,
                 double rest_radius = 0.05, int modes = 2, int directions = 4);

  int size() const override { return base_.size(); }
  int torus_dim() const override { return base_.torus_dim(); }
  Eigen::VectorXd value(const Eigen::VectorXd& z) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const override;
  double lyapunov(const Eigen::VectorXd& z) const override { return base_.lyapunov(z); }
  const Eigen::VectorXd& metric() const override { return base_.metric(); }
  const Eigen::MatrixXd& linear_part() const override { return base_.linear_part(); }

  const GradientField& base() const { return base_; }
  double amplitude() const { return amplitude_; }
  double cutoff(const Eigen::VectorXd& z) const;
  Eigen::VectorXd direction_field(const Eigen::VectorXd& z) const;

private:
  Eigen::VectorXd perturbation(const Eigen::VectorXd& z) const;

  const GradientField& base_;
  std::vector<RestPoint> rest_;
  double amplitude_;
  double radius_;
  double action_lo_, action_hi_;
  Eigen::MatrixXd dirs_;   // columns of metric norm one
  Eigen::MatrixXd freqs_;  // torus frequency per direction (torus_dim x directions)
  Eigen::VectorXd phases_;
};

struct LyapunovCheck {
  bool ok = true;
  double worst = 0.0;  // max of dA[P] / |F|^2 over samples (must be < 0)
  Eigen::VectorXd worst_sample;
  int samples = 0;
};

LyapunovCheck check_lyapunov(const PerturbedField& field, const std::vector<Eigen::VectorXd>& samples);

// Throws std::runtime_error naming the violating sample if the action fails to
// decrease along the perturbed field on the sample cloud.
std::unique_ptr<PerturbedField> perturb_field(const GradientField& base, const std::vector<RestPoint>& rest,
                                              double amplitude, std::uint64_t seed, int sample_count = 200);

void to_json(nlohmann::json& j, const ConnectionSolution& sol);

}  // namespace cotmorse
