#pragma once

// Structural operators as dense matrices on truncated Fourier spaces.

#include "cotmorse/loopspace.hpp"
#include "cotmorse/trig.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cotmorse {

// A truncated space: either one loop space H^r (one exponent) or the product
// H^s x H^{1-s} of phase coordinates (two exponents).
struct SpaceSpec {
  int n = 1;
  int K = 0;
  std::vector<double> exponents;
  NormKind kind = NormKind::Inhomogeneous;

  static SpaceSpec loop(int n, int K, double r, NormKind kind = NormKind::Inhomogeneous) {
    return {n, K, {r}, kind};
  }
  static SpaceSpec mixed(int n, int K, double s, NormKind kind = NormKind::Homogeneous) {
    return {n, K, {s, 1.0 - s}, kind};
  }

  int dim() const { return static_cast<int>(exponents.size()) * n * block_count(K); }
  Eigen::VectorXd gram() const;
};

struct LinearOperatorMatrix {
  Eigen::MatrixXd matrix;
  SpaceSpec source;
  SpaceSpec target;
  std::string basis_tag;

  double source_exponent() const { return source.exponents.front(); }
  double target_exponent() const { return target.exponents.front(); }
  int source_dim() const { return source.dim(); }
  int target_dim() const { return target.dim(); }

  // W_t^{1/2} M W_s^{-1/2}: its Euclidean SVD is the weighted SVD.
  Eigen::MatrixXd weighted() const;
  Eigen::VectorXd singular_values() const;
  double norm() const;
};

// Largest singular value of the weighted matrix by power iteration on M^T M.
double power_iteration_norm(const LinearOperatorMatrix& op, int max_iter = 500, double rel_tol = 1e-12);

// Columns orthonormal in the inner product with diagonal Gram matrix `gram`.
struct SubspaceBasis {
  Eigen::MatrixXd columns;
  Eigen::VectorXd gram;

  int dim() const { return static_cast<int>(columns.cols()); }
  int ambient_dim() const { return static_cast<int>(columns.rows()); }
  double orthonormality_error() const;

  // Orthonormalises the column span of `spanning` (rank decided at 1e-10).
  static SubspaceBasis from_span(const Eigen::MatrixXd& spanning, const Eigen::VectorXd& gram);
};

LinearOperatorMatrix assemble_L(int n, int K, double s);

struct SpectralProjectors {
  LinearOperatorMatrix minus;
  LinearOperatorMatrix zero;
  LinearOperatorMatrix plus;
  SubspaceBasis minus_basis;
  SubspaceBasis zero_basis;
  SubspaceBasis plus_basis;
  Eigen::VectorXd eigenvalues;
};

// Splits the spectrum of a self-adjoint operator at -boundary and +boundary.
// Throws if an eigenvalue lies within gap_tol of either boundary.
SpectralProjectors spectral_projectors(const LinearOperatorMatrix& op, double boundary = 0.5,
                                       double gap_tol = 1e-6);

// Degree-K Galerkin matrix of u -> A u, A of any degree.
LinearOperatorMatrix multiplication_operator(const MatrixLoop& A, double r_in, double r_out, int K);

enum class CommutatorVariant { DerivativeInside, DerivativeOutside };

// Variant DerivativeInside:  M_A (Delta^{s-1} D) - (Delta^{s-1} D) M_A
// Variant DerivativeOutside: (M_A Delta^{s-1} - Delta^{s-1} M_A) D
// Source H^{r_in}, target H^{1-s}.
LinearOperatorMatrix commutator_operator(const MatrixLoop& A, double s, int K, CommutatorVariant variant,
                                         double r_in);

// Orientation-preserving torus diffeomorphism family q -> tau_t(q).
class TorusDiffeo {
public:
  virtual ~TorusDiffeo() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd apply(double t, const Eigen::VectorXd& q) const = 0;
  virtual Eigen::MatrixXd jacobian(double t, const Eigen::VectorXd& q) const = 0;
  // d/dq_j of the Jacobian.
  virtual Eigen::MatrixXd jacobian_derivative(double t, const Eigen::VectorXd& q, int j) const = 0;
};

// q -> q + shift(t, q) with a trig-polynomial shift.
class ShiftDiffeo final : public TorusDiffeo {
public:
  explicit ShiftDiffeo(std::vector<TrigSeries> shift);
  int dim() const override { return static_cast<int>(shift_.size()); }
  Eigen::VectorXd apply(double t, const Eigen::VectorXd& q) const override;
  Eigen::MatrixXd jacobian(double t, const Eigen::VectorXd& q) const override;
  Eigen::MatrixXd jacobian_derivative(double t, const Eigen::VectorXd& q, int j) const override;

private:
  std::vector<TrigSeries> shift_;
};

// Pointwise inverse by Newton iteration.
class InverseDiffeo final : public TorusDiffeo {
public:
  explicit InverseDiffeo(std::shared_ptr<const TorusDiffeo> base) : base_(std::move(base)) {}
  int dim() const override { return base_->dim(); }
  Eigen::VectorXd apply(double t, const Eigen::VectorXd& q) const override;
  Eigen::MatrixXd jacobian(double t, const Eigen::VectorXd& q) const override;
  Eigen::MatrixXd jacobian_derivative(double t, const Eigen::VectorXd& q, int j) const override;

private:
  std::shared_ptr<const TorusDiffeo> base_;
};

// Cotangent lift (q, p) -> (tau(q), dtau(q)^{-T} p), evaluated loopwise and
// projected to degree K with quadrature on `grid_points` nodes.
PhasePoint cotangent_lift(const TorusDiffeo& tau, const PhasePoint& z, int grid_points);

// Differential of the cotangent lift at z:
//   (h, k) -> (dtau h, B h + dtau^{-T} k),  B h = d/dq(dtau^{-T} p)[h].
// Throws if det dtau <= 0 at some node, naming the node.
LinearOperatorMatrix chart_transition_differential(const TorusDiffeo& tau, const PhasePoint& z, int K,
                                                   int grid_points = 0);

// h -> B A h + A^{-1} Delta^{s-1} (A h)' - Delta^{s-1} h' with A = dtau^{-1},
// as an operator H^s -> H^{1-s}.
LinearOperatorMatrix graph_difference_operator(const TorusDiffeo& tau, const PhasePoint& z, int K,
                                               int grid_points = 0);

struct RankDecision {
  int rank = 0;
  double largest = 0.0;
};

// dim(V, W) = dim(V cap W^perp) - dim(V^perp cap W).  Singular values of the
// cross-Gram matrix below rel_tol*sigma_1 are zero; values inside
// [ambiguity_low, rel_tol]*sigma_1 raise an error.
int relative_dimension(const SubspaceBasis& V, const SubspaceBasis& W, double rel_tol = 1e-7,
                       double ambiguity_low = 1e-9);

struct SpectrumReport {
  int K = 0;
  double s = 0.0;
  double r = 0.0;
  std::vector<double> top_singular_values;
  double fitted_tail_exponent = 0.0;
};

SpectrumReport spectrum_report(const LinearOperatorMatrix& op, double s, double r, int top = 40);
void to_json(nlohmann::json& j, const SpectrumReport& rep);

struct CompactnessSignature {
  std::vector<int> Ks;
  std::vector<double> sigma1;
  double head_variation = 0.0;  // max |sigma1(K)/sigma1(K_last) - 1|
  double tail_ratio = 0.0;      // sigma_{tail_index}/sigma_1 at the largest K
  bool head_stable = false;
  bool tail_decays = false;
  bool compact() const { return head_stable && tail_decays; }
};

CompactnessSignature compactness_signature(const std::vector<LinearOperatorMatrix>& sweep, int tail_index = 20,
                                           double head_tol = 0.10, double tail_tol = 0.05);

// Rotation loop A(t) = exp(J alpha sin 2 pi t), J the 2x2 rotation generator.
MatrixLoop rotation_loop(double alpha, int K_A = 40);

}  // namespace cotmorse
