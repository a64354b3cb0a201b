#pragma once

// Truncated real Fourier loops, Sobolev weights and the grid transform.
//
// Coefficient layout (mode-major): block b = 0 holds the mean a0, block
// 2k-1 the cosine vector a_k and block 2k the sine vector b_k, each block of
// length n.  So component i of basis function b lives at flat index b*n + i.

#include <Eigen/Dense>
#include "json.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace cotmorse {

// Which weight family a Sobolev norm uses on mode k >= 1.
//   Inhomogeneous: (1+k)^{2r}
//   Homogeneous:   (2*pi*k)^{2r}  (mean mode weight 1)
enum class NormKind { Inhomogeneous, Homogeneous };

// L2 normalisation of the real basis: integral of 1 is 1, of cos^2 is 1/2.
inline double basis_mass(int k) { return k == 0 ? 1.0 : 0.5; }

double mode_weight(int k, double r, NormKind kind);

inline int block_count(int K) { return 2 * K + 1; }
inline int mode_of_block(int b) { return (b + 1) / 2; }

class FourierLoop {
public:
  FourierLoop(int n, int K);
  FourierLoop(int n, int K, Eigen::VectorXd coeffs);

  static FourierLoop constant(const Eigen::VectorXd& value, int K);

  int dim() const { return n_; }
  int truncation() const { return K_; }
  std::size_t size() const { return static_cast<std::size_t>(coeffs_.size()); }

  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  Eigen::VectorXd& coeffs() { return coeffs_; }

  Eigen::VectorXd mean() const { return coeffs_.segment(0, n_); }
  Eigen::VectorXd cos_mode(int k) const { return coeffs_.segment((2 * k - 1) * n_, n_); }
  Eigen::VectorXd sin_mode(int k) const { return coeffs_.segment(2 * k * n_, n_); }
  void set_cos_mode(int k, const Eigen::VectorXd& v) { coeffs_.segment((2 * k - 1) * n_, n_) = v; }
  void set_sin_mode(int k, const Eigen::VectorXd& v) { coeffs_.segment(2 * k * n_, n_) = v; }

  Eigen::VectorXd evaluate(double t) const;

  // Zero-padded or truncated copy at another level.
  FourierLoop resized(int K) const;

  FourierLoop operator+(const FourierLoop& o) const;
  FourierLoop operator-(const FourierLoop& o) const;
  FourierLoop operator*(double c) const;

private:
  int n_;
  int K_;
  Eigen::VectorXd coeffs_;
};

double sobolev_inner(const FourierLoop& u, const FourierLoop& v, double r,
                     NormKind kind = NormKind::Inhomogeneous);
double sobolev_norm(const FourierLoop& u, double r, NormKind kind = NormKind::Inhomogeneous);

// Diagonal of the Gram matrix of <.,.>_r in coefficient coordinates.
Eigen::VectorXd gram_diagonal(int n, int K, double r, NormKind kind);

FourierLoop delta_power(const FourierLoop& u, double sigma);
FourierLoop derivative(const FourierLoop& u);

// Coefficient-space matrices (size n(2K+1)) of the multipliers above.
Eigen::MatrixXd delta_power_matrix(int n, int K, double sigma);
Eigen::MatrixXd derivative_matrix(int n, int K);

// Samples on t_j = j/N.  forward gives an N x n matrix (row j = u(t_j)).
class GridTransform {
public:
  GridTransform(int K, int N);

  int truncation() const { return K_; }
  int points() const { return N_; }
  double time(int j) const { return static_cast<double>(j) / N_; }

  // N x (2K+1) values of the scalar basis functions at the nodes.
  const Eigen::MatrixXd& synthesis() const { return synth_; }

  Eigen::MatrixXd forward(const FourierLoop& u) const;
  FourierLoop inverse(const Eigen::MatrixXd& samples) const;

  // Galerkin projection of sampled values onto degree <= K (exact when the
  // samples come from a series of degree < N - K).
  FourierLoop project(const Eigen::MatrixXd& samples) const { return inverse(samples); }

private:
  int K_;
  int N_;
  Eigen::MatrixXd synth_;
};

using WindingVector = Eigen::VectorXi;

// A point (q, p) of the truncated mixed space.  q is the zero-winding lift of
// the base loop: the torus loop is t -> winding*t + q(t) mod Z^n.
struct PhasePoint {
  FourierLoop q;
  FourierLoop p;
  WindingVector winding;
  double s = 0.6;

  PhasePoint(FourierLoop q_, FourierLoop p_, WindingVector m, double s_);

  int dim() const { return q.dim(); }
  int truncation() const { return q.truncation(); }

  // [q coeffs | p coeffs]
  Eigen::VectorXd flat() const;
  static PhasePoint from_flat(const Eigen::VectorXd& z, int n, int K, const WindingVector& m,
                              double s);
};

inline int phase_size(int n, int K) { return 2 * n * block_count(K); }

// Diagonal metric of H^s x H^{1-s} on phase coordinates.
Eigen::VectorXd mixed_gram_diagonal(int n, int K, double s, NormKind kind = NormKind::Homogeneous);

// n x n matrix of scalar loops; Sobolev norm uses the Frobenius combination.
class MatrixLoop {
public:
  MatrixLoop(int n, int K);

  int dim() const { return n_; }
  int truncation() const { return K_; }

  FourierLoop& entry(int i, int j) { return entries_[static_cast<std::size_t>(i * n_ + j)]; }
  const FourierLoop& entry(int i, int j) const {
    return entries_[static_cast<std::size_t>(i * n_ + j)];
  }

  Eigen::MatrixXd evaluate(double t) const;
  MatrixLoop derivative() const;
  double sobolev_norm(double r) const;
  bool is_constant(double tol = 0.0) const;

  static MatrixLoop identity(int n, int K);
  // Degree-K Galerkin projection of a sampled matrix function (N >= 2K+1).
  static MatrixLoop from_function(int n, int K, int N,
                                  const std::function<Eigen::MatrixXd(double)>& f);

private:
  int n_;
  int K_;
  std::vector<FourierLoop> entries_;
};

void to_json(nlohmann::json& j, const FourierLoop& u);
FourierLoop loop_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const PhasePoint& z);
PhasePoint phase_point_from_json(const nlohmann::json& j);

}  // namespace cotmorse
