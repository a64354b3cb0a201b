#pragma once

// Real trigonometric polynomials on T x T^n, used for potentials, magnetic
// one-forms and torus diffeomorphisms.  A term contributes
//   c cos(2 pi (j t + l.q)) + d sin(2 pi (j t + l.q)).

#include <Eigen/Dense>

#include "json.hpp"

#include <span>
#include <vector>

namespace cotmorse {

struct TrigTerm {
  int t_freq = 0;
  std::vector<int> q_freq;
  double cos_coeff = 0.0;
  double sin_coeff = 0.0;
};

struct TrigJet {
  double value = 0.0;
  Eigen::VectorXd grad;  // d/dq
  Eigen::MatrixXd hess;  // d^2/dq^2
};

class TrigSeries {
public:
  explicit TrigSeries(int n) : n_(n) {}
  TrigSeries(int n, std::vector<TrigTerm> terms);

  int dim() const { return n_; }
  const std::vector<TrigTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  bool time_dependent() const;

  double value(double t, const Eigen::VectorXd& q) const;
  double time_derivative(double t, const Eigen::VectorXd& q) const;
  // order 0, 1 or 2: fills value, then grad, then hess.
  TrigJet jet(double t, const Eigen::VectorXd& q, int order) const;

  TrigSeries plus_constant(double c) const;
  TrigSeries scaled(double c) const;

private:
  int n_;
  std::vector<TrigTerm> terms_;
};

// sup over (t, q) in [0,1]^{1+n} of the Euclidean norm of the vector with the
// given components, by grid search followed by local pattern refinement.
double sup_norm(std::span<const TrigSeries> components);

void to_json(nlohmann::json& j, const TrigTerm& term);
void from_json(const nlohmann::json& j, TrigTerm& term);

}  // namespace cotmorse
