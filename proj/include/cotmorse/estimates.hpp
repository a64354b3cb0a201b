#pragma once

// Numerical checks of the scalar series bounds and the multiplication /
// commutator norm inequalities.

#include "cotmorse/loopspace.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cotmorse {

struct SeriesValue {
  double value = 0.0;
  long H_max = 0;
  double tail_estimate = 0.0;  // integral-comparison bound on the dropped tail
};

// sum_{h=1}^{H} 1 / (h^alpha (k+h)^beta).  H_max <= 0 selects H adaptively
// so that the tail estimate is below tail_rel times the partial sum.
// Requires alpha, beta, gamma >= 0, alpha + beta > 1, gamma <= beta and
// gamma < alpha + beta - 1.
SeriesValue lemma_sum_G(double alpha, double beta, double gamma, long k, long H_max = 0, double tail_rel = 1e-3);

// sum_{|h|<=H} | g(k) - g(h) |^2 / ((1+|k-h|)^{2s} (1+|h|)^{2r}),
// g(h) = |h|^{2(s-1)} h with g(0) = 0.  Requires s in (1/2, 1), r > 1/2.
SeriesValue F_of_k(double s, double r, long k, long H_max = 0, double tail_rel = 1e-3);

struct DecayFit {
  std::vector<double> ks;
  std::vector<double> values;
  std::vector<long> H_used;
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS of log-log residuals
};

DecayFit fit_decay(std::vector<double> ks, std::vector<double> values);

// Geometric grid 2^lo .. 2^hi.
std::vector<long> geometric_grid(int lo_exp, int hi_exp);

DecayFit fit_lemma_G(double alpha, double beta, double gamma, const std::vector<long>& ks);
DecayFit fit_F(double s, double r, const std::vector<long>& ks);

void to_json(nlohmann::json& j, const DecayFit& fit);

enum class InequalityKind { Multiplication, CommutatorV1, CommutatorV2 };
InequalityKind inequality_kind_from_string(const std::string& name);

struct NormInequalityRow {
  int K = 0;
  double max_ratio = 0.0;
  std::vector<double> ratios;
};

struct NormInequalityReport {
  InequalityKind kind = InequalityKind::Multiplication;
  double s = 0.0;
  double r = 0.0;
  double A_norm = 0.0;
  std::vector<NormInequalityRow> rows;
  double variation = 0.0;  // max |max_ratio(K)/max_ratio(K_last) - 1|
  bool stabilized = false;
};

// Ratios |Op u| / (|A|_s |u|_in) for random u of degree <= K/2, per K.  The
// operator maps H^r -> H^r (multiplication) or H^r -> H^{1-s} (commutators).
// If A is not given a random 2x2 trig loop of degree <= 4 is drawn.
NormInequalityReport verify_norm_inequality(InequalityKind kind, double s, double r, int sample_count,
                                            const std::vector<int>& Ks, std::optional<MatrixLoop> A = std::nullopt,
                                            std::uint64_t seed = 1, double stabilization_tol = 0.10);

void to_json(nlohmann::json& j, const NormInequalityReport& rep);

}  // namespace cotmorse
