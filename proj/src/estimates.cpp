#include "cotmorse/estimates.hpp"

#include "cotmorse/operators.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cotmorse {

namespace {
constexpr long kMaxH = 1L << 26;

void fail(const std::string& what) { throw std::invalid_argument("hypothesis violated: " + what); }
}  // namespace

SeriesValue lemma_sum_G(double alpha, double beta, double gamma, long k, long H_max, double tail_rel) {
  if (alpha < 0) fail("alpha >= 0");
  if (beta < 0) fail("beta >= 0");
  if (gamma < 0) fail("gamma >= 0");
  if (!(alpha + beta > 1)) fail("alpha + beta > 1");
  if (gamma > beta) fail("gamma <= beta");
  if (!(gamma < alpha + beta - 1)) fail("gamma < alpha + beta - 1");
  if (k < 1) fail("k >= 1");

  const double kk = static_cast<double>(k);
  auto tail = [&](long H) { return std::pow(static_cast<double>(H), 1.0 - alpha - beta) / (alpha + beta - 1.0); };
  SeriesValue out;
  long H = H_max > 0 ? H_max : std::max(1024L, 32 * k);
  long h = 1;
  double sum = 0.0;
  while (true) {
    for (; h <= H; ++h) {
      const double hh = static_cast<double>(h);
      sum += 1.0 / (std::pow(hh, alpha) * std::pow(kk + hh, beta));
    }
    if (H_max > 0 || tail(H) < tail_rel * sum || H >= kMaxH) break;
    H *= 2;
  }
  out.value = sum;
  out.H_max = H;
  out.tail_estimate = tail(H);
  return out;
}

SeriesValue F_of_k(double s, double r, long k, long H_max, double tail_rel) {
  if (!(s > 0.5 && s < 1.0)) fail("s in (1/2, 1)");
  if (!(r > 0.5)) fail("r > 1/2");
  const double e = 2.0 * (s - 1.0);
  auto g = [e](long h) {
    if (h == 0) return 0.0;
    const double a = static_cast<double>(std::labs(h));
    return std::pow(a, e) * static_cast<double>(h);
  };
  const long ak = std::labs(k);
  auto tail = [&](long H) {
    return 2.0 * std::pow(static_cast<double>(H), 2 * s - 1 - 2 * r) / (2 * r + 1 - 2 * s);
  };
  long H = H_max > 0 ? H_max : std::max(1024L, 32 * ak);
  const double gk = g(k);

  // Power tables indexed by |h| and |k-h|, grown on demand.
  std::vector<double> g_abs, w_h, w_d;
  auto grow = [&](long upto) {
    const long old = static_cast<long>(g_abs.size());
    g_abs.resize(static_cast<std::size_t>(upto + 1));
    w_h.resize(static_cast<std::size_t>(upto + 1));
    for (long a = old; a <= upto; ++a) {
      g_abs[static_cast<std::size_t>(a)] = g(a);
      w_h[static_cast<std::size_t>(a)] = std::pow(1.0 + static_cast<double>(a), -2.0 * r);
    }
    const long old_d = static_cast<long>(w_d.size());
    w_d.resize(static_cast<std::size_t>(upto + ak + 1));
    for (long a = old_d; a <= upto + ak; ++a)
      w_d[static_cast<std::size_t>(a)] = std::pow(1.0 + static_cast<double>(a), -2.0 * s);
  };

  auto term = [&](long h) {
    const long a = std::labs(h);
    const double gh = h >= 0 ? g_abs[static_cast<std::size_t>(a)] : -g_abs[static_cast<std::size_t>(a)];
    const double diff = gk - gh;
    return diff * diff * w_d[static_cast<std::size_t>(std::labs(k - h))] * w_h[static_cast<std::size_t>(a)];
  };

  double sum = 0.0;
  long done = -1;  // |h| <= done already summed
  while (true) {
    grow(H);
    for (long a = done + 1; a <= H; ++a) sum += a == 0 ? term(0) : term(a) + term(-a);
    done = H;
    if (H_max > 0 || tail(H) < tail_rel * sum || H >= kMaxH) break;
    H *= 2;
  }
  return {sum, H, tail(H)};
}

DecayFit fit_decay(std::vector<double> ks, std::vector<double> values) {
  if (ks.size() != values.size() || ks.size() < 2) throw std::invalid_argument("fit_decay: need >= 2 samples");
  DecayFit fit;
  const double m = static_cast<double>(ks.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (!(ks[i] > 0 && values[i] > 0)) throw std::invalid_argument("fit_decay: samples must be positive");
    const double x = std::log(ks[i]), y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / m;
  double ss = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double res = std::log(values[i]) - (fit.intercept + fit.slope * std::log(ks[i]));
    ss += res * res;
  }
  fit.residual = std::sqrt(ss / m);
  fit.ks = std::move(ks);
  fit.values = std::move(values);
  return fit;
}

std::vector<long> geometric_grid(int lo_exp, int hi_exp) {
  std::vector<long> ks;
  for (int e = lo_exp; e <= hi_exp; ++e) ks.push_back(1L << e);
  return ks;
}

DecayFit fit_lemma_G(double alpha, double beta, double gamma, const std::vector<long>& ks) {
  std::vector<double> x, y;
  std::vector<long> H;
  for (long k : ks) {
    const auto v = lemma_sum_G(alpha, beta, gamma, k);
    x.push_back(static_cast<double>(k));
    y.push_back(v.value);
    H.push_back(v.H_max);
  }
  auto fit = fit_decay(std::move(x), std::move(y));
  fit.H_used = std::move(H);
  return fit;
}

DecayFit fit_F(double s, double r, const std::vector<long>& ks) {
  std::vector<double> x, y;
  std::vector<long> H;
  for (long k : ks) {
    const auto v = F_of_k(s, r, k);
    x.push_back(static_cast<double>(k));
    y.push_back(v.value);
    H.push_back(v.H_max);
  }
  auto fit = fit_decay(std::move(x), std::move(y));
  fit.H_used = std::move(H);
  return fit;
}

void to_json(nlohmann::json& j, const DecayFit& fit) {
  j = nlohmann::json{{"k", fit.ks},         {"value", fit.values},         {"H_max", fit.H_used},
                     {"slope", fit.slope}, {"intercept", fit.intercept}, {"residual_rms", fit.residual}};
}

InequalityKind inequality_kind_from_string(const std::string& name) {
  if (name == "multiplication") return InequalityKind::Multiplication;
  if (name == "commutator-v1") return InequalityKind::CommutatorV1;
  if (name == "commutator-v2") return InequalityKind::CommutatorV2;
  throw std::invalid_argument("unknown inequality kind '" + name + "'");
}

namespace {

const char* kind_name(InequalityKind k) {
  switch (k) {
    case InequalityKind::Multiplication: return "multiplication";
    case InequalityKind::CommutatorV1: return "commutator-v1";
    case InequalityKind::CommutatorV2: return "commutator-v2";
  }
  return "?";
}

MatrixLoop random_trig_matrix(int n, int degree, std::mt19937_64& rng) {
  std::normal_distribution<double> N01;
  MatrixLoop A(n, degree);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      auto& c = A.entry(i, j).coeffs();
      for (int b = 0; b < block_count(degree); ++b) c(b) = N01(rng) / std::pow(1.0 + mode_of_block(b), 2.0);
    }
  return A;
}

}  // namespace

NormInequalityReport verify_norm_inequality(InequalityKind kind, double s, double r, int sample_count,
                                            const std::vector<int>& Ks, std::optional<MatrixLoop> A,
                                            std::uint64_t seed, double stabilization_tol) {
  std::mt19937_64 rng(seed);
  if (!A) A = random_trig_matrix(2, 4, rng);
  const int n = A->dim();
  NormInequalityReport rep;
  rep.kind = kind;
  rep.s = s;
  rep.r = r;
  rep.A_norm = A->sobolev_norm(s);
  std::normal_distribution<double> N01;
  for (int K : Ks) {
    // resize A to K (modes above K are dropped)
    MatrixLoop AK(n, K);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) AK.entry(i, j) = A->entry(i, j).resized(K);
    LinearOperatorMatrix op = kind == InequalityKind::Multiplication
                                  ? multiplication_operator(AK, r, r, K)
                                  : commutator_operator(AK, s, K,
                                                        kind == InequalityKind::CommutatorV1
                                                            ? CommutatorVariant::DerivativeInside
                                                            : CommutatorVariant::DerivativeOutside,
                                                        r);
    NormInequalityRow row;
    row.K = K;
    std::mt19937_64 sample_rng(seed + 7919);  // same sample family for every K
    for (int smp = 0; smp < sample_count; ++smp) {
      FourierLoop u(n, K);
      for (int b = 0; b < block_count(K / 2); ++b)
        for (int i = 0; i < n; ++i)
          u.coeffs()(b * n + i) = N01(sample_rng) * std::pow(1.0 + mode_of_block(b), -r - 1.0);
      const FourierLoop out(n, K, op.matrix * u.coeffs());
      const double num = sobolev_norm(out, op.target_exponent());
      const double den = rep.A_norm * sobolev_norm(u, r);
      const double ratio = den > 0 ? num / den : 0.0;
      row.ratios.push_back(ratio);
      row.max_ratio = std::max(row.max_ratio, ratio);
    }
    rep.rows.push_back(std::move(row));
  }
  if (!rep.rows.empty()) {
    const double ref = rep.rows.back().max_ratio;
    for (const auto& row : rep.rows)
      rep.variation = std::max(rep.variation, ref > 0 ? std::abs(row.max_ratio / ref - 1.0) : 0.0);
    rep.stabilized = rep.variation < stabilization_tol;
  }
  return rep;
}

void to_json(nlohmann::json& j, const NormInequalityReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : rep.rows) rows.push_back({{"K", row.K}, {"max_ratio", row.max_ratio}});
  j = nlohmann::json{{"kind", kind_name(rep.kind)}, {"s", rep.s},       {"r", rep.r},
                     {"A_norm_s", rep.A_norm},      {"rows", rows},     {"variation", rep.variation},
                     {"stabilized", rep.stabilized}};
}

}  // namespace cotmorse
