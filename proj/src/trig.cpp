#include "cotmorse/trig.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cotmorse {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double phase(const TrigTerm& term, double t, const Eigen::VectorXd& q) {
  double ph = term.t_freq * t;
  for (std::size_t i = 0; i < term.q_freq.size(); ++i) ph += term.q_freq[i] * q(static_cast<Eigen::Index>(i));
  return kTwoPi * ph;
}
}  // namespace

TrigSeries::TrigSeries(int n, std::vector<TrigTerm> terms) : n_(n), terms_(std::move(terms)) {
  for (auto& term : terms_) {
    if (term.q_freq.empty()) term.q_freq.assign(static_cast<std::size_t>(n), 0);
    if (static_cast<int>(term.q_freq.size()) != n)
      throw std::invalid_argument("trig term: q_freq must have n entries");
  }
}

bool TrigSeries::time_dependent() const {
  return std::any_of(terms_.begin(), terms_.end(), [](const TrigTerm& t) { return t.t_freq != 0; });
}

double TrigSeries::value(double t, const Eigen::VectorXd& q) const {
  double v = 0.0;
  for (const auto& term : terms_) {
    const double ph = phase(term, t, q);
    v += term.cos_coeff * std::cos(ph) + term.sin_coeff * std::sin(ph);
  }
  return v;
}

double TrigSeries::time_derivative(double t, const Eigen::VectorXd& q) const {
  double v = 0.0;
  for (const auto& term : terms_) {
    const double ph = phase(term, t, q);
    v += kTwoPi * term.t_freq * (-term.cos_coeff * std::sin(ph) + term.sin_coeff * std::cos(ph));
  }
  return v;
}

TrigJet TrigSeries::jet(double t, const Eigen::VectorXd& q, int order) const {
  TrigJet out;
  if (order >= 1) out.grad = Eigen::VectorXd::Zero(n_);
  if (order >= 2) out.hess = Eigen::MatrixXd::Zero(n_, n_);
  for (const auto& term : terms_) {
    const double ph = phase(term, t, q);
    const double c = std::cos(ph), s = std::sin(ph);
    const double f = term.cos_coeff * c + term.sin_coeff * s;
    out.value += f;
    if (order < 1) continue;
    const Eigen::Map<const Eigen::VectorXi> li(term.q_freq.data(), n_);
    const Eigen::VectorXd l = li.cast<double>() * kTwoPi;
    out.grad += (-term.cos_coeff * s + term.sin_coeff * c) * l;
    if (order >= 2) out.hess -= f * (l * l.transpose());
  }
  return out;
}

TrigSeries TrigSeries::plus_constant(double c) const {
  auto terms = terms_;
  terms.push_back(TrigTerm{0, std::vector<int>(static_cast<std::size_t>(n_), 0), c, 0.0});
  return TrigSeries(n_, std::move(terms));
}

TrigSeries TrigSeries::scaled(double c) const {
  auto terms = terms_;
  for (auto& term : terms) {
    term.cos_coeff *= c;
    term.sin_coeff *= c;
  }
  return TrigSeries(n_, std::move(terms));
}

double sup_norm(std::span<const TrigSeries> components) {
  if (components.empty()) return 0.0;
  const int n = components.front().dim();
  bool any_terms = false, timed = false;
  for (const auto& c : components) {
    any_terms = any_terms || !c.empty();
    timed = timed || c.time_dependent();
  }
  if (!any_terms) return 0.0;

  const int vars = n + (timed ? 1 : 0);
  auto eval = [&](const Eigen::VectorXd& x) {
    const double t = timed ? x(0) : 0.0;
    const Eigen::VectorXd q = x.tail(n);
    double sq = 0.0;
    for (const auto& c : components) {
      const double v = c.value(t, q);
      sq += v * v;
    }
    return std::sqrt(sq);
  };

  const int per_axis = vars <= 2 ? 64 : (vars == 3 ? 24 : 10);
  long total = 1;
  for (int i = 0; i < vars; ++i) total *= per_axis;

  struct Best {
    double value;
    Eigen::VectorXd x;
  };
  std::vector<Best> best;
  Eigen::VectorXd x(vars);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = 0; i < vars; ++i) {
      x(i) = static_cast<double>(rem % per_axis) / per_axis;
      rem /= per_axis;
    }
    const double v = eval(x);
    if (best.size() < 8 || v > best.back().value) {
      best.push_back({v, x});
      std::sort(best.begin(), best.end(), [](const Best& a, const Best& b) { return a.value > b.value; });
      if (best.size() > 8) best.pop_back();
    }
  }

  double sup = 0.0;
  for (auto b : best) {
    double h = 1.0 / per_axis;
    while (h > 1e-12) {
      bool moved = false;
      for (int i = 0; i < vars && !moved; ++i)
        for (double dir : {1.0, -1.0}) {
          Eigen::VectorXd y = b.x;
          y(i) += dir * h;
          const double v = eval(y);
          if (v > b.value) {
            b = {v, y};
            moved = true;
            break;
          }
        }
      if (!moved) h *= 0.5;
    }
    sup = std::max(sup, b.value);
  }
  return sup;
}

void to_json(nlohmann::json& j, const TrigTerm& term) {
  j = nlohmann::json{{"t_freq", term.t_freq}, {"q_freq", term.q_freq}, {"cos", term.cos_coeff},
                     {"sin", term.sin_coeff}};
}

void from_json(const nlohmann::json& j, TrigTerm& term) {
  term.t_freq = j.value("t_freq", 0);
  term.q_freq = j.value("q_freq", std::vector<int>{});
  term.cos_coeff = j.value("cos", 0.0);
  term.sin_coeff = j.value("sin", 0.0);
}

}  // namespace cotmorse
