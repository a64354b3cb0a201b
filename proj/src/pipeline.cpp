#include "cotmorse/pipeline.hpp"

#include "cotmorse/estimates.hpp"
#include "cotmorse/flow.hpp"
#include "cotmorse/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace cotmorse {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

std::vector<long> log_grid(double lo, double hi, int points) {
  std::vector<long> out;
  if (points <= 1) return {std::lround(lo)};
  for (int i = 0; i < points; ++i) {
    const long k = std::lround(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
    if (out.empty() || k != out.back()) out.push_back(k);
  }
  return out;
}

FinderOptions finder_options(const ExperimentConfig& cfg) {
  FinderOptions fo;
  fo.newton_tol = cfg.tol.newton;
  fo.dedup_tol = cfg.tol.critical_dedup;
  fo.hyperbolicity_tol = cfg.tol.hyperbolicity;
  return fo;
}

SeedGrid seed_grid(const ExperimentConfig& cfg) {
  SeedGrid sg;
  sg.q_points = cfg.seed_q_points;
  sg.windings = {cfg.winding};
  sg.p_offsets = cfg.seed_p_offsets;
  return sg;
}

CountOptions count_options(const ExperimentConfig& cfg) {
  CountOptions co;
  co.T = cfg.bvp.T;
  co.mesh = cfg.bvp.mesh;
  co.multistart = cfg.bvp.multistart;
  co.shoot_offset = cfg.bvp.shoot_offset;
  co.seed_perturbation = cfg.bvp.seed_perturbation;
  co.capture_radius = cfg.bvp.capture_radius;
  co.shoot_t_max = cfg.bvp.shoot_t_max;
  co.dedup_tol = cfg.tol.dedup;
  co.coverage_min = cfg.bvp.coverage_min;
  co.seed = cfg.seed;
  co.bvp.residual_tol = cfg.bvp.residual_tol;
  co.bvp.defect_tol = cfg.bvp.defect_tol;
  return co;
}

Eigen::VectorXd refine_at(const HamiltonianSpec& H, const CriticalPoint& cp, int K, const FinderOptions& opt) {
  const ActionFunctional A(H, K, cp.z.s, cp.z.winding, opt.quadrature_points);
  const PhasePoint zK(cp.z.q.resized(K), cp.z.p.resized(K), cp.z.winding, cp.z.s);
  auto outcome = newton_critical_point(A, zK.flat(), opt);
  if (!outcome.z)
    throw std::runtime_error("critical point " + cp.id + " lost at K=" + std::to_string(K) + " (" + outcome.failure + ")");
  return *outcome.z;
}

MorseReport run_morse(const ExperimentConfig& cfg, const HamiltonianSpec& H, const MorseStages& stages) {
  MorseReport rep;
  const FinderOptions fo = finder_options(cfg);
  std::vector<int> Ks = cfg.k_sweep;
  std::sort(Ks.begin(), Ks.end());
  const auto found = find_critical_points(H, seed_grid(cfg), Ks.front(), cfg.s, fo);
  rep.points = found.points;
  rep.failed_seeds = found.failed;

  rep.lower_bound = action_lower_bound(H);
  for (const auto& cp : rep.points)
    if (cp.action < rep.lower_bound.bound - 1e-12) {
      rep.lower_bound_ok = false;
      rep.failures.push_back("critical point " + cp.id + " has action " + fmt(cp.action) + " below the bound " +
                             fmt(rep.lower_bound.bound));
    }

  if (found.any_degenerate()) {
    rep.degenerate = true;
    int count = 0;
    for (const auto& cp : rep.points) count += cp.degenerate ? 1 : 0;
    rep.failures.push_back("hyperbolicity assumption violated: " + std::to_string(count) +
                           " degenerate critical point(s)");
    return rep;
  }

  for (auto& cp : rep.points) {
    try {
      auto ir = relative_index(H, cp, Ks, fo);
      cp.relative_index = ir.index;
      rep.indices[cp.id] = std::move(ir);
    } catch (const std::runtime_error& e) {
      rep.index_stable = false;
      rep.failures.push_back(std::string("index instability: ") + e.what());
    }
  }
  if (!rep.index_stable || !stages.connections) return rep;

  const CountOptions co = count_options(cfg);
  const std::vector<int> count_Ks = stages.count_Ks.empty() ? Ks : stages.count_Ks;
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> first_seen;  // pair -> (raw, sigma)
  for (int K : count_Ks) {
    const ActionFunctional A(H, K, cfg.s, cfg.winding, fo.quadrature_points);
    const GradientField field(A);
    std::vector<RestPoint> rest;
    std::vector<ConnectionEndpoint> ends;
    for (const auto& cp : rep.points) {
      const Eigen::VectorXd z = refine_at(H, cp, K, fo);
      rest.push_back({cp.id, z, A.value(z), cp.relative_index});
      ends.push_back({cp.id, z, A.value(z), cp.relative_index});
    }
    std::unique_ptr<PerturbedField> perturbed;
    if (cfg.perturbation_amplitude > 0) {
      try {
        perturbed = perturb_field(field, rest, cfg.perturbation_amplitude, cfg.seed);
      } catch (const std::runtime_error& e) {
        rep.failures.push_back(std::string("Lyapunov violation: ") + e.what());
        return rep;
      }
    }
    const VectorField& flow_field = perturbed ? static_cast<const VectorField&>(*perturbed) : field;
    for (const auto& x : ends)
      for (const auto& y : ends) {
        if (x.index - y.index != 1) continue;
        PairCount pc{x.id, y.id, K, count_connections_stable(field, flow_field, x, y, rest, co, cfg.bvp.sweep)};
        if (!pc.count.stable) {
          rep.counts_stable = false;
          rep.failures.push_back("unstable connection count " + x.id + " -> " + y.id + " at K=" + std::to_string(K));
        }
        const auto key = std::make_pair(x.id, y.id);
        const auto val = std::make_pair(pc.count.base.raw_count, pc.count.base.sigma);
        if (auto it = first_seen.find(key); it == first_seen.end()) {
          first_seen[key] = val;
        } else if (it->second != val) {
          rep.counts_stable = false;
          rep.failures.push_back("connection count " + x.id + " -> " + y.id + " changes across the K sweep");
        }
        rep.counts.push_back(std::move(pc));
      }
  }
  if (!stages.complex) return rep;

  std::vector<Generator> gens;
  for (const auto& cp : rep.points) gens.push_back({cp.id, cp.action, cp.relative_index});
  std::vector<ConnectionCount> counts;
  const int Kc = count_Ks.back();
  for (const auto& pc : rep.counts)
    if (pc.K == Kc) counts.push_back({pc.x, pc.y, pc.count.base.raw_count});
  try {
    rep.complex = build_complex(gens, counts);
    rep.complex->provenance = {{"hamiltonian", H},
                               {"K", Kc},
                               {"s", cfg.s},
                               {"tolerances", cfg.source.at("tolerances")},
                               {"bvp", cfg.source.at("bvp")},
                               {"perturbation_amplitude", cfg.perturbation_amplitude},
                               {"index_convention", "negative Hessian eigenvalues minus 2Kn+n"}};
    rep.homology = homology_ranks(*rep.complex);
  } catch (const ComplexError& e) {
    rep.failures.push_back(std::string("complex: ") + e.what());
  }
  return rep;
}

namespace {

// Samples (t, q, p) for dominance checks.
template <class F>
double grid_min(int n, F&& f) {
  const int qn = n == 1 ? 64 : (n == 2 ? 24 : 8);
  long total = 1;
  for (int i = 0; i < n; ++i) total *= qn;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd q(n), p(n);
  for (int it = 0; it < 16; ++it) {
    const double t = it / 16.0;
    for (long idx = 0; idx < total; ++idx) {
      long rem = idx;
      for (int i = 0; i < n; ++i) {
        q(i) = static_cast<double>(rem % qn) / qn;
        rem /= qn;
      }
      for (double pv : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        p.setConstant(pv);
        best = std::min(best, f(t, q, p));
      }
    }
  }
  return best;
}

}  // namespace

double dominance_margin(const HamiltonianSpec& H0, const HamiltonianSpec& H1) {
  if (H0.n != H1.n) throw std::invalid_argument("dominance_margin: dimension mismatch");
  return grid_min(H0.n, [&](double t, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
    return H1.value(t, q, p) - H0.value(t, q, p);
  });
}

double dominance_shift(const HamiltonianSpec& H0, const HamiltonianSpec& H1) {
  return std::max(0.0, -dominance_margin(H0, H1));
}

ContinuationReport run_continuation(const ExperimentConfig& cfg, const HamiltonianSpec& H0, const HamiltonianSpec& H1,
                                    std::optional<double> shift) {
  ContinuationReport rep;
  rep.shift = shift ? *shift : dominance_shift(H0, H1);
  const HamiltonianSpec H1s = rep.shift == 0.0 ? H1 : H1.plus_constant(rep.shift);
  const double margin = dominance_margin(H0, H1s);
  if (margin < -1e-12) {
    rep.failures.push_back("target does not dominate the source: min(H1 + c - H0) = " + fmt(margin));
    return rep;
  }
  rep.K = *std::min_element(cfg.k_sweep.begin(), cfg.k_sweep.end());
  const MorseStages stages{true, true, {rep.K}};
  rep.source = run_morse(cfg, H0, stages);
  rep.target = run_morse(cfg, H1s, stages);
  for (const auto& f : rep.source.failures) rep.failures.push_back("source: " + f);
  for (const auto& f : rep.target.failures) rep.failures.push_back("target: " + f);
  if (!rep.source.complex || !rep.target.complex) return rep;

  const FinderOptions fo = finder_options(cfg);
  const ActionFunctional A0(H0, rep.K, cfg.s, cfg.winding, fo.quadrature_points);
  const ActionFunctional A1(H1s, rep.K, cfg.s, cfg.winding, fo.quadrature_points);
  const GradientField F0(A0), F1(A1);
  const CountOptions co = count_options(cfg);
  for (const auto& x : rep.source.points) {
    const Eigen::VectorXd zx = refine_at(H0, x, rep.K, fo);
    for (const auto& y : rep.target.points) {
      if (x.relative_index != y.relative_index) continue;
      const Eigen::VectorXd zy = refine_at(H1s, y, rep.K, fo);
      const CountResult cr = count_hybrid(F0, F1, {x.id, zx, A0.value(zx), x.relative_index},
                                          {y.id, zy, A1.value(zy), y.relative_index}, co);
      rep.hybrid_counts.push_back({x.id, y.id, cr.raw_count});
    }
  }
  try {
    rep.psi = build_continuation(*rep.source.complex, *rep.target.complex, rep.hybrid_counts);
    rep.chain_map = true;
  } catch (const ComplexError& e) {
    rep.failures.push_back(std::string("continuation: ") + e.what());
    return rep;
  }
  rep.unitriangular = std::all_of(rep.psi->maps.begin(), rep.psi->maps.end(),
                                  [](const auto& kv) { return is_upper_unitriangular(kv.second); });
  if (!rep.unitriangular) {
    rep.failures.push_back("continuation map is not upper unitriangular in action order");
  } else {
    const ContinuationMap inv = inverse(*rep.psi);
    rep.inverse_ok = true;
    for (const auto& [k, m] : rep.psi->maps)
      rep.inverse_ok = rep.inverse_ok && (m * inv.maps.at(k)) == BitMatrix::identity(m.rows());
    if (!rep.inverse_ok) rep.failures.push_back("inductive inverse does not invert the continuation map");
  }
  rep.induced_ranks = induced_homology_rank(*rep.source.complex, *rep.target.complex, *rep.psi);
  rep.isomorphism = true;
  for (const auto& [k, r] : rep.induced_ranks) {
    const int hs = rep.source.homology.count(k) ? rep.source.homology.at(k) : 0;
    const int ht = rep.target.homology.count(k) ? rep.target.homology.at(k) : 0;
    rep.isomorphism = rep.isomorphism && r == hs && r == ht;
  }
  if (!rep.isomorphism) rep.failures.push_back("induced map on homology is not an isomorphism");
  return rep;
}

void to_json(nlohmann::json& j, const MorseReport& r) {
  j["critical_points"] = r.points;
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& f : r.failed_seeds) failed.push_back({{"seed", f.seed}, {"reason", f.reason}});
  j["failed_seeds"] = failed;
  nlohmann::json idx = nlohmann::json::object();
  for (const auto& [id, ir] : r.indices) idx[id] = {{"Ks", ir.Ks}, {"indices", ir.indices}, {"index", ir.index}, {"stable", ir.stable}};
  j["index_sweep"] = idx;
  j["degenerate"] = r.degenerate;
  j["index_stable"] = r.index_stable;
  j["lower_bound"] = {{"c", r.lower_bound.c}, {"bound", r.lower_bound.bound}, {"ok", r.lower_bound_ok}};
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& pc : r.counts) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& s : pc.count.base.representatives) reps.push_back(s);
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : pc.count.base.seeds) seeds.push_back({{"kind", s.kind}, {"detail", s.detail}});
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& v : pc.count.variants)
      sweep.push_back({{"variant", v.name}, {"T", v.T}, {"mesh", v.mesh}, {"multistart", v.multistart},
                       {"raw_count", v.raw_count}, {"sigma", v.sigma}, {"reliable", v.reliable}});
    counts.push_back({{"x_id", pc.x}, {"y_id", pc.y}, {"K", pc.K}, {"raw_count", pc.count.base.raw_count},
                      {"sigma", pc.count.base.sigma}, {"coverage", pc.count.base.coverage},
                      {"reliable", pc.count.base.reliable}, {"stable", pc.count.stable},
                      {"representatives", reps}, {"seeds", seeds}, {"stability_sweep", sweep}});
  }
  j["connections"] = counts;
  j["counts_stable"] = r.counts_stable;
  if (r.complex) j["complex"] = *r.complex;
  nlohmann::json hom = nlohmann::json::object();
  for (const auto& [k, v] : r.homology) hom[std::to_string(k)] = v;
  j["homology_ranks"] = hom;
  j["failures"] = r.failures;
}

void to_json(nlohmann::json& j, const ContinuationReport& r) {
  j["shift"] = r.shift;
  j["K"] = r.K;
  j["source"] = r.source;
  j["target"] = r.target;
  nlohmann::json hc = nlohmann::json::array();
  for (const auto& c : r.hybrid_counts) hc.push_back({{"x_id", c.from}, {"y_id", c.to}, {"raw_count", c.count}});
  j["hybrid_counts"] = hc;
  if (r.psi) j["psi"] = *r.psi;
  j["chain_map"] = r.chain_map;
  j["unitriangular"] = r.unitriangular;
  j["inverse_ok"] = r.inverse_ok;
  nlohmann::json ir = nlohmann::json::object();
  for (const auto& [k, v] : r.induced_ranks) ir[std::to_string(k)] = v;
  j["induced_homology_ranks"] = ir;
  j["isomorphism"] = r.isomorphism;
  j["failures"] = r.failures;
}

StageReport stage_estimates(const ExperimentConfig& cfg) {
  StageReport out{"estimates"};
  const auto& e = cfg.estimates;
  const auto ks = log_grid(e.k_min, e.k_max, e.points);
  CsvTable slopes{"estimates_slopes", {"series", "params", "slope", "target", "intercept", "residual"}, {}};
  nlohmann::json G = nlohmann::json::array();
  for (const auto& p : e.lemma_G) {
    const DecayFit fit = fit_lemma_G(p[0], p[1], p[2], ks);
    G.push_back({{"alpha", p[0]}, {"beta", p[1]}, {"gamma", p[2]}, {"target_slope", -p[2]}, {"fit", fit}});
    slopes.rows.push_back({"G", fmt(p[0]) + ";" + fmt(p[1]) + ";" + fmt(p[2]), fmt(fit.slope), fmt(-p[2]),
                           fmt(fit.intercept), fmt(fit.residual)});
  }
  nlohmann::json F = nlohmann::json::array();
  for (double s : e.F_s) {
    const double r = s + e.r_offset;
    const DecayFit fit = fit_F(s, r, ks);
    F.push_back({{"s", s}, {"r", r}, {"target_slope", -2.0 * (1.0 - s)}, {"fit", fit}});
    slopes.rows.push_back({"F", fmt(s) + ";" + fmt(r), fmt(fit.slope), fmt(-2.0 * (1.0 - s)), fmt(fit.intercept),
                           fmt(fit.residual)});
  }
  nlohmann::json ineq = nlohmann::json::array();
  CsvTable ratios{"estimates_inequalities", {"kind", "K", "max_ratio"}, {}};
  for (const auto& name : e.inequalities) {
    const auto rep = verify_norm_inequality(inequality_kind_from_string(name), cfg.s, cfg.s + e.r_offset, e.samples,
                                            e.inequality_K, std::nullopt, cfg.seed);
    ineq.push_back({{"kind", name}, {"report", rep}});
    for (const auto& row : rep.rows) ratios.rows.push_back({name, std::to_string(row.K), fmt(row.max_ratio)});
  }
  out.report = {{"ks", ks}, {"lemma_G", G}, {"F", F}, {"norm_inequalities", ineq}};
  out.tables = {slopes, ratios};
  return out;
}

StageReport stage_operators(const ExperimentConfig& cfg) {
  StageReport out{"operators"};
  const auto& o = cfg.operators;
  nlohmann::json L = nlohmann::json::array();
  CsvTable Lt{"operators_L", {"n", "K", "s", "max_eig_error", "kernel_dim", "minus_dim", "plus_dim"}, {}};
  for (int n : o.L_n)
    for (int K : o.L_K)
      for (double s : o.L_s) {
        const auto P = spectral_projectors(assemble_L(n, K, s));
        double err = 0.0;
        for (Eigen::Index i = 0; i < P.eigenvalues.size(); ++i) {
          const double ev = P.eigenvalues(i);
          err = std::max(err, std::min({std::abs(ev + 1.0), std::abs(ev), std::abs(ev - 1.0)}));
        }
        const bool ok = err < 1e-10 && P.zero_basis.dim() == 2 * n && P.minus_basis.dim() == 2 * K * n &&
                        P.plus_basis.dim() == 2 * K * n;
        if (!ok) {
          std::ostringstream msg;
          msg << "L eigenstructure wrong at n=" << n << " K=" << K << " s=" << s;
          out.failures.push_back(msg.str());
        }
        L.push_back({{"n", n}, {"K", K}, {"s", s}, {"max_eig_error", err}, {"kernel_dim", P.zero_basis.dim()},
                     {"minus_dim", P.minus_basis.dim()}, {"plus_dim", P.plus_basis.dim()}, {"ok", ok}});
        Lt.rows.push_back({std::to_string(n), std::to_string(K), fmt(s), fmt(err), std::to_string(P.zero_basis.dim()),
                           std::to_string(P.minus_basis.dim()), std::to_string(P.plus_basis.dim())});
      }
  const MatrixLoop A = rotation_loop(o.commutator_alpha);
  nlohmann::json comm = nlohmann::json::object();
  CsvTable Ct{"operators_commutator", {"variant", "K", "sigma1", "sigma20_over_sigma1"}, {}};
  for (auto [variant, name] : {std::pair{CommutatorVariant::DerivativeInside, "derivative_inside"},
                               std::pair{CommutatorVariant::DerivativeOutside, "derivative_outside"}}) {
    std::vector<LinearOperatorMatrix> sweep;
    for (int K : o.commutator_K) sweep.push_back(commutator_operator(A, o.commutator_s, K, variant, o.commutator_r));
    const auto sig = compactness_signature(sweep);
    nlohmann::json spectra = nlohmann::json::array();
    for (const auto& op : sweep) {
      const auto sr = spectrum_report(op, o.commutator_s, o.commutator_r);
      spectra.push_back(sr);
      const auto& sv = sr.top_singular_values;
      Ct.rows.push_back({name, std::to_string(sr.K), fmt(sv.empty() ? 0.0 : sv.front()),
                         fmt(sv.size() >= 20 && sv.front() > 0 ? sv[19] / sv.front() : 0.0)});
    }
    comm[name] = {{"Ks", sig.Ks}, {"sigma1", sig.sigma1}, {"head_variation", sig.head_variation},
                  {"tail_ratio", sig.tail_ratio}, {"compact", sig.compact()}, {"spectra", spectra}};
    if (variant == CommutatorVariant::DerivativeInside && !sig.compact())
      out.failures.push_back(std::string("commutator compactness signature not met (") + name + ")");
  }
  out.report = {{"L", L}, {"commutator", comm}};
  out.tables = {Lt, Ct};
  return out;
}

StageReport stage_critical_points(const ExperimentConfig& cfg) {
  StageReport out{"critical-points"};
  const MorseReport m = run_morse(cfg, cfg.hamiltonian, MorseStages{false, false, {}});
  out.report = m;
  out.failures = m.failures;
  CsvTable t{"critical_points", {"id", "action", "residual", "relative_index", "hyperbolicity_gap", "degenerate"}, {}};
  for (const auto& cp : m.points)
    t.rows.push_back({cp.id, fmt(cp.action), fmt(cp.residual), std::to_string(cp.relative_index),
                      fmt(cp.hyperbolicity_gap), cp.degenerate ? "1" : "0"});
  out.tables = {t};
  return out;
}

StageReport stage_flow(const ExperimentConfig& cfg) {
  StageReport out{"flow"};
  const MorseReport m = run_morse(cfg, cfg.hamiltonian, MorseStages{false, false, {}});
  out.failures = m.failures;
  if (!m.failures.empty()) {
    out.report = {{"critical_points", m}};
    return out;
  }
  const int K = *std::min_element(cfg.k_sweep.begin(), cfg.k_sweep.end());
  const FinderOptions fo = finder_options(cfg);
  const ActionFunctional A(cfg.hamiltonian, K, cfg.s, cfg.winding, fo.quadrature_points);
  const GradientField field(A);
  std::vector<RestPoint> rest;
  for (const auto& cp : m.points) {
    const Eigen::VectorXd z = refine_at(cfg.hamiltonian, cp, K, fo);
    rest.push_back({cp.id, z, A.value(z), cp.relative_index});
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> N01;
  std::vector<Eigen::VectorXd> cloud;
  for (int i = 0; i < cfg.flow.cloud; ++i) {
    const Eigen::VectorXd& c = rest.empty() ? Eigen::VectorXd::Zero(A.size()).eval() : rest[static_cast<std::size_t>(i) % rest.size()].z;
    Eigen::VectorXd v(A.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = N01(rng);
    cloud.push_back(c + cfg.flow.cloud_radius * v / A.metric_norm(v));
  }
  FlowOptions fopt;
  fopt.t_end = cfg.flow.t_end;
  ExponentialIntegrator integ(field);
  std::vector<Trajectory> family;
  CsvTable tt{"flow_trajectories", {"start", "steps", "rejected", "final_action", "max_action_increase", "stop"}, {}};
  nlohmann::json trs = nlohmann::json::array();
  double worst_increase = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    try {
      Trajectory tr = integ.integrate(cloud[i], fopt);
      worst_increase = std::max(worst_increase, tr.max_action_increase);
      trs.push_back({{"start", i}, {"steps", tr.steps.size()}, {"rejected", tr.rejected_steps},
                     {"initial_action", tr.actions.front()}, {"final_action", tr.actions.back()},
                     {"max_action_increase", tr.max_action_increase}, {"stop_reason", tr.stop_reason}});
      tt.rows.push_back({std::to_string(i), std::to_string(tr.steps.size()), std::to_string(tr.rejected_steps),
                         fmt(tr.actions.back()), fmt(tr.max_action_increase), tr.stop_reason});
      family.push_back(std::move(tr));
    } catch (const StepCollapse& e) {
      out.failures.push_back(std::string("flow: ") + e.what());
    }
  }
  if (worst_increase > 1e-10) out.failures.push_back("flow: action increased by " + fmt(worst_increase));
  const auto chain = detect_breaking(family, rest, A.metric(), A.dim(), cfg.bvp.capture_radius);
  std::vector<double> rt = cfg.flow.report_times;
  const auto tails = vertical_tail_diagnostic(field, cloud, cfg.flow.t_end, cfg.flow.k0, rt, fopt);
  nlohmann::json tj = nlohmann::json::array();
  CsvTable tailt{"flow_tail", {"t", "k0", "max_tail_energy", "max_tail_ratio"}, {}};
  for (const auto& row : tails) {
    tj.push_back({{"t", row.t}, {"k0", row.k0}, {"max_tail_energy", row.max_tail_energy},
                  {"max_tail_ratio", row.max_tail_ratio}});
    tailt.rows.push_back({fmt(row.t), std::to_string(row.k0), fmt(row.max_tail_energy), fmt(row.max_tail_ratio)});
  }
  out.report = {{"K", K},
                {"trajectories", trs},
                {"max_action_increase", worst_increase},
                {"longest_chain", {{"ids", chain.ids}, {"actions", chain.actions},
                                   {"action_decreasing", chain.action_decreasing}}},
                {"vertical_tail", tj}};
  out.tables = {tt, tailt};
  return out;
}

namespace {

CsvTable counts_table(const MorseReport& m) {
  CsvTable t{"connections", {"x_id", "y_id", "K", "raw_count", "sigma", "coverage", "stable"}, {}};
  for (const auto& pc : m.counts)
    t.rows.push_back({pc.x, pc.y, std::to_string(pc.K), std::to_string(pc.count.base.raw_count),
                      std::to_string(pc.count.base.sigma), fmt(pc.count.base.coverage), pc.count.stable ? "1" : "0"});
  return t;
}

}  // namespace

StageReport stage_connections(const ExperimentConfig& cfg) {
  StageReport out{"connections"};
  const MorseReport m = run_morse(cfg, cfg.hamiltonian, MorseStages{true, false, {}});
  out.report = m;
  out.failures = m.failures;
  out.tables = {counts_table(m)};
  return out;
}

StageReport stage_complex(const ExperimentConfig& cfg) {
  StageReport out{"complex"};
  const MorseReport m = run_morse(cfg, cfg.hamiltonian, MorseStages{true, true, {}});
  out.report = m;
  out.failures = m.failures;
  CsvTable h{"homology", {"degree", "rank"}, {}};
  for (const auto& [k, r] : m.homology) h.rows.push_back({std::to_string(k), std::to_string(r)});
  out.tables = {counts_table(m), h};
  return out;
}

StageReport stage_continuation(const ExperimentConfig& cfg) {
  StageReport out{"continuation"};
  if (!cfg.continuation.target) throw ConfigError("config: field 'continuation.target' is required for continuation");
  const ContinuationReport r = run_continuation(cfg, cfg.hamiltonian, *cfg.continuation.target, cfg.continuation.shift);
  out.report = r;
  out.failures = r.failures;
  CsvTable t{"hybrid_counts", {"x_id", "y_id", "raw_count"}, {}};
  for (const auto& c : r.hybrid_counts) t.rows.push_back({c.from, c.to, std::to_string(c.count)});
  out.tables = {t};
  return out;
}

StageReport stage_homogenize(const ExperimentConfig& cfg) {
  StageReport out{"homogenize"};
  Eigen::MatrixXd rot(2, 2);
  rot << 0.0, -1.0, 1.0, 0.0;
  const Eigen::MatrixXd shrink = -Eigen::MatrixXd::Identity(2, 2);
  const auto rows = homogenize_compare(SwitchedFieldSpec::linear(rot, shrink), cfg.homogenize.T, cfg.homogenize.n);
  nlohmann::json rj = nlohmann::json::array();
  CsvTable t{"homogenize", {"n", "sup_error"}, {}};
  for (const auto& r : rows) {
    rj.push_back({{"n", r.n}, {"sup_error", r.sup_error}});
    t.rows.push_back({std::to_string(r.n), fmt(r.sup_error)});
  }
  const double slope = rows.size() >= 2 ? fit_log_slope(rows) : 0.0;
  out.report = {{"pair", "rotation / minus identity"}, {"T", cfg.homogenize.T}, {"rows", rj}, {"log_slope", slope}};
  if (rows.size() >= 2 && !(rows.back().sup_error < rows.front().sup_error))
    out.failures.push_back("homogenization error does not decrease with n");
  out.tables = {t};
  return out;
}

}  // namespace cotmorse
