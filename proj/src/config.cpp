#include "cotmorse/config.hpp"

#include <fstream>
#include <sstream>

namespace cotmorse {

namespace {

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Recursive merge: objects merge key by key, everything else replaces.
void merge_into(nlohmann::json& base, const nlohmann::json& over) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

nlohmann::json load_merged(const std::filesystem::path& path, int depth) {
  if (depth > 8) throw ConfigError(path.string() + ": \"extends\" chain too deep");
  nlohmann::json doc = read_json_file(path);
  if (!doc.is_object()) throw ConfigError(path.string() + ": top level must be an object");
  if (!doc.contains("extends")) return doc;
  if (!doc["extends"].is_string()) throw ConfigError(path.string() + ": field 'extends' must be a string");
  nlohmann::json base = load_merged(path.parent_path() / doc["extends"].get<std::string>(), depth + 1);
  doc.erase("extends");
  merge_into(base, doc);
  return base;
}

// Field access with dotted-path error messages.
class Reader {
public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const nlohmann::json& node(const std::string& key) const {
    if (!j_.is_object() || !j_.contains(key)) throw ConfigError("config: missing field '" + full(key) + "'");
    return j_.at(key);
  }
  Reader sub(const std::string& key) const {
    const auto& n = node(key);
    if (!n.is_object()) throw ConfigError("config: field '" + full(key) + "' must be an object");
    return Reader(n, full(key));
  }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  template <class T>
  T get(const std::string& key) const {
    const auto& n = node(key);
    try {
      return n.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: field '" + full(key) + "' has the wrong type (got " + n.type_name() + ")");
    }
  }
  double positive(const std::string& key) const {
    const double v = get<double>(key);
    if (!(v > 0)) throw ConfigError("config: field '" + full(key) + "' must be positive");
    return v;
  }
  int positive_int(const std::string& key) const {
    const int v = get<int>(key);
    if (v <= 0) throw ConfigError("config: field '" + full(key) + "' must be a positive integer");
    return v;
  }
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const nlohmann::json& raw() const { return j_; }

private:
  const nlohmann::json& j_;
  std::string path_;
};

}  // namespace

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::ostringstream msg;
    msg << path.string() << ":" << line << ":" << col << ": parse error: " << e.what();
    throw ConfigError(msg.str());
  }
}

HamiltonianSpec hamiltonian_from_config(const nlohmann::json& j, const std::string& where) {
  const Reader r(j, where);
  if (r.has("preset")) {
    const auto preset = r.get<std::string>("preset");
    if (preset == "pendulum") {
      HamiltonianSpec H = pendulum_hamiltonian(r.get<double>("eps"));
      if (r.has("eps_sin4")) {
        // symmetry-breaking term eps' sin(4 pi q)
        auto terms = H.U.terms();
        terms.push_back(TrigTerm{0, {2}, 0.0, r.get<double>("eps_sin4")});
        H = HamiltonianSpec(1, {}, TrigSeries(1, terms), H.note + " + eps' sin 4 pi q");
      }
      return H;
    }
    if (preset == "free") return free_hamiltonian(r.positive_int("n"));
    if (preset == "two_torus") {
      // U = eps (cos 2 pi q1 + cos 2 pi q2)
      const double eps = r.get<double>("eps");
      std::vector<TrigTerm> terms{TrigTerm{0, {1, 0}, eps, 0.0}, TrigTerm{0, {0, 1}, eps, 0.0}};
      return HamiltonianSpec(2, {}, TrigSeries(2, terms), "eps (cos 2 pi q1 + cos 2 pi q2)");
    }
    throw ConfigError("config: field '" + r.full("preset") + "' has unknown value '" + preset + "'");
  }
  r.positive_int("n");
  try {
    return hamiltonian_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError("config: field '" + where + "' is not a valid Hamiltonian: " + e.what());
  }
}

ExperimentConfig parse_config(const nlohmann::json& merged) {
  ExperimentConfig c;
  c.source = merged;
  const Reader root(merged, "");
  c.hamiltonian = hamiltonian_from_config(root.node("hamiltonian"), "hamiltonian");
  c.s = root.get<double>("s");
  if (!(c.s > 0.5 && c.s < 0.75)) throw ConfigError("config: field 's' must lie in (1/2, 3/4)");
  c.k_sweep = root.get<std::vector<int>>("k_sweep");
  if (c.k_sweep.empty()) throw ConfigError("config: field 'k_sweep' must be nonempty");
  for (int K : c.k_sweep)
    if (K <= 0) throw ConfigError("config: field 'k_sweep' entries must be positive");
  const auto w = root.get<std::vector<int>>("winding");
  if (static_cast<int>(w.size()) != c.hamiltonian.n)
    throw ConfigError("config: field 'winding' must have one entry per degree of freedom");
  c.winding = Eigen::Map<const Eigen::VectorXi>(w.data(), static_cast<Eigen::Index>(w.size()));

  const Reader seeds = root.sub("seeds");
  c.seed_q_points = seeds.positive_int("q_points");
  c.seed_p_offsets = seeds.get<std::vector<double>>("p_offsets");

  const Reader tol = root.sub("tolerances");
  c.tol.newton = tol.positive("newton");
  c.tol.critical_dedup = tol.positive("critical_dedup");
  c.tol.dedup = tol.positive("dedup");
  c.tol.rank = tol.positive("rank");
  c.tol.hyperbolicity = tol.positive("hyperbolicity");

  const Reader bvp = root.sub("bvp");
  c.bvp.T = bvp.positive("T");
  c.bvp.mesh = bvp.positive_int("mesh");
  if (c.bvp.mesh % 2) throw ConfigError("config: field 'bvp.mesh' must be even");
  c.bvp.multistart = bvp.positive_int("multistart");
  c.bvp.residual_tol = bvp.positive("residual_tol");
  c.bvp.defect_tol = bvp.positive("defect_tol");
  c.bvp.shoot_offset = bvp.positive("shoot_offset");
  c.bvp.seed_perturbation = bvp.positive("seed_perturbation");
  c.bvp.capture_radius = bvp.positive("capture_radius");
  c.bvp.shoot_t_max = bvp.positive("shoot_t_max");
  c.bvp.coverage_min = bvp.positive("coverage_min");
  c.bvp.sweep = bvp.get<bool>("stability_sweep");

  c.perturbation_amplitude = root.sub("perturbation").get<double>("amplitude");
  if (c.perturbation_amplitude < 0) throw ConfigError("config: field 'perturbation.amplitude' must be >= 0");

  const Reader est = root.sub("estimates");
  c.estimates.lemma_G = est.get<std::vector<std::array<double, 3>>>("lemma_G");
  c.estimates.F_s = est.get<std::vector<double>>("F_s");
  c.estimates.r_offset = est.positive("r_offset");
  c.estimates.k_min = est.positive("k_min");
  c.estimates.k_max = est.positive("k_max");
  c.estimates.points = est.positive_int("points");
  c.estimates.inequalities = est.get<std::vector<std::string>>("inequalities");
  c.estimates.inequality_K = est.get<std::vector<int>>("inequality_K");
  c.estimates.samples = est.positive_int("samples");

  const Reader ops = root.sub("operators");
  c.operators.L_n = ops.get<std::vector<int>>("L_n");
  c.operators.L_K = ops.get<std::vector<int>>("L_K");
  c.operators.L_s = ops.get<std::vector<double>>("L_s");
  c.operators.commutator_alpha = ops.get<double>("commutator_alpha");
  c.operators.commutator_s = ops.positive("commutator_s");
  c.operators.commutator_r = ops.positive("commutator_r");
  c.operators.commutator_K = ops.get<std::vector<int>>("commutator_K");

  const Reader flow = root.sub("flow");
  c.flow.t_end = flow.positive("t_end");
  c.flow.cloud = flow.positive_int("cloud");
  c.flow.cloud_radius = flow.positive("cloud_radius");
  c.flow.k0 = flow.get<std::vector<int>>("k0");
  c.flow.report_times = flow.get<std::vector<double>>("report_times");

  const Reader hom = root.sub("homogenize");
  c.homogenize.T = hom.positive("T");
  c.homogenize.n = hom.get<std::vector<int>>("n");

  const Reader cont = root.sub("continuation");
  if (!cont.node("target").is_null())
    c.continuation.target = hamiltonian_from_config(cont.node("target"), "continuation.target");
  if (!cont.node("shift").is_null()) c.continuation.shift = cont.get<double>("shift");

  c.output_dir = root.get<std::string>("output_dir");
  c.seed = root.get<std::uint64_t>("seed");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(load_merged(path, 0)); }

}  // namespace cotmorse
