// Config-driven experiment runner.  Exit codes: 0 ok, 2 acceptance failure,
// 3 config error.

#include "cotmorse/config.hpp"
#include "cotmorse/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cotmorse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAcceptance = 2;
constexpr int kExitConfig = 3;

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

void write_table(const fs::path& dir, const CsvTable& t) {
  std::ofstream out(dir / (t.name + ".csv"));
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << csv_cell(t.header[i]);
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
    out << "\n";
  }
}

void write_stage(const fs::path& dir, const StageReport& st, const nlohmann::json& config) {
  fs::create_directories(dir);
  nlohmann::json doc{{"stage", st.stage}, {"config", config}, {"ok", st.ok()}, {"failures", st.failures},
                     {"report", st.report}};
  std::ofstream(dir / (st.stage + ".json")) << doc.dump(2) << "\n";
  for (const auto& t : st.tables) write_table(dir, t);
}

std::vector<int> parse_k_sweep(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size() || k <= 0) throw std::invalid_argument(item);
      out.push_back(k);
    } catch (const std::exception&) {
      throw ConfigError("--k-sweep: '" + item + "' is not a positive integer");
    }
  }
  if (out.empty()) throw ConfigError("--k-sweep: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Morse complexes of Hamiltonian action functionals on truncated loop spaces"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string k_sweep;
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--seed", seed, "random seed (overrides seed)");
  app.add_option("--k-sweep", k_sweep, "comma separated truncations, e.g. 8,16,32");

  using Stage = std::function<StageReport(const ExperimentConfig&)>;
  const std::vector<std::pair<std::string, Stage>> stages{
      {"estimates", stage_estimates},       {"operators", stage_operators}, {"critical-points", stage_critical_points},
      {"flow", stage_flow},                 {"connections", stage_connections}, {"complex", stage_complex},
      {"continuation", stage_continuation}, {"homogenize", stage_homogenize}};
  for (const auto& [name, fn] : stages) app.add_subcommand(name, "run the " + name + " stage");
  app.add_subcommand("all", "run every stage (continuation only if a target is configured)");
  app.get_option("--config")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string which = app.get_subcommands().front()->get_name();

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    nlohmann::json src = cfg.source;
    if (!out_dir.empty()) src["output_dir"] = out_dir;
    if (seed) src["seed"] = *seed;
    if (!k_sweep.empty()) src["k_sweep"] = parse_k_sweep(k_sweep);
    cfg = parse_config(src);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::vector<std::pair<std::string, Stage>> run;
  for (const auto& st : stages)
    if (which == "all" ? (st.first != "continuation" || cfg.continuation.target) : st.first == which) run.push_back(st);

  bool ok = true;
  for (const auto& [name, fn] : run) {
    std::cerr << "[" << name << "]\n";
    StageReport rep;
    try {
      rep = fn(cfg);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const std::exception& e) {
      rep.stage = name;
      rep.failures.push_back(std::string("stage aborted: ") + e.what());
    }
    write_stage(cfg.output_dir, rep, cfg.source);
    for (const auto& f : rep.failures) std::cerr << "  FAIL " << f << "\n";
    ok = ok && rep.ok();
  }
  return ok ? kExitOk : kExitAcceptance;
}
