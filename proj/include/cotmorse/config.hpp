#pragma once

// Experiment configuration: JSON files that may extend a defaults file.  All
// values come from the files; the loader rejects missing fields.

#include "cotmorse/action.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotmorse {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ToleranceConfig {
  double newton = 0.0;
  double critical_dedup = 0.0;
  double dedup = 0.0;          // connection paths
  double rank = 0.0;
  double hyperbolicity = 0.0;
};

struct BvpConfig {
  double T = 0.0;
  int mesh = 0;
  int multistart = 0;
  double residual_tol = 0.0;
  double defect_tol = 0.0;
  double shoot_offset = 0.0;
  double seed_perturbation = 0.0;
  double capture_radius = 0.0;
  double shoot_t_max = 0.0;
  double coverage_min = 0.0;
  bool sweep = true;
};

struct EstimatesConfig {
  std::vector<std::array<double, 3>> lemma_G;  // (alpha, beta, gamma)
  std::vector<double> F_s;
  double r_offset = 0.0;                       // r = s + r_offset
  double k_min = 0.0;
  double k_max = 0.0;
  int points = 0;
  std::vector<std::string> inequalities;
  std::vector<int> inequality_K;
  int samples = 0;
};

struct OperatorsConfig {
  std::vector<int> L_n;
  std::vector<int> L_K;
  std::vector<double> L_s;
  double commutator_alpha = 0.0;
  double commutator_s = 0.0;
  double commutator_r = 0.0;
  std::vector<int> commutator_K;
};

struct FlowConfig {
  double t_end = 0.0;
  int cloud = 0;
  double cloud_radius = 0.0;
  std::vector<int> k0;
  std::vector<double> report_times;
};

struct HomogenizeConfig {
  double T = 0.0;
  std::vector<int> n;
};

struct ContinuationConfig {
  std::optional<HamiltonianSpec> target;
  std::optional<double> shift;  // null: smallest shift making the target dominate
};

struct ExperimentConfig {
  nlohmann::json source;  // merged config, embedded in every report
  HamiltonianSpec hamiltonian;
  double s = 0.0;
  std::vector<int> k_sweep;
  WindingVector winding;
  int seed_q_points = 0;
  std::vector<double> seed_p_offsets;
  ToleranceConfig tol;
  BvpConfig bvp;
  double perturbation_amplitude = 0.0;
  EstimatesConfig estimates;
  OperatorsConfig operators;
  FlowConfig flow;
  HomogenizeConfig homogenize;
  ContinuationConfig continuation;
  std::string output_dir;
  std::uint64_t seed = 0;
};

// Reads `path`, resolves "extends" relative to the file, merges and parses.
ExperimentConfig load_config(const std::filesystem::path& path);

// Parses an already merged document.
ExperimentConfig parse_config(const nlohmann::json& merged);

// Reads one JSON file, turning parse errors into ConfigError with line:column.
nlohmann::json read_json_file(const std::filesystem::path& path);

// Hamiltonian from a config node: {"preset": "pendulum", "eps": ...},
// {"preset": "free", "n": ...} or an explicit {"n", "U", "theta"} spec.
HamiltonianSpec hamiltonian_from_config(const nlohmann::json& j, const std::string& where);

}  // namespace cotmorse
