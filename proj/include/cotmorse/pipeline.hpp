#pragma once

// End-to-end experiment stages shared by the CLI and the acceptance driver.

#include "cotmorse/action.hpp"
#include "cotmorse/complex.hpp"
#include "cotmorse/config.hpp"
#include "cotmorse/connections.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cotmorse {

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows{};
};

// Output of one stage.  `failures` lists acceptance-relevant problems; a
// nonempty list maps to exit status 2.
struct StageReport {
  std::string stage;
  nlohmann::json report{};
  std::vector<CsvTable> tables{};
  std::vector<std::string> failures{};

  bool ok() const { return failures.empty(); }
};

FinderOptions finder_options(const ExperimentConfig& cfg);
SeedGrid seed_grid(const ExperimentConfig& cfg);
CountOptions count_options(const ExperimentConfig& cfg);

struct PairCount {
  std::string x;
  std::string y;
  int K = 0;
  StableCount count;
};

struct MorseReport {
  std::vector<CriticalPoint> points;  // found at the smallest K
  std::vector<FailedSeed> failed_seeds;
  std::map<std::string, IndexReport> indices;
  bool degenerate = false;
  bool index_stable = true;
  LowerBound lower_bound;
  bool lower_bound_ok = true;
  std::vector<PairCount> counts;
  bool counts_stable = true;
  std::optional<ChainComplex> complex;
  std::map<int, int> homology;
  std::vector<std::string> failures;
};

struct MorseStages {
  bool connections = true;
  bool complex = true;
  std::vector<int> count_Ks;  // empty: the whole K sweep
};

MorseReport run_morse(const ExperimentConfig& cfg, const HamiltonianSpec& H, const MorseStages& stages);

// Critical point re-solved at truncation K (flat coordinates).
Eigen::VectorXd refine_at(const HamiltonianSpec& H, const CriticalPoint& cp, int K, const FinderOptions& opt);

// Smallest c >= 0 with H0 <= H1 + c on a sample grid of (t, q, p).
double dominance_shift(const HamiltonianSpec& H0, const HamiltonianSpec& H1);
// min over the grid of H1 - H0.
double dominance_margin(const HamiltonianSpec& H0, const HamiltonianSpec& H1);

struct ContinuationReport {
  MorseReport source;
  MorseReport target;
  double shift = 0.0;
  int K = 0;
  std::vector<ConnectionCount> hybrid_counts;
  std::optional<ContinuationMap> psi;
  bool chain_map = false;
  bool unitriangular = false;
  bool inverse_ok = false;
  std::map<int, int> induced_ranks;
  bool isomorphism = false;
  std::vector<std::string> failures;
};

ContinuationReport run_continuation(const ExperimentConfig& cfg, const HamiltonianSpec& H0, const HamiltonianSpec& H1,
                                    std::optional<double> shift);

void to_json(nlohmann::json& j, const MorseReport& r);
void to_json(nlohmann::json& j, const ContinuationReport& r);

StageReport stage_estimates(const ExperimentConfig& cfg);
StageReport stage_operators(const ExperimentConfig& cfg);
StageReport stage_critical_points(const ExperimentConfig& cfg);
StageReport stage_flow(const ExperimentConfig& cfg);
StageReport stage_connections(const ExperimentConfig& cfg);
StageReport stage_complex(const ExperimentConfig& cfg);
StageReport stage_continuation(const ExperimentConfig& cfg);
StageReport stage_homogenize(const ExperimentConfig& cfg);

// Log-spaced integer grid between lo and hi with `points` distinct entries at most.
std::vector<long> log_grid(double lo, double hi, int points);

}  // namespace cotmorse
