#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "coedge/arch.hpp"
#include "coedge/oracle.hpp"
#include "coedge/perf.hpp"
#include "coedge/predictor.hpp"

namespace coedge {

enum class EvaluatorKind { CostEstimate, Predictor };

struct SearchConfig {
  int max_iterations = 2000;      // Stage 1
  int tuning_iterations = 10;     // Stage 2 scale-down passes
  double lambda = 0.0;            // accuracy vs efficiency trade-off knob
  uint64_t seed = 0;
  EvaluatorKind evaluator = EvaluatorKind::CostEstimate;
  int zoo_capacity = 5;           // per leaderboard
  int max_rejection_attempts = 10000;
  double stage2_accuracy_drop = 0.005;  // accept scale-down within half a point
};

struct ScoredArch {
  Architecture arch;
  double accuracy = 0.0;
  double latency_ms = 0.0;
  double energy_j = 0.0;
  double score = 0.0;
  std::string hash;  // full-arch digest, deterministic tie-break key
  // compute split kept for dispatcher re-estimation under new bandwidth
  double device_compute_ms = 0.0;
  double edge_compute_ms = 0.0;
  double comm_ms = 0.0;
};

// accuracy - lambda * (latency / C_lat + energy / C_e). Metrics are
// normalized by the constraint values so magnitudes stay comparable.
double score_value(double accuracy, double latency_ms, double energy_j,
                   const SystemConfig& sys, double lambda);

// Bounded per-objective leaderboards plus the non-dominated set over
// (accuracy up, latency down, energy down). Only constraint-satisfying
// candidates are ever inserted.
class ArchitectureZoo {
 public:
  explicit ArchitectureZoo(int capacity = 5) : capacity_(capacity) {}

  void update(const ScoredArch& cand);
  bool empty() const { return pareto_.empty(); }

  const std::vector<ScoredArch>& best_by_score() const { return best_by_score_; }
  const std::vector<ScoredArch>& best_by_latency() const { return best_by_latency_; }
  const std::vector<ScoredArch>& best_by_energy() const { return best_by_energy_; }
  const std::vector<ScoredArch>& best_by_accuracy() const { return best_by_accuracy_; }
  const std::vector<ScoredArch>& pareto() const { return pareto_; }

  // Union of all leaderboards and the Pareto set, deduplicated by hash.
  std::vector<ScoredArch> all_members() const;

  int capacity() const { return capacity_; }

 private:
  int capacity_;
  std::vector<ScoredArch> best_by_score_;
  std::vector<ScoredArch> best_by_latency_;
  std::vector<ScoredArch> best_by_energy_;
  std::vector<ScoredArch> best_by_accuracy_;
  std::vector<ScoredArch> pareto_;
};

bool dominates(const ScoredArch& a, const ScoredArch& b);

struct SearchStats {
  int iterations = 0;
  int constraint_failures = 0;   // score -1 cases
  int rejection_exhausted = 0;   // iterations that never drew a valid sample
  int64_t samples_drawn = 0;     // total random draws incl. invalid
  int stage2_accepted = 0;
};

struct SearchResult {
  ArchitectureZoo zoo;
  SearchStats stats;
  bool empty_zoo = false;  // no architecture satisfied the constraints
};

// Two-stage constraint-based random search. Stage 1 rejection-samples valid
// architectures, evaluates latency (chosen evaluator) and energy, discards
// constraint violators with score -1, and archives the rest. Stage 2 applies
// scale-down tuning to the incumbent best-by-score, keeping a shrunken
// variant when accuracy drops at most stage2_accuracy_drop and the
// constraints still hold. Fully deterministic for a fixed seed.
SearchResult search(const SpaceConfig& space, const SystemConfig& sys, const LatencyLUT& lut,
                    const AccuracyOracle& oracle, const SearchConfig& cfg,
                    const PredictorModel* predictor = nullptr);

nlohmann::json zoo_to_json(const SearchResult& result, const SystemConfig& sys,
                           const SearchConfig& cfg);
SearchResult zoo_from_json(const nlohmann::json& j, SystemConfig* sys_out = nullptr);

}  // namespace coedge
