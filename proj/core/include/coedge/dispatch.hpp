#pragma once

#include "coedge/perf.hpp"
#include "coedge/search.hpp"

namespace coedge {

// Live conditions the dispatcher adapts to.
struct RuntimeConstraints {
  double latency_budget_ms = 0.0;
  double energy_budget_j = 0.0;
  double current_bandwidth_mbps = 0.0;
};

// A zoo member with its metrics re-estimated at the current bandwidth:
// compute terms are reused from search time, communication terms recomputed.
struct AdjustedMember {
  ScoredArch member;
  double adjusted_latency_ms = 0.0;
  double adjusted_energy_j = 0.0;
};

AdjustedMember reestimate(const ScoredArch& member, const RuntimeConstraints& rc,
                          const SystemConfig& sys);

// Highest-accuracy member meeting both budgets under the current bandwidth.
// Ties break by lower adjusted latency, then lexicographic hash. Throws
// NoFeasibleArchError when nothing fits.
ScoredArch dispatch(const ArchitectureZoo& zoo, const RuntimeConstraints& rc,
                    const SystemConfig& sys, const LatencyLUT& lut);

struct DispatchChoice {
  ScoredArch member;
  double adjusted_latency_ms = 0.0;
  double adjusted_energy_j = 0.0;
  bool fallback = false;  // set when no member fit and best-by-latency was used
};

// dispatch() with the declared infeasibility fallback: fastest member, flagged.
DispatchChoice dispatch_with_fallback(const ArchitectureZoo& zoo, const RuntimeConstraints& rc,
                                      const SystemConfig& sys, const LatencyLUT& lut);

}  // namespace coedge
