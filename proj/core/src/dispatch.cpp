#include "coedge/dispatch.hpp"

#include <algorithm>

#include "coedge/errors.hpp"

namespace coedge {

AdjustedMember reestimate(const ScoredArch& member, const RuntimeConstraints& rc,
                          const SystemConfig& sys) {
  const Architecture& arch = member.arch;
  const MappingScheme mapping = derive_mapping(arch);
  const ShapeTrace trace = infer_shapes(arch);

  double comm_ms = 0.0, tx_ms = 0.0, rx_ms = 0.0;
  for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
    if (arch.layers[i].op != OpKind::Communicate) continue;
    const double ms = comm_latency_ms(transfer_size(arch, i, trace),
                                      rc.current_bandwidth_mbps, sys.rtt_overhead_ms);
    comm_ms += ms;
    (mapping.placement[i] == Placement::Device ? tx_ms : rx_ms) += ms;
  }

  AdjustedMember out;
  out.member = member;
  out.adjusted_latency_ms = member.device_compute_ms + member.edge_compute_ms + comm_ms;
  const DeviceProfile& dev = sys.device;
  out.adjusted_energy_j = dev.power_run_w * member.device_compute_ms / 1000.0 +
                          dev.power_idle_w * member.edge_compute_ms / 1000.0 +
                          dev.power_tx_w * tx_ms / 1000.0 + dev.power_rx_w * rx_ms / 1000.0;
  return out;
}

static bool better_choice(const AdjustedMember& a, const AdjustedMember& b) {
  if (a.member.accuracy != b.member.accuracy) return a.member.accuracy > b.member.accuracy;
  if (a.adjusted_latency_ms != b.adjusted_latency_ms) {
    return a.adjusted_latency_ms < b.adjusted_latency_ms;
  }
  return a.member.hash < b.member.hash;
}

ScoredArch dispatch(const ArchitectureZoo& zoo, const RuntimeConstraints& rc,
                    const SystemConfig& sys, const LatencyLUT& /*lut*/) {
  const std::vector<ScoredArch> members = zoo.all_members();
  if (members.empty()) throw NoFeasibleArchError("dispatch: zoo is empty");

  bool have = false;
  AdjustedMember best;
  for (const auto& m : members) {
    const AdjustedMember adj = reestimate(m, rc, sys);
    if (!(adj.adjusted_latency_ms < rc.latency_budget_ms &&
          adj.adjusted_energy_j < rc.energy_budget_j)) {
      continue;
    }
    if (!have || better_choice(adj, best)) {
      best = adj;
      have = true;
    }
  }
  if (!have) throw NoFeasibleArchError("dispatch: no zoo member fits the budgets");
  return best.member;
}

DispatchChoice dispatch_with_fallback(const ArchitectureZoo& zoo, const RuntimeConstraints& rc,
                                      const SystemConfig& sys, const LatencyLUT& lut) {
  DispatchChoice choice;
  try {
    choice.member = dispatch(zoo, rc, sys, lut);
    const AdjustedMember adj = reestimate(choice.member, rc, sys);
    choice.adjusted_latency_ms = adj.adjusted_latency_ms;
    choice.adjusted_energy_j = adj.adjusted_energy_j;
    return choice;
  } catch (const NoFeasibleArchError&) {
    if (zoo.best_by_latency().empty()) throw;
    // fall back to the fastest member under the current bandwidth
    bool have = false;
    AdjustedMember fastest;
    for (const auto& m : zoo.all_members()) {
      const AdjustedMember adj = reestimate(m, rc, sys);
      if (!have || adj.adjusted_latency_ms < fastest.adjusted_latency_ms ||
          (adj.adjusted_latency_ms == fastest.adjusted_latency_ms &&
           adj.member.hash < fastest.member.hash)) {
        fastest = adj;
        have = true;
      }
    }
    choice.member = fastest.member;
    choice.adjusted_latency_ms = fastest.adjusted_latency_ms;
    choice.adjusted_energy_j = fastest.adjusted_energy_j;
    choice.fallback = true;
    return choice;
  }
}

}  // namespace coedge
