#pragma once

#include <array>
#include <optional>
#include <vector>

#include <json.hpp>

#include "coedge/arch.hpp"
#include "coedge/perf.hpp"

namespace coedge {

// Feature layout: 7-way one-hot over the six op kinds plus the global node,
// then one z-scored latency scalar.
constexpr int kGraphFeatureDim = 8;
constexpr int kGlobalNodeOneHot = 6;
constexpr int kLatencyFeature = 7;

// Directed abstraction of an architecture: one node per layer in dataflow
// order, a global readout node at the end, self-loops everywhere, and an
// in-edge from every op node to the global node. Edges are a multiset; the
// last op node feeds the global node both as the path terminus and as a
// readout in-edge.
struct ArchGraph {
  int node_count = 0;  // ops + 1 global
  std::vector<std::pair<int, int>> edges;
  std::vector<std::array<float, kGraphFeatureDim>> features;
  std::vector<int> node_tags;  // op kind per node, kGlobalNodeOneHot for global
  std::optional<double> true_latency_ms;
};

// The latency feature is the z-score, across this graph's op nodes, of the
// per-layer latencies produced by estimate_cost (Communicate layers use the
// analytic comm latency). The global node's latency feature is 0.
ArchGraph build_graph(const Architecture& arch, const SystemConfig& sys,
                      const LatencyLUT& lut);

nlohmann::json graph_to_json(const ArchGraph& g);
ArchGraph graph_from_json(const nlohmann::json& j);

}  // namespace coedge
