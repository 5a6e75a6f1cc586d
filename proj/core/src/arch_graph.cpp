#include "coedge/arch_graph.hpp"

#include "coedge/errors.hpp"
#include "coedge/json_util.hpp"

namespace coedge {

ArchGraph build_graph(const Architecture& arch, const SystemConfig& sys,
                      const LatencyLUT& lut) {
  const PerfReport report = estimate_cost(arch, sys, lut);
  const std::vector<double> z = zscore_normalize(report.per_layer_ms);

  const int ops = static_cast<int>(arch.layers.size());
  ArchGraph g;
  g.node_count = ops + 1;
  const int global = ops;

  g.features.assign(g.node_count, {});
  g.node_tags.resize(g.node_count);
  for (int i = 0; i < ops; ++i) {
    g.node_tags[i] = static_cast<int>(arch.layers[i].op);
    g.features[i][g.node_tags[i]] = 1.0f;
    g.features[i][kLatencyFeature] = static_cast<float>(z[i]);
  }
  g.node_tags[global] = kGlobalNodeOneHot;
  g.features[global][kGlobalNodeOneHot] = 1.0f;

  for (int v = 0; v < g.node_count; ++v) g.edges.push_back({v, v});
  for (int i = 0; i < ops; ++i) g.edges.push_back({i, i + 1});  // dataflow path
  for (int i = 0; i < ops; ++i) g.edges.push_back({i, global});
  return g;
}

nlohmann::json graph_to_json(const ArchGraph& g) {
  json nodes = json::array();
  for (int v = 0; v < g.node_count; ++v) {
    json feats = json::array();
    for (float x : g.features[v]) feats.push_back(x);
    const std::string name = g.node_tags[v] == kGlobalNodeOneHot
                                 ? "global"
                                 : op_name(static_cast<OpKind>(g.node_tags[v]));
    nodes.push_back(json{{"op", name}, {"features", feats}});
  }
  json edges = json::array();
  for (const auto& [s, d] : g.edges) edges.push_back(json::array({s, d}));
  json out{{"nodes", nodes}, {"edges", edges}};
  if (g.true_latency_ms) out["true_latency_ms"] = *g.true_latency_ms;
  return out;
}

ArchGraph graph_from_json(const nlohmann::json& j) {
  require_object(j, {"nodes", "edges", "true_latency_ms"}, "graph");
  ArchGraph g;
  const json& nodes = require_field(j, "nodes", "graph");
  g.node_count = static_cast<int>(nodes.size());
  for (const auto& n : nodes) {
    require_object(n, {"op", "features"}, "graph node");
    const std::string name = require_field(n, "op", "graph node").get<std::string>();
    g.node_tags.push_back(name == "global" ? kGlobalNodeOneHot
                                           : static_cast<int>(op_from_name(name)));
    const json& feats = require_field(n, "features", "graph node");
    if (feats.size() != kGraphFeatureDim) {
      throw JsonSchemaError("graph node: expected 8 features");
    }
    std::array<float, kGraphFeatureDim> f{};
    for (int c = 0; c < kGraphFeatureDim; ++c) f[c] = feats[c].get<float>();
    g.features.push_back(f);
  }
  for (const auto& e : require_field(j, "edges", "graph")) {
    if (!e.is_array() || e.size() != 2) throw JsonSchemaError("graph edge: expected [src, dst]");
    g.edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  if (j.contains("true_latency_ms")) g.true_latency_ms = j["true_latency_ms"].get<double>();
  return g;
}

}  // namespace coedge
