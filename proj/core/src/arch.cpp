#include "coedge/arch.hpp"

#include <algorithm>
#include <set>

#include "coedge/errors.hpp"
#include "coedge/json_util.hpp"
#include "coedge/rng.hpp"

namespace coedge {

LayerSpec sample_layer(int k) {
  LayerSpec l;
  l.op = OpKind::Sample;
  l.setting.sample_k = k;
  return l;
}

LayerSpec aggregate_layer(Reducer r) {
  LayerSpec l;
  l.op = OpKind::Aggregate;
  l.setting.aggregate_reducer = r;
  return l;
}

LayerSpec communicate_layer() {
  LayerSpec l;
  l.op = OpKind::Communicate;
  return l;
}

LayerSpec combine_layer(int out_dim) {
  LayerSpec l;
  l.op = OpKind::Combine;
  l.setting.combine_out_dim = out_dim;
  return l;
}

LayerSpec global_pooling_layer(PoolReducer r) {
  LayerSpec l;
  l.op = OpKind::GlobalPooling;
  l.setting.pooling_reducer = r;
  return l;
}

LayerSpec identity_layer() {
  LayerSpec l;
  l.op = OpKind::Identity;
  return l;
}

// Settings compare only on the fields the op kind actually uses.
static bool setting_equal(OpKind op, const FunctionSetting& a, const FunctionSetting& b) {
  switch (op) {
    case OpKind::Sample:
      return a.sample_k == b.sample_k;
    case OpKind::Aggregate:
      return a.aggregate_reducer == b.aggregate_reducer;
    case OpKind::Combine:
      return a.combine_out_dim == b.combine_out_dim;
    case OpKind::GlobalPooling:
      return a.pooling_reducer == b.pooling_reducer;
    default:
      return true;
  }
}

bool operator==(const FunctionSetting& a, const FunctionSetting& b) {
  return a.sample_k == b.sample_k && a.aggregate_reducer == b.aggregate_reducer &&
         a.combine_out_dim == b.combine_out_dim && a.pooling_reducer == b.pooling_reducer;
}

bool operator==(const LayerSpec& a, const LayerSpec& b) {
  return a.op == b.op && setting_equal(a.op, a.setting, b.setting);
}

bool operator==(const InputSpec& a, const InputSpec& b) {
  return a.num_nodes == b.num_nodes && a.feature_dim == b.feature_dim &&
         a.has_input_graph == b.has_input_graph;
}

bool operator==(const Architecture& a, const Architecture& b) {
  return a.input == b.input && a.layers == b.layers;
}

std::string to_string(ValidityRule r) {
  switch (r) {
    case ValidityRule::V1_ConsecutiveCommunicate:
      return "V1";
    case ValidityRule::V2_AggregateAfterPooling:
      return "V2";
    case ValidityRule::V3_SampleAfterPooling:
      return "V3";
    case ValidityRule::V4_AggregateWithoutEdges:
      return "V4";
    case ValidityRule::V5_PoolingCount:
      return "V5";
    case ValidityRule::V6_TrailingCommunicate:
      return "V6";
  }
  return "?";
}

std::vector<ValidityRule> check_validity(const Architecture& arch) {
  std::set<ValidityRule> hit;
  const auto& layers = arch.layers;
  if (layers.empty()) return {};

  bool seen_pool = false;
  bool seen_sample = false;
  int pool_count = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    switch (layers[i].op) {
      case OpKind::Communicate:
        if (i + 1 < layers.size() && layers[i + 1].op == OpKind::Communicate) {
          hit.insert(ValidityRule::V1_ConsecutiveCommunicate);
        }
        break;
      case OpKind::Aggregate:
        if (seen_pool) hit.insert(ValidityRule::V2_AggregateAfterPooling);
        if (!arch.input.has_input_graph && !seen_sample) {
          hit.insert(ValidityRule::V4_AggregateWithoutEdges);
        }
        break;
      case OpKind::Sample:
        if (seen_pool) hit.insert(ValidityRule::V3_SampleAfterPooling);
        seen_sample = true;
        break;
      case OpKind::GlobalPooling:
        ++pool_count;
        seen_pool = true;
        break;
      default:
        break;
    }
  }
  if (pool_count != 1) hit.insert(ValidityRule::V5_PoolingCount);
  if (layers.back().op == OpKind::Communicate) {
    hit.insert(ValidityRule::V6_TrailingCommunicate);
  }
  return {hit.begin(), hit.end()};
}

std::vector<Placement> layer_placements(const Architecture& arch) {
  std::vector<Placement> placement;
  placement.reserve(arch.layers.size());
  Placement cur = Placement::Device;
  for (const auto& layer : arch.layers) {
    placement.push_back(cur);  // Communicate carries its origin side
    if (layer.op == OpKind::Communicate) cur = other_side(cur);
  }
  return placement;
}

MappingScheme derive_mapping(const Architecture& arch) {
  auto violations = check_validity(arch);
  if (!violations.empty()) {
    std::string msg = "invalid architecture:";
    for (auto v : violations) msg += " " + to_string(v);
    throw InvalidArchitectureError(msg);
  }

  MappingScheme m;
  m.placement = layer_placements(arch);

  int start = 0;
  for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
    if (arch.layers[i].op == OpKind::Communicate) {
      m.segments.push_back({m.placement[start], start, i});
      start = i + 1;
    }
  }
  m.segments.push_back({start < static_cast<int>(m.placement.size())
                            ? m.placement[start]
                            : Placement::Device,
                        start, static_cast<int>(arch.layers.size()) - 1});
  return m;
}

int input_graph_degree(int num_nodes) { return std::min(8, num_nodes - 1); }

ShapeTrace infer_shapes(const Architecture& arch) {
  const std::vector<Placement> placement = layer_placements(arch);

  ShapeTrace trace;
  trace.reserve(arch.layers.size());
  LayerShape s;
  s.num_nodes = arch.input.num_nodes;
  s.feature_dim = arch.input.feature_dim;
  s.edges_present = arch.input.has_input_graph;
  s.edges_origin = Placement::Device;
  s.edge_k = arch.input.has_input_graph ? input_graph_degree(arch.input.num_nodes) : 0;

  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& layer = arch.layers[i];
    switch (layer.op) {
      case OpKind::Sample:
        s.edges_present = true;
        s.edges_origin = placement[i];
        s.edge_k = layer.setting.sample_k;
        break;
      case OpKind::Combine:
        s.feature_dim = layer.setting.combine_out_dim;
        break;
      case OpKind::GlobalPooling:
        s.num_nodes = 1;
        s.edges_present = false;
        s.edge_k = 0;
        break;
      default:
        break;  // Aggregate, Communicate, Identity preserve shape
    }
    trace.push_back(s);
  }
  return trace;
}

Architecture sample_random(const SpaceConfig& space, Rng& rng) {
  Architecture arch;
  arch.input = space.input;
  const int depth = space.depths[rng.below(space.depths.size())];
  arch.layers.reserve(depth);
  for (int i = 0; i < depth; ++i) {
    const auto op = static_cast<OpKind>(rng.below_int(kNumOpKinds));
    LayerSpec l;
    l.op = op;
    switch (op) {
      case OpKind::Sample:
        l.setting.sample_k = rng.choice(space.sample_k_choices);
        break;
      case OpKind::Aggregate:
        l.setting.aggregate_reducer = rng.choice(space.aggregate_reducers);
        break;
      case OpKind::Combine:
        l.setting.combine_out_dim = rng.choice(space.combine_width_choices);
        break;
      case OpKind::GlobalPooling:
        l.setting.pooling_reducer = rng.choice(space.pooling_reducers);
        break;
      default:
        break;
    }
    arch.layers.push_back(l);
  }
  return arch;
}

Architecture scale_down(const Architecture& arch, const SpaceConfig& space, Rng& rng) {
  // Collect layers whose numeric setting has a strictly smaller allowed value.
  struct Shrinkable {
    int layer;
    std::vector<int> smaller;
  };
  std::vector<Shrinkable> options;
  for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
    const auto& l = arch.layers[i];
    std::vector<int> smaller;
    if (l.op == OpKind::Sample) {
      for (int k : space.sample_k_choices) {
        if (k < l.setting.sample_k) smaller.push_back(k);
      }
    } else if (l.op == OpKind::Combine) {
      for (int w : space.combine_width_choices) {
        if (w < l.setting.combine_out_dim) smaller.push_back(w);
      }
    }
    if (!smaller.empty()) options.push_back({i, std::move(smaller)});
  }
  if (options.empty()) return arch;

  const auto& pick = options[rng.below(options.size())];
  Architecture out = arch;
  auto& l = out.layers[pick.layer];
  const int v = pick.smaller[rng.below(pick.smaller.size())];
  if (l.op == OpKind::Sample) {
    l.setting.sample_k = v;
  } else {
    l.setting.combine_out_dim = v;
  }
  return out;
}

// --- names ---

std::string op_name(OpKind op) {
  switch (op) {
    case OpKind::Sample:
      return "sample";
    case OpKind::Aggregate:
      return "aggregate";
    case OpKind::Communicate:
      return "communicate";
    case OpKind::Combine:
      return "combine";
    case OpKind::GlobalPooling:
      return "global_pooling";
    case OpKind::Identity:
      return "identity";
  }
  return "?";
}

OpKind op_from_name(const std::string& name) {
  if (name == "sample") return OpKind::Sample;
  if (name == "aggregate") return OpKind::Aggregate;
  if (name == "communicate") return OpKind::Communicate;
  if (name == "combine") return OpKind::Combine;
  if (name == "global_pooling") return OpKind::GlobalPooling;
  if (name == "identity") return OpKind::Identity;
  throw JsonSchemaError("unknown op '" + name + "'");
}

std::string reducer_name(Reducer r) {
  switch (r) {
    case Reducer::Max:
      return "max";
    case Reducer::Mean:
      return "mean";
    case Reducer::Sum:
      return "sum";
  }
  return "?";
}

static Reducer reducer_from_name(const std::string& s) {
  if (s == "max") return Reducer::Max;
  if (s == "mean") return Reducer::Mean;
  if (s == "sum") return Reducer::Sum;
  throw JsonSchemaError("unknown reducer '" + s + "'");
}

std::string pool_reducer_name(PoolReducer r) {
  return r == PoolReducer::Max ? "max" : "mean";
}

static PoolReducer pool_reducer_from_name(const std::string& s) {
  if (s == "max") return PoolReducer::Max;
  if (s == "mean") return PoolReducer::Mean;
  throw JsonSchemaError("unknown pooling reducer '" + s + "'");
}

// --- JSON ---

nlohmann::json arch_to_json(const Architecture& arch) {
  json layers = json::array();
  for (const auto& l : arch.layers) {
    json jl;
    jl["op"] = op_name(l.op);
    switch (l.op) {
      case OpKind::Sample:
        jl["k"] = l.setting.sample_k;
        break;
      case OpKind::Aggregate:
        jl["reducer"] = reducer_name(l.setting.aggregate_reducer);
        break;
      case OpKind::Combine:
        jl["out_dim"] = l.setting.combine_out_dim;
        break;
      case OpKind::GlobalPooling:
        jl["reducer"] = pool_reducer_name(l.setting.pooling_reducer);
        break;
      default:
        break;
    }
    layers.push_back(jl);
  }
  return json{{"input",
               {{"num_nodes", arch.input.num_nodes},
                {"feature_dim", arch.input.feature_dim},
                {"has_input_graph", arch.input.has_input_graph}}},
              {"layers", layers}};
}

static int positive_int(const json& j, const std::string& key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_number_integer() || v.get<int64_t>() < 1) {
    throw JsonSchemaError(ctx + ": '" + key + "' must be a positive integer");
  }
  return v.get<int>();
}

Architecture arch_from_json(const nlohmann::json& j) {
  require_object(j, {"input", "layers"}, "architecture");
  const json& ji = require_field(j, "input", "architecture");
  require_object(ji, {"num_nodes", "feature_dim", "has_input_graph"}, "input");

  Architecture arch;
  arch.input.num_nodes = positive_int(ji, "num_nodes", "input");
  arch.input.feature_dim = positive_int(ji, "feature_dim", "input");
  const json& hig = require_field(ji, "has_input_graph", "input");
  if (!hig.is_boolean()) throw JsonSchemaError("input: 'has_input_graph' must be a bool");
  arch.input.has_input_graph = hig.get<bool>();

  const json& jl = require_field(j, "layers", "architecture");
  if (!jl.is_array() || jl.empty()) {
    throw JsonSchemaError("architecture: 'layers' must be a nonempty array");
  }
  for (const auto& e : jl) {
    // Setting keys irrelevant to the op are accepted and ignored; anything
    // outside the schema is rejected.
    require_object(e, {"op", "k", "reducer", "out_dim"}, "layer");
    const json& jop = require_field(e, "op", "layer");
    if (!jop.is_string()) throw JsonSchemaError("layer: 'op' must be a string");
    LayerSpec l;
    l.op = op_from_name(jop.get<std::string>());
    switch (l.op) {
      case OpKind::Sample:
        l.setting.sample_k = positive_int(e, "k", "sample layer");
        break;
      case OpKind::Aggregate: {
        const json& r = require_field(e, "reducer", "aggregate layer");
        l.setting.aggregate_reducer = reducer_from_name(r.get<std::string>());
        break;
      }
      case OpKind::Combine:
        l.setting.combine_out_dim = positive_int(e, "out_dim", "combine layer");
        break;
      case OpKind::GlobalPooling: {
        const json& r = require_field(e, "reducer", "global_pooling layer");
        l.setting.pooling_reducer = pool_reducer_from_name(r.get<std::string>());
        break;
      }
      default:
        break;
    }
    arch.layers.push_back(l);
  }
  return arch;
}

nlohmann::json space_to_json(const SpaceConfig& space) {
  json agg = json::array();
  for (auto r : space.aggregate_reducers) agg.push_back(reducer_name(r));
  json pool = json::array();
  for (auto r : space.pooling_reducers) pool.push_back(pool_reducer_name(r));
  return json{{"input",
               {{"num_nodes", space.input.num_nodes},
                {"feature_dim", space.input.feature_dim},
                {"has_input_graph", space.input.has_input_graph}}},
              {"depths", space.depths},
              {"sample_k", space.sample_k_choices},
              {"aggregate_reducers", agg},
              {"combine_out_dim", space.combine_width_choices},
              {"pooling_reducers", pool}};
}

SpaceConfig space_from_json(const nlohmann::json& j) {
  require_object(j,
                 {"input", "depths", "sample_k", "aggregate_reducers", "combine_out_dim",
                  "pooling_reducers"},
                 "space");
  SpaceConfig space;
  const json& ji = require_field(j, "input", "space");
  require_object(ji, {"num_nodes", "feature_dim", "has_input_graph"}, "space.input");
  space.input.num_nodes = positive_int(ji, "num_nodes", "space.input");
  space.input.feature_dim = positive_int(ji, "feature_dim", "space.input");
  space.input.has_input_graph = require_field(ji, "has_input_graph", "space.input").get<bool>();

  auto int_list = [&](const char* key) {
    const json& v = require_field(j, key, "space");
    if (!v.is_array() || v.empty()) {
      throw JsonSchemaError(std::string("space: '") + key + "' must be a nonempty array");
    }
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<int64_t>() < 1) {
        throw JsonSchemaError(std::string("space: '") + key + "' entries must be >= 1");
      }
      out.push_back(e.get<int>());
    }
    return out;
  };
  space.depths = int_list("depths");
  space.sample_k_choices = int_list("sample_k");
  space.combine_width_choices = int_list("combine_out_dim");

  space.aggregate_reducers.clear();
  for (const auto& e : require_field(j, "aggregate_reducers", "space")) {
    space.aggregate_reducers.push_back(reducer_from_name(e.get<std::string>()));
  }
  space.pooling_reducers.clear();
  for (const auto& e : require_field(j, "pooling_reducers", "space")) {
    space.pooling_reducers.push_back(pool_reducer_from_name(e.get<std::string>()));
  }
  if (space.aggregate_reducers.empty() || space.pooling_reducers.empty()) {
    throw JsonSchemaError("space: reducer lists must be nonempty");
  }
  return space;
}

// --- digests ---

static uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

static std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string arch_digest(const Architecture& arch) {
  return hex64(fnv1a64(arch_to_json(arch).dump()));
}

std::string arch_hash_compute(const Architecture& arch) {
  Architecture stripped;
  stripped.input = arch.input;
  for (const auto& l : arch.layers) {
    if (l.op != OpKind::Communicate) stripped.layers.push_back(l);
  }
  return hex64(fnv1a64(arch_to_json(stripped).dump()));
}

}  // namespace coedge
