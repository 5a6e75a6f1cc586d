#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace coedge {

class Rng;

// The six layer operations of the co-inference design space. Communicate is
// the device<->edge transfer modeled as an ordinary layer; its positions in
// an architecture define the mapping scheme.
enum class OpKind : uint8_t {
  Sample = 0,
  Aggregate = 1,
  Communicate = 2,
  Combine = 3,
  GlobalPooling = 4,
  Identity = 5,
};
constexpr int kNumOpKinds = 6;

enum class Reducer : uint8_t { Max = 0, Mean = 1, Sum = 2 };
enum class PoolReducer : uint8_t { Max = 0, Mean = 1 };

// Per-layer function setting. Only the field matching the layer's op kind is
// meaningful; the rest are ignored.
struct FunctionSetting {
  int sample_k = 0;                        // Sample: neighbors per node, >= 1
  Reducer aggregate_reducer = Reducer::Max;
  int combine_out_dim = 0;                 // Combine: output feature width, >= 1
  PoolReducer pooling_reducer = PoolReducer::Max;
};

struct LayerSpec {
  OpKind op = OpKind::Identity;
  FunctionSetting setting;
};

LayerSpec sample_layer(int k);
LayerSpec aggregate_layer(Reducer r);
LayerSpec communicate_layer();
LayerSpec combine_layer(int out_dim);
LayerSpec global_pooling_layer(PoolReducer r);
LayerSpec identity_layer();

// has_input_graph distinguishes citation/text-style inputs that arrive with
// an edge set from point-cloud-style inputs that need a Sample layer first.
struct InputSpec {
  int num_nodes = 1;
  int feature_dim = 1;
  bool has_input_graph = false;
};

struct Architecture {
  InputSpec input;
  std::vector<LayerSpec> layers;
};

bool operator==(const FunctionSetting& a, const FunctionSetting& b);
bool operator==(const LayerSpec& a, const LayerSpec& b);
bool operator==(const InputSpec& a, const InputSpec& b);
bool operator==(const Architecture& a, const Architecture& b);

enum class Placement : uint8_t { Device = 0, Edge = 1 };
inline Placement other_side(Placement p) {
  return p == Placement::Device ? Placement::Edge : Placement::Device;
}

struct Segment {
  Placement side;
  int first = 0;  // inclusive layer indices; a trailing Communicate belongs
  int last = 0;   // to the segment of the transfer's origin side
};

struct MappingScheme {
  std::vector<Placement> placement;  // one entry per layer
  std::vector<Segment> segments;
};

// Shape after each layer executes. edge_k is the neighbor count of the
// current edge set (input graph degree or the latest Sample's k).
struct LayerShape {
  int num_nodes = 0;
  int feature_dim = 0;
  bool edges_present = false;
  Placement edges_origin = Placement::Device;
  int edge_k = 0;
};
using ShapeTrace = std::vector<LayerShape>;

enum class ValidityRule : uint8_t {
  V1_ConsecutiveCommunicate = 1,
  V2_AggregateAfterPooling = 2,
  V3_SampleAfterPooling = 3,
  V4_AggregateWithoutEdges = 4,
  V5_PoolingCount = 5,
  V6_TrailingCommunicate = 6,
};

std::string to_string(ValidityRule r);

// Allowed depths and per-op setting choices used by the random sampler.
struct SpaceConfig {
  InputSpec input;
  std::vector<int> depths = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> sample_k_choices = {5, 10, 20};
  std::vector<Reducer> aggregate_reducers = {Reducer::Max, Reducer::Mean, Reducer::Sum};
  std::vector<int> combine_width_choices = {32, 64, 128, 256};
  std::vector<PoolReducer> pooling_reducers = {PoolReducer::Max, PoolReducer::Mean};
};

// Returns all violated rules, empty when valid. Single left-to-right scan.
std::vector<ValidityRule> check_validity(const Architecture& arch);

// Per-layer device/edge assignment implied by the Communicate positions.
// No validity gate; derive_mapping is the checked entry point.
std::vector<Placement> layer_placements(const Architecture& arch);

// Placement alternates at every Communicate; Communicate layers carry the
// placement of the transfer's origin side. Throws InvalidArchitectureError
// on an invalid architecture.
MappingScheme derive_mapping(const Architecture& arch);

// Per-layer output shapes. Total on valid architectures.
ShapeTrace infer_shapes(const Architecture& arch);

// Degree of the synthetic edge set attached to has_input_graph inputs.
int input_graph_degree(int num_nodes);

// Uniform random op per layer with settings drawn independently from the
// configured choice lists. Not guaranteed valid; callers rejection-sample.
Architecture sample_random(const SpaceConfig& space, Rng& rng);

// Replaces one function setting with a strictly smaller allowed value
// (combine width or sample k). Returns the input unchanged when nothing
// can shrink. Op sequence is never modified.
Architecture scale_down(const Architecture& arch, const SpaceConfig& space, Rng& rng);

// --- JSON (schema rejects unknown fields; field order irrelevant) ---

nlohmann::json arch_to_json(const Architecture& arch);
Architecture arch_from_json(const nlohmann::json& j);

nlohmann::json space_to_json(const SpaceConfig& space);
SpaceConfig space_from_json(const nlohmann::json& j);

std::string op_name(OpKind op);
OpKind op_from_name(const std::string& name);
std::string reducer_name(Reducer r);
std::string pool_reducer_name(PoolReducer r);

// Stable digest of the full architecture JSON, hex encoded. Used for the
// engine CONFIG handshake and deterministic tie-breaking.
std::string arch_digest(const Architecture& arch);

// Digest over the compute layers only (Communicate stripped): two
// architectures that differ only in mapping share this hash.
std::string arch_hash_compute(const Architecture& arch);

}  // namespace coedge
