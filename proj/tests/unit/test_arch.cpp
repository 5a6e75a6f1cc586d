#include <doctest.h>

#include <algorithm>
#include <set>

#include "coedge/arch.hpp"
#include "coedge/errors.hpp"
#include "coedge/rng.hpp"
#include "support/fixtures.hpp"

using namespace coedge;

namespace {

Architecture make_arch(InputSpec input, std::vector<LayerSpec> layers) {
  Architecture a;
  a.input = input;
  a.layers = std::move(layers);
  return a;
}

// Independent rule-by-rule evaluator: each rule is a standalone quantifier
// scan, deliberately not the single-pass implementation under test.
std::set<ValidityRule> brute_force_rules(const Architecture& arch) {
  const auto& L = arch.layers;
  std::set<ValidityRule> out;

  for (size_t i = 0; i + 1 < L.size(); ++i) {
    if (L[i].op == OpKind::Communicate && L[i + 1].op == OpKind::Communicate) {
      out.insert(ValidityRule::V1_ConsecutiveCommunicate);
    }
  }
  for (size_t i = 0; i < L.size(); ++i) {
    for (size_t j = i + 1; j < L.size(); ++j) {
      if (L[i].op == OpKind::GlobalPooling && L[j].op == OpKind::Aggregate) {
        out.insert(ValidityRule::V2_AggregateAfterPooling);
      }
      if (L[i].op == OpKind::GlobalPooling && L[j].op == OpKind::Sample) {
        out.insert(ValidityRule::V3_SampleAfterPooling);
      }
    }
  }
  if (!arch.input.has_input_graph) {
    for (size_t j = 0; j < L.size(); ++j) {
      if (L[j].op != OpKind::Aggregate) continue;
      bool sampled = false;
      for (size_t i = 0; i < j; ++i) sampled |= L[i].op == OpKind::Sample;
      if (!sampled) out.insert(ValidityRule::V4_AggregateWithoutEdges);
    }
  }
  const long pools = std::count_if(L.begin(), L.end(), [](const LayerSpec& l) {
    return l.op == OpKind::GlobalPooling;
  });
  if (pools != 1) out.insert(ValidityRule::V5_PoolingCount);
  if (!L.empty() && L.back().op == OpKind::Communicate) {
    out.insert(ValidityRule::V6_TrailingCommunicate);
  }
  return out;
}

}  // namespace

TEST_CASE("validity: spec examples") {
  const InputSpec cloud{1024, 3, false};
  const InputSpec graph{17, 300, true};

  auto v1 = check_validity(make_arch(cloud, {communicate_layer(), communicate_layer(),
                                             combine_layer(64),
                                             global_pooling_layer(PoolReducer::Max)}));
  CHECK(v1 == std::vector<ValidityRule>{ValidityRule::V1_ConsecutiveCommunicate});

  auto ok = check_validity(make_arch(cloud, {sample_layer(20), aggregate_layer(Reducer::Max),
                                             combine_layer(64),
                                             global_pooling_layer(PoolReducer::Max)}));
  CHECK(ok.empty());

  auto v2 = check_validity(make_arch(graph, {global_pooling_layer(PoolReducer::Max),
                                             aggregate_layer(Reducer::Mean)}));
  CHECK(v2 == std::vector<ValidityRule>{ValidityRule::V2_AggregateAfterPooling});
}

TEST_CASE("validity: agrees with the per-rule oracle on depths 1..3") {
  for (bool has_graph : {false, true}) {
    InputSpec input{32, 4, has_graph};
    for (int depth = 1; depth <= 3; ++depth) {
      const int total = depth == 1 ? 6 : depth == 2 ? 36 : 216;
      for (int code = 0; code < total; ++code) {
        int c = code;
        std::vector<LayerSpec> layers;
        for (int d = 0; d < depth; ++d) {
          const auto op = static_cast<OpKind>(c % 6);
          c /= 6;
          switch (op) {
            case OpKind::Sample:
              layers.push_back(sample_layer(5));
              break;
            case OpKind::Aggregate:
              layers.push_back(aggregate_layer(Reducer::Sum));
              break;
            case OpKind::Combine:
              layers.push_back(combine_layer(32));
              break;
            case OpKind::GlobalPooling:
              layers.push_back(global_pooling_layer(PoolReducer::Mean));
              break;
            case OpKind::Communicate:
              layers.push_back(communicate_layer());
              break;
            default:
              layers.push_back(identity_layer());
          }
        }
        const Architecture arch = make_arch(input, layers);
        const auto got = check_validity(arch);
        const auto want = brute_force_rules(arch);
        REQUIRE(std::set<ValidityRule>(got.begin(), got.end()) == want);
      }
    }
  }
}

TEST_CASE("derive_mapping: toggles at communicates") {
  const InputSpec cloud{1024, 3, false};

  SUBCASE("single communicate") {
    const Architecture arch =
        make_arch(cloud, {sample_layer(20), aggregate_layer(Reducer::Max),
                          communicate_layer(), combine_layer(64),
                          global_pooling_layer(PoolReducer::Max)});
    const MappingScheme m = derive_mapping(arch);
    CHECK(m.placement == std::vector<Placement>{Placement::Device, Placement::Device,
                                                Placement::Device, Placement::Edge,
                                                Placement::Edge});
    REQUIRE(m.segments.size() == 2);
    CHECK(m.segments[0].side == Placement::Device);
    CHECK(m.segments[0].first == 0);
    CHECK(m.segments[0].last == 2);
    CHECK(m.segments[1].side == Placement::Edge);
    CHECK(m.segments[1].first == 3);
    CHECK(m.segments[1].last == 4);
  }

  SUBCASE("no communicate: all device") {
    const Architecture arch = make_arch(
        cloud, {combine_layer(32), global_pooling_layer(PoolReducer::Mean)});
    const MappingScheme m = derive_mapping(arch);
    for (Placement p : m.placement) CHECK(p == Placement::Device);
    CHECK(m.segments.size() == 1);
  }

  SUBCASE("two communicates: device, edge, device") {
    const Architecture arch =
        make_arch(cloud, {identity_layer(), communicate_layer(), combine_layer(64),
                          communicate_layer(), global_pooling_layer(PoolReducer::Max)});
    const MappingScheme m = derive_mapping(arch);
    REQUIRE(m.segments.size() == 3);
    CHECK(m.segments[0].side == Placement::Device);
    CHECK(m.segments[1].side == Placement::Edge);
    CHECK(m.segments[2].side == Placement::Device);
    // boundaries sit exactly on the communicate indices
    CHECK(m.segments[0].last == 1);
    CHECK(m.segments[1].last == 3);
  }

  SUBCASE("segment count equals communicates + 1 on random valid archs") {
    Rng rng(7);
    const SpaceConfig space = testfx::default_space();
    int checked = 0;
    while (checked < 200) {
      const Architecture arch = sample_random(space, rng);
      if (!check_validity(arch).empty()) continue;
      ++checked;
      const MappingScheme m = derive_mapping(arch);
      const long comms =
          std::count_if(arch.layers.begin(), arch.layers.end(),
                        [](const LayerSpec& l) { return l.op == OpKind::Communicate; });
      CHECK(static_cast<long>(m.segments.size()) == comms + 1);
      // segments partition the layer list
      int expect = 0;
      for (const Segment& s : m.segments) {
        CHECK(s.first == expect);
        expect = s.last + 1;
      }
      CHECK(expect == static_cast<int>(arch.layers.size()));
    }
  }

  SUBCASE("invalid arch rejected") {
    const Architecture bad = make_arch(cloud, {communicate_layer(), communicate_layer(),
                                               global_pooling_layer(PoolReducer::Max)});
    CHECK_THROWS_AS(derive_mapping(bad), InvalidArchitectureError);
  }
}

TEST_CASE("infer_shapes: spec traces") {
  SUBCASE("dgcnn-style block") {
    const Architecture arch = make_arch(
        {1024, 3, false}, {sample_layer(20), aggregate_layer(Reducer::Max),
                           combine_layer(64), global_pooling_layer(PoolReducer::Max)});
    const ShapeTrace t = infer_shapes(arch);
    REQUIRE(t.size() == 4);
    CHECK(t[0].num_nodes == 1024);
    CHECK(t[0].feature_dim == 3);
    CHECK(t[0].edges_present);
    CHECK(t[1].num_nodes == 1024);
    CHECK(t[1].feature_dim == 3);
    CHECK(t[1].edges_present);
    CHECK(t[2].feature_dim == 64);
    CHECK(t[2].edges_present);
    CHECK(t[3].num_nodes == 1);
    CHECK(t[3].feature_dim == 64);
    CHECK_FALSE(t[3].edges_present);
  }

  SUBCASE("identity preserves the input shape") {
    const Architecture arch =
        make_arch({10, 5, false}, {identity_layer(), identity_layer(), identity_layer()});
    for (const LayerShape& s : infer_shapes(arch)) {
      CHECK(s.num_nodes == 10);
      CHECK(s.feature_dim == 5);
    }
  }

  SUBCASE("text-style input with given graph") {
    const Architecture arch = make_arch(
        {17, 300, true}, {aggregate_layer(Reducer::Mean), combine_layer(128),
                          global_pooling_layer(PoolReducer::Mean)});
    const ShapeTrace t = infer_shapes(arch);
    REQUIRE(t.size() == 3);
    CHECK(t[0].num_nodes == 17);
    CHECK(t[0].feature_dim == 300);
    CHECK(t[1].num_nodes == 17);
    CHECK(t[1].feature_dim == 128);
    CHECK(t[2].num_nodes == 1);
    CHECK(t[2].feature_dim == 128);
  }
}

TEST_CASE("sample_random: determinism, uniformity, membership") {
  SpaceConfig space = testfx::default_space();

  SUBCASE("same seed, same architecture") {
    for (uint64_t seed : {0ull, 1ull, 42ull}) {
      Rng a(seed), b(seed);
      for (int i = 0; i < 20; ++i) {
        CHECK(sample_random(space, a) == sample_random(space, b));
      }
    }
  }

  SUBCASE("per-position op frequencies near 1/6") {
    SpaceConfig fixed = space;
    fixed.depths = {6};
    Rng rng(11);
    const int trials = 10000;
    int counts[6][6] = {};
    for (int t = 0; t < trials; ++t) {
      const Architecture arch = sample_random(fixed, rng);
      for (int pos = 0; pos < 6; ++pos) {
        counts[pos][static_cast<int>(arch.layers[pos].op)]++;
      }
    }
    const double tol = 6.0 / std::sqrt(static_cast<double>(trials));
    for (int pos = 0; pos < 6; ++pos) {
      for (int op = 0; op < 6; ++op) {
        const double freq = counts[pos][op] / static_cast<double>(trials);
        CHECK(std::fabs(freq - 1.0 / 6.0) < tol);
      }
    }
  }

  SUBCASE("settings come from the configured choice lists") {
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
      const Architecture arch = sample_random(space, rng);
      CHECK(std::find(space.depths.begin(), space.depths.end(),
                      static_cast<int>(arch.layers.size())) != space.depths.end());
      for (const LayerSpec& l : arch.layers) {
        if (l.op == OpKind::Sample) {
          CHECK(std::find(space.sample_k_choices.begin(), space.sample_k_choices.end(),
                          l.setting.sample_k) != space.sample_k_choices.end());
        }
        if (l.op == OpKind::Combine) {
          CHECK(std::find(space.combine_width_choices.begin(),
                          space.combine_width_choices.end(),
                          l.setting.combine_out_dim) != space.combine_width_choices.end());
        }
      }
    }
  }
}

TEST_CASE("scale_down") {
  SpaceConfig space = testfx::default_space();
  const InputSpec cloud = space.input;

  SUBCASE("combine width strictly shrinks within the grid") {
    const Architecture arch = make_arch(
        cloud, {combine_layer(256), global_pooling_layer(PoolReducer::Max)});
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
      const Architecture smaller = scale_down(arch, space, rng);
      const int w = smaller.layers[0].setting.combine_out_dim;
      CHECK(w < 256);
      CHECK((w == 32 || w == 64 || w == 128));
    }
  }

  SUBCASE("all settings minimal: unchanged") {
    const Architecture arch =
        make_arch(cloud, {sample_layer(5), combine_layer(32),
                          global_pooling_layer(PoolReducer::Max)});
    Rng rng(5);
    CHECK(scale_down(arch, space, rng) == arch);
  }

  SUBCASE("op sequence is never touched") {
    Rng rng(17);
    int done = 0;
    while (done < 1000) {
      Architecture arch = sample_random(space, rng);
      if (!check_validity(arch).empty()) continue;
      ++done;
      const Architecture out = scale_down(arch, space, rng);
      REQUIRE(out.layers.size() == arch.layers.size());
      for (size_t i = 0; i < out.layers.size(); ++i) {
        CHECK(out.layers[i].op == arch.layers[i].op);
      }
      CHECK(check_validity(out).empty());
    }
  }
}

TEST_CASE("architecture JSON schema") {
  const Architecture arch = make_arch(
      {1024, 3, false}, {sample_layer(20), aggregate_layer(Reducer::Sum), communicate_layer(),
                         combine_layer(64), global_pooling_layer(PoolReducer::Mean),
                         identity_layer()});

  SUBCASE("round trip") {
    CHECK(arch_from_json(arch_to_json(arch)) == arch);
  }

  SUBCASE("field order irrelevant") {
    json j = {{"layers", json::array({{{"op", "global_pooling"}, {"reducer", "max"}}})},
              {"input", {{"has_input_graph", false}, {"feature_dim", 3}, {"num_nodes", 8}}}};
    const Architecture a = arch_from_json(j);
    CHECK(a.input.num_nodes == 8);
    CHECK(a.layers[0].op == OpKind::GlobalPooling);
  }

  SUBCASE("unknown fields rejected") {
    json j = arch_to_json(arch);
    j["extra"] = 1;
    CHECK_THROWS_AS(arch_from_json(j), JsonSchemaError);

    json j2 = arch_to_json(arch);
    j2["input"]["color"] = "red";
    CHECK_THROWS_AS(arch_from_json(j2), JsonSchemaError);

    json j3 = arch_to_json(arch);
    j3["layers"][0]["foo"] = 2;
    CHECK_THROWS_AS(arch_from_json(j3), JsonSchemaError);
  }

  SUBCASE("unknown op and missing settings rejected") {
    json j = {{"input", {{"num_nodes", 4}, {"feature_dim", 2}, {"has_input_graph", false}}},
              {"layers", json::array({{{"op", "conv"}}})}};
    CHECK_THROWS_AS(arch_from_json(j), JsonSchemaError);

    json j2 = {{"input", {{"num_nodes", 4}, {"feature_dim", 2}, {"has_input_graph", false}}},
               {"layers", json::array({{{"op", "combine"}}})}};
    CHECK_THROWS_AS(arch_from_json(j2), JsonSchemaError);
  }

  SUBCASE("irrelevant setting keys are ignored") {
    json j = {{"input", {{"num_nodes", 4}, {"feature_dim", 2}, {"has_input_graph", false}}},
              {"layers", json::array({{{"op", "identity"}, {"k", 5}},
                                      {{"op", "global_pooling"}, {"reducer", "max"}}})}};
    const Architecture a = arch_from_json(j);
    CHECK(a.layers[0].op == OpKind::Identity);
  }
}

TEST_CASE("digests") {
  const Architecture arch = make_arch(
      {64, 8, false}, {sample_layer(5), aggregate_layer(Reducer::Max),
                       global_pooling_layer(PoolReducer::Max)});
  Architecture with_comm = arch;
  with_comm.layers.insert(with_comm.layers.begin() + 2, communicate_layer());

  CHECK(arch_digest(arch) != arch_digest(with_comm));
  CHECK(arch_hash_compute(arch) == arch_hash_compute(with_comm));
  CHECK(arch_digest(arch) == arch_digest(arch));
  CHECK(arch_digest(arch).size() == 16);
}
