#pragma once

// Deterministic fixtures shared by the unit and acceptance suites: canonical
// spaces and systems plus an analytic latency table standing in for kernel
// timings. Keeping them here pins every expected value the suites assert.

#include <string>

#include "coedge/arch.hpp"
#include "coedge/perf.hpp"

namespace coedge::testfx {

// Point-cloud style space: 1024 nodes, 3 features, no given edge set.
inline SpaceConfig default_space() {
  SpaceConfig space;
  space.input = {1024, 3, false};
  return space;
}

// Text style space: few nodes, wide features, edges given.
inline SpaceConfig text_space() {
  SpaceConfig space;
  space.input = {17, 300, true};
  space.sample_k_choices = {5, 10};  // k must stay below num_nodes
  return space;
}

// Small shapes for engine round-trips.
inline SpaceConfig small_space() {
  SpaceConfig space;
  space.input = {64, 8, false};
  space.depths = {2, 3, 4, 5, 6};
  space.sample_k_choices = {3, 5};
  space.combine_width_choices = {8, 16, 32};
  return space;
}

inline SystemConfig default_system() {
  SystemConfig sys;
  sys.device = {"dev", 0.5, 3.0, 1.5, 1.2};
  sys.edge = {"edge", 2.0, 20.0, 2.0, 2.0};
  sys.bandwidth_mbps = 10.0;
  sys.latency_constraint_ms = 100.0;
  sys.energy_constraint_j = 1.0;
  sys.rtt_overhead_ms = 2.0;
  return sys;
}

struct OpScales {
  double sample = 1.0;
  double aggregate = 1.0;
  double combine = 1.0;
  double pool = 1.0;
};

// Slow device that is particularly bad at neighbor search, fast edge.
inline OpScales device_scales() { return {5.0, 1.5, 3.0, 1.5}; }
inline OpScales edge_scales() { return {0.4, 0.4, 0.4, 0.4}; }

// Closed-form per-op latency standing in for a measured kernel time.
inline double analytic_latency_ms(OpKind op, const FunctionSetting& setting, int n, int f) {
  const double dn = n, df = f;
  switch (op) {
    case OpKind::Sample:
      return 0.05 + dn * dn * df * 2e-7 * (setting.sample_k / 10.0);
    case OpKind::Aggregate:
      return 0.02 + dn * df * 10.0 * 5e-6;
    case OpKind::Combine:
      return 0.03 + dn * df * setting.combine_out_dim * 5e-7;
    case OpKind::GlobalPooling:
      return 0.01 + dn * df * 2e-6;
    default:
      return 0.0;
  }
}

inline double scale_for(OpKind op, const OpScales& s) {
  switch (op) {
    case OpKind::Sample:
      return s.sample;
    case OpKind::Aggregate:
      return s.aggregate;
    case OpKind::Combine:
      return s.combine;
    case OpKind::GlobalPooling:
      return s.pool;
    default:
      return 1.0;
  }
}

// Covers every (op, setting, shape) the space can reach: node buckets are the
// input bucket and 1 (post pooling), feature dims are the input width plus
// all combine widths.
inline LatencyLUT analytic_lut(const SpaceConfig& space, const SystemConfig& sys,
                               OpScales dev = device_scales(),
                               OpScales edge = edge_scales()) {
  LatencyLUT lut;
  std::vector<int> n_buckets = {nearest_pow2_bucket(space.input.num_nodes), 1};
  std::vector<int> f_dims = {space.input.feature_dim};
  for (int w : space.combine_width_choices) f_dims.push_back(w);

  std::vector<LayerSpec> settings;
  for (int k : space.sample_k_choices) settings.push_back(sample_layer(k));
  for (Reducer r : space.aggregate_reducers) settings.push_back(aggregate_layer(r));
  for (int w : space.combine_width_choices) settings.push_back(combine_layer(w));
  for (PoolReducer r : space.pooling_reducers) settings.push_back(global_pooling_layer(r));

  for (const auto& [profile, scales] :
       {std::pair{sys.device.id, dev}, std::pair{sys.edge.id, edge}}) {
    for (const LayerSpec& layer : settings) {
      for (int n : n_buckets) {
        for (int f : f_dims) {
          const double base = analytic_latency_ms(layer.op, layer.setting, n, f);
          lut.add(profile, layer.op, setting_signature(layer), n, f,
                  base * scale_for(layer.op, scales));
        }
      }
    }
  }
  return lut;
}

// A LUT whose device and edge entries are identical, for properties that
// compare costs across a re-partition.
inline LatencyLUT symmetric_lut(const SpaceConfig& space, const SystemConfig& sys) {
  return analytic_lut(space, sys, OpScales{}, OpScales{});
}

}  // namespace coedge::testfx
