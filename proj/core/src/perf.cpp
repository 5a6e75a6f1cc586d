#include "coedge/perf.hpp"

#include <cmath>
#include <sstream>

#include "coedge/errors.hpp"
#include "coedge/json_util.hpp"

namespace coedge {

static nlohmann::json profile_to_json(const DeviceProfile& p) {
  return json{{"id", p.id},
              {"power_idle_w", p.power_idle_w},
              {"power_run_w", p.power_run_w},
              {"power_tx_w", p.power_tx_w},
              {"power_rx_w", p.power_rx_w}};
}

static DeviceProfile profile_from_json(const json& j, const std::string& ctx) {
  require_object(j, {"id", "power_idle_w", "power_run_w", "power_tx_w", "power_rx_w"}, ctx);
  DeviceProfile p;
  p.id = require_field(j, "id", ctx).get<std::string>();
  p.power_idle_w = require_field(j, "power_idle_w", ctx).get<double>();
  p.power_run_w = require_field(j, "power_run_w", ctx).get<double>();
  p.power_tx_w = require_field(j, "power_tx_w", ctx).get<double>();
  p.power_rx_w = require_field(j, "power_rx_w", ctx).get<double>();
  if (p.power_idle_w < 0 || p.power_run_w < p.power_idle_w || p.power_tx_w < 0 ||
      p.power_rx_w < 0) {
    throw JsonSchemaError(ctx + ": powers must be >= 0 with power_run_w >= power_idle_w");
  }
  return p;
}

nlohmann::json system_to_json(const SystemConfig& sys) {
  return json{{"device", profile_to_json(sys.device)},
              {"edge", profile_to_json(sys.edge)},
              {"bandwidth_mbps", sys.bandwidth_mbps},
              {"latency_constraint_ms", sys.latency_constraint_ms},
              {"energy_constraint_j", sys.energy_constraint_j},
              {"rtt_overhead_ms", sys.rtt_overhead_ms}};
}

SystemConfig system_from_json(const nlohmann::json& j) {
  require_object(j,
                 {"device", "edge", "bandwidth_mbps", "latency_constraint_ms",
                  "energy_constraint_j", "rtt_overhead_ms"},
                 "system");
  SystemConfig sys;
  sys.device = profile_from_json(require_field(j, "device", "system"), "system.device");
  sys.edge = profile_from_json(require_field(j, "edge", "system"), "system.edge");
  sys.bandwidth_mbps = require_field(j, "bandwidth_mbps", "system").get<double>();
  sys.latency_constraint_ms = require_field(j, "latency_constraint_ms", "system").get<double>();
  sys.energy_constraint_j = require_field(j, "energy_constraint_j", "system").get<double>();
  if (j.contains("rtt_overhead_ms")) sys.rtt_overhead_ms = j["rtt_overhead_ms"].get<double>();
  if (sys.bandwidth_mbps <= 0 || sys.latency_constraint_ms <= 0 || sys.energy_constraint_j <= 0) {
    throw JsonSchemaError("system: bandwidth and constraints must be positive");
  }
  return sys;
}

int nearest_pow2_bucket(int n) {
  if (n <= 1) return 1;
  int64_t lo = 1;
  while (lo * 2 <= n) lo *= 2;
  const int64_t hi = lo * 2;
  return (n - lo) <= (hi - n) ? static_cast<int>(lo) : static_cast<int>(hi);
}

std::string setting_signature(const LayerSpec& layer) {
  std::ostringstream os;
  switch (layer.op) {
    case OpKind::Sample:
      os << "k=" << layer.setting.sample_k;
      break;
    case OpKind::Aggregate:
      os << "reducer=" << reducer_name(layer.setting.aggregate_reducer);
      break;
    case OpKind::Combine:
      os << "out=" << layer.setting.combine_out_dim;
      break;
    case OpKind::GlobalPooling:
      os << "reducer=" << pool_reducer_name(layer.setting.pooling_reducer);
      break;
    default:
      break;
  }
  return os.str();
}

void LatencyLUT::add(const std::string& profile_id, OpKind op, const std::string& setting,
                     int n_bucket, int f_bucket, double latency_ms) {
  if (latency_ms <= 0) {
    throw JsonSchemaError("LUT latencies must be positive (" + profile_id + "/" +
                          op_name(op) + ")");
  }
  entries_[{profile_id, static_cast<int>(op), setting, n_bucket, f_bucket}] = latency_ms;
}

double LatencyLUT::lookup(const std::string& profile_id, const LayerSpec& layer,
                          const ShapeBucket& shape) const {
  if (layer.op == OpKind::Identity) return 0.0;
  if (layer.op == OpKind::Communicate) {
    throw MissingEntryError("communicate latency is analytic, not a LUT entry");
  }
  const Key key{profile_id, static_cast<int>(layer.op), setting_signature(layer),
                shape.n_bucket, shape.f_bucket};
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    std::ostringstream os;
    os << "missing LUT entry (" << profile_id << ", " << op_name(layer.op) << ", '"
       << setting_signature(layer) << "', n=" << shape.n_bucket << ", f=" << shape.f_bucket
       << ")";
    throw MissingEntryError(os.str());
  }
  return it->second;
}

nlohmann::json LatencyLUT::to_json() const {
  json arr = json::array();
  for (const auto& [key, ms] : entries_) {
    arr.push_back(json{{"profile", std::get<0>(key)},
                       {"op", op_name(static_cast<OpKind>(std::get<1>(key)))},
                       {"setting", std::get<2>(key)},
                       {"n_bucket", std::get<3>(key)},
                       {"f_bucket", std::get<4>(key)},
                       {"latency_ms", ms}});
  }
  return arr;
}

LatencyLUT LatencyLUT::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw JsonSchemaError("LUT file must be a JSON array");
  LatencyLUT lut;
  for (const auto& e : j) {
    require_object(e, {"profile", "op", "setting", "n_bucket", "f_bucket", "latency_ms"},
                   "lut entry");
    lut.add(require_field(e, "profile", "lut").get<std::string>(),
            op_from_name(require_field(e, "op", "lut").get<std::string>()),
            require_field(e, "setting", "lut").get<std::string>(),
            require_field(e, "n_bucket", "lut").get<int>(),
            require_field(e, "f_bucket", "lut").get<int>(),
            require_field(e, "latency_ms", "lut").get<double>());
  }
  return lut;
}

nlohmann::json report_to_json(const PerfReport& r) {
  return json{{"total_latency_ms", r.total_latency_ms},
              {"per_layer_ms", r.per_layer_ms},
              {"device_compute_ms", r.device_compute_ms},
              {"edge_compute_ms", r.edge_compute_ms},
              {"comm_ms", r.comm_ms},
              {"energy_device_j", r.energy_device_j}};
}

double lut_lookup(const LatencyLUT& lut, const DeviceProfile& profile, const LayerSpec& layer,
                  const ShapeBucket& shape) {
  return lut.lookup(profile.id, layer, shape);
}

// Shape entering layer i (the previous layer's output, or the input spec).
static LayerShape entering_shape(const Architecture& arch, const ShapeTrace& trace, int i) {
  if (i > 0) return trace[i - 1];
  LayerShape s;
  s.num_nodes = arch.input.num_nodes;
  s.feature_dim = arch.input.feature_dim;
  s.edges_present = arch.input.has_input_graph;
  s.edges_origin = Placement::Device;
  s.edge_k = arch.input.has_input_graph ? input_graph_degree(arch.input.num_nodes) : 0;
  return s;
}

uint64_t transfer_size(const Architecture& arch, int comm_index, const ShapeTrace& trace) {
  // What crosses the link: the feature tensor, plus the current edge set when
  // the other side runs an Aggregate with it before any Sample rebuilds one.
  const std::vector<Placement> placement = layer_placements(arch);

  const LayerShape at = trace[comm_index];
  const Placement origin = placement[comm_index];
  uint64_t bytes = 4ull * at.num_nodes * at.feature_dim;

  if (at.edges_present && at.edges_origin == origin) {
    for (size_t j = comm_index + 1; j < arch.layers.size(); ++j) {
      if (arch.layers[j].op == OpKind::Sample) break;
      if (arch.layers[j].op == OpKind::Aggregate && placement[j] != origin) {
        bytes += 8ull * at.num_nodes * at.edge_k;
        break;
      }
    }
  }
  return bytes + 64;
}

double comm_latency_ms(uint64_t bytes, double bandwidth_mbps, double rtt_overhead_ms) {
  // bits / (Mbit/s) gives microseconds per megabit scale; expressed in ms:
  return static_cast<double>(bytes) * 8.0 / (bandwidth_mbps * 1000.0) + rtt_overhead_ms;
}

PerfReport estimate_cost(const Architecture& arch, const SystemConfig& sys,
                         const LatencyLUT& lut) {
  const std::vector<Placement> placement = layer_placements(arch);
  const ShapeTrace trace = infer_shapes(arch);

  PerfReport report;
  report.per_layer_ms.reserve(arch.layers.size());
  for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
    const auto& layer = arch.layers[i];
    double ms = 0.0;
    if (layer.op == OpKind::Communicate) {
      ms = comm_latency_ms(transfer_size(arch, i, trace), sys.bandwidth_mbps,
                           sys.rtt_overhead_ms);
      report.comm_ms += ms;
    } else if (layer.op == OpKind::Identity) {
      ms = 0.0;
    } else {
      const LayerShape in = entering_shape(arch, trace, i);
      const ShapeBucket bucket{nearest_pow2_bucket(in.num_nodes), in.feature_dim};
      const DeviceProfile& profile =
          placement[i] == Placement::Device ? sys.device : sys.edge;
      ms = lut.lookup(profile.id, layer, bucket);
      if (placement[i] == Placement::Device) {
        report.device_compute_ms += ms;
      } else {
        report.edge_compute_ms += ms;
      }
    }
    report.per_layer_ms.push_back(ms);
  }
  report.total_latency_ms =
      report.device_compute_ms + report.edge_compute_ms + report.comm_ms;
  report.energy_device_j = estimate_energy(arch, sys, lut, report);
  return report;
}

double estimate_energy(const Architecture& arch, const SystemConfig& sys,
                       const LatencyLUT& /*lut*/, const PerfReport& report) {
  const std::vector<Placement> placement = layer_placements(arch);
  const ShapeTrace trace = infer_shapes(arch);

  // tx when the device originates the transfer, rx when the edge does.
  double tx_ms = 0.0, rx_ms = 0.0;
  for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
    if (arch.layers[i].op != OpKind::Communicate) continue;
    const double ms = comm_latency_ms(transfer_size(arch, i, trace), sys.bandwidth_mbps,
                                      sys.rtt_overhead_ms);
    if (placement[i] == Placement::Device) {
      tx_ms += ms;
    } else {
      rx_ms += ms;
    }
  }

  const DeviceProfile& dev = sys.device;
  const double e_run = dev.power_run_w * report.device_compute_ms / 1000.0;
  const double e_idle = dev.power_idle_w * report.edge_compute_ms / 1000.0;
  const double e_comm = dev.power_tx_w * tx_ms / 1000.0 + dev.power_rx_w * rx_ms / 1000.0;
  return e_run + e_idle + e_comm;
}

std::vector<double> zscore_normalize(const std::vector<double>& values) {
  const size_t n = values.size();
  if (n == 0) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double std_dev = std::sqrt(var);
  std::vector<double> out(n, 0.0);
  if (std_dev == 0.0) return out;
  for (size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) / std_dev;
  return out;
}

}  // namespace coedge
