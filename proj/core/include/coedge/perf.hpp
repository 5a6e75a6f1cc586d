#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "coedge/arch.hpp"

namespace coedge {

// Synthetic device profile. The four power coefficients drive the linear
// on-device energy model: idle while the edge computes, run while executing,
// tx/rx while transferring.
struct DeviceProfile {
  std::string id;
  double power_idle_w = 0.0;
  double power_run_w = 0.0;
  double power_tx_w = 0.0;
  double power_rx_w = 0.0;
};

struct SystemConfig {
  DeviceProfile device;
  DeviceProfile edge;
  double bandwidth_mbps = 10.0;
  double latency_constraint_ms = 100.0;
  double energy_constraint_j = 1.0;
  double rtt_overhead_ms = 2.0;  // fixed per-message overhead added by comm_latency
};

nlohmann::json system_to_json(const SystemConfig& sys);
SystemConfig system_from_json(const nlohmann::json& j);

// Shape entering a layer, already reduced to LUT bucket coordinates.
struct ShapeBucket {
  int n_bucket = 0;  // nearest power of two of the node count
  int f_bucket = 0;  // exact feature dim from the setting grid
};

// Nearest power of two, ties toward the smaller one.
int nearest_pow2_bucket(int n);

// Compact textual form of the one setting field an op uses ("k=20",
// "reducer=mean", "out=64", "" for ops without a setting).
std::string setting_signature(const LayerSpec& layer);

// Per-(profile, op, setting, shape-bucket) latency table. Lookup is total
// over the configured space: a missing key is an error, never a default.
class LatencyLUT {
 public:
  using Key = std::tuple<std::string, int, std::string, int, int>;

  void add(const std::string& profile_id, OpKind op, const std::string& setting,
           int n_bucket, int f_bucket, double latency_ms);

  // Identity costs nothing and Communicate is computed analytically; both
  // bypass the table.
  double lookup(const std::string& profile_id, const LayerSpec& layer,
                const ShapeBucket& shape) const;

  size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const;
  static LatencyLUT from_json(const nlohmann::json& j);

 private:
  std::map<Key, double> entries_;
};

struct PerfReport {
  double total_latency_ms = 0.0;
  std::vector<double> per_layer_ms;
  double device_compute_ms = 0.0;
  double edge_compute_ms = 0.0;
  double comm_ms = 0.0;
  double energy_device_j = 0.0;
};

nlohmann::json report_to_json(const PerfReport& r);

double lut_lookup(const LatencyLUT& lut, const DeviceProfile& profile,
                  const LayerSpec& layer, const ShapeBucket& shape);

// Bytes moved by the Communicate at comm_index: 4*N*F feature payload plus
// 8*N*k for the edge set when the receiving side will aggregate with it
// before the next Sample, plus a 64-byte framing constant.
uint64_t transfer_size(const Architecture& arch, int comm_index, const ShapeTrace& trace);

double comm_latency_ms(uint64_t bytes, double bandwidth_mbps, double rtt_overhead_ms);

// LUT-accumulation cost model: sequential sum of per-layer latencies with
// Communicate layers priced analytically. Fills energy_device_j.
PerfReport estimate_cost(const Architecture& arch, const SystemConfig& sys,
                         const LatencyLUT& lut);

// E_total = E_idle + E_run + E_comm on the device, from the report's time
// components and the device profile's power coefficients.
double estimate_energy(const Architecture& arch, const SystemConfig& sys,
                       const LatencyLUT& lut, const PerfReport& report);

// (v - mean) / population std; all zeros when the input is constant.
std::vector<double> zscore_normalize(const std::vector<double>& values);

}  // namespace coedge
