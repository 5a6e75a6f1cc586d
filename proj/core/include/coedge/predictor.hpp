#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "coedge/arch_graph.hpp"
#include "coedge/oracle.hpp"

namespace coedge {

class Rng;

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

// One GIN layer: node update h_v' = MLP(h_v + mean of in-neighbors), with the
// MLP being dense -> ReLU -> dense.
struct GinLayer {
  Mat w1;
  std::vector<double> b1;
  Mat w2;
  std::vector<double> b2;
};

struct PredictorModel {
  int d_in = kGraphFeatureDim;
  int hidden = 32;
  std::array<GinLayer, 3> gin;
  std::vector<double> readout_w;  // global sum pooling, then dense hidden -> 1
  double readout_b = 0.0;
};

PredictorModel init_predictor(uint64_t seed, int hidden = 32);

nlohmann::json model_to_json(const PredictorModel& m);
PredictorModel model_from_json(const nlohmann::json& j);

// ArchGraph preprocessed for training: flattened features and an in-neighbor
// CSR (multiset, so duplicated edges keep their weight in the mean).
struct GraphSample {
  int n = 0;
  std::vector<double> x;         // n x d_in, row-major
  std::vector<int32_t> nbr;      // concatenated in-neighbor lists
  std::vector<int32_t> nbr_off;  // n + 1 offsets
  double label = 0.0;
};

GraphSample preprocess(const ArchGraph& g);

double forward(const PredictorModel& m, const GraphSample& g);
double forward(const PredictorModel& m, const ArchGraph& g);

// All parameters in a fixed flat order (gin layers, then readout); the layout
// the trainer and finite-difference checks share.
size_t param_count(const PredictorModel& m);
std::vector<double> flatten_params(const PredictorModel& m);
void unflatten_params(PredictorModel& m, const std::vector<double>& flat);

// MAPE loss over the batch and its gradient w.r.t. every parameter.
double compute_gradients(const PredictorModel& m, const std::vector<const GraphSample*>& batch,
                         std::vector<double>& grad_out);

// mean over i of |pred_i - truth_i| / truth_i. Throws ZeroTruthError when a
// truth is not positive.
double mape(const std::vector<double>& pred, const std::vector<double>& truth);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 128;       // used once the training split reaches 1024
  uint64_t seed = 0;
  double split_fraction = 0.7;
};

struct TrainHistory {
  std::vector<double> train_mape;  // per epoch, mean over batches
  std::vector<double> val_mape;
};

// Deterministic 70/30-style split by seeded shuffle; train() uses the same
// function, so callers can recover the exact held-out set.
void split_dataset(const std::vector<GraphSample>& dataset, double fraction, uint64_t seed,
                   std::vector<const GraphSample*>& train_out,
                   std::vector<const GraphSample*>& val_out);

TrainHistory train(PredictorModel& m, const std::vector<GraphSample>& dataset,
                   const TrainConfig& cfg);

struct PredictionReport {
  double within_bound_fraction = 0.0;
  double pairwise_order_accuracy = 0.0;
};

double within_fraction(const std::vector<double>& pred, const std::vector<double>& truth,
                       double bound);

// Share of unordered pairs whose predicted order matches the true order;
// pairs whose truths differ by at most tie_rel count as correct either way.
double pairwise_order_accuracy(const std::vector<double>& pred,
                               const std::vector<double>& truth, double tie_rel = 0.005);

PredictionReport predict_accuracy_report(const PredictorModel& m,
                                         const std::vector<GraphSample>& testset,
                                         double error_bound);

// --- synthetic training data ---

// Injects the systematic runtime overheads the plain LUT sum cannot see:
// a multiplicative gap, per-op dispatch costs that differ by placement,
// inflated communication, and 2% measurement noise.
struct SyntheticDataParams {
  double multiplier = 1.1;
  double per_device_op_ms = 0.4;
  double per_edge_op_ms = 0.7;
  double comm_inflation = 0.15;
  double noise_frac = 0.02;
};

struct DatasetEntry {
  Architecture arch;
  ArchGraph graph;          // true_latency_ms carries the label
  double est_total_ms = 0;  // plain cost-estimator total, the LUT baseline
  double label_ms = 0;
};

std::vector<DatasetEntry> generate_synthetic_dataset(const SpaceConfig& space,
                                                     const SystemConfig& sys,
                                                     const LatencyLUT& lut, int count,
                                                     uint64_t seed,
                                                     const SyntheticDataParams& params = {});

void save_dataset_jsonl(const std::string& path, const std::vector<DatasetEntry>& data);
std::vector<GraphSample> load_dataset_jsonl(const std::string& path);

}  // namespace coedge
