#include "coedge/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "coedge/errors.hpp"
#include "coedge/json_util.hpp"
#include "coedge/rng.hpp"

namespace coedge {

PredictorModel init_predictor(uint64_t seed, int hidden) {
  Rng rng(seed);
  PredictorModel m;
  m.hidden = hidden;
  for (int l = 0; l < 3; ++l) {
    const int in_d = l == 0 ? m.d_in : hidden;
    auto& layer = m.gin[l];
    layer.w1 = Mat(in_d, hidden);
    layer.b1.assign(hidden, 0.0);
    layer.w2 = Mat(hidden, hidden);
    layer.b2.assign(hidden, 0.0);
    const double s1 = std::sqrt(2.0 / (in_d + hidden));
    for (auto& v : layer.w1.a) v = rng.normal() * s1;
    const double s2 = std::sqrt(2.0 / (2.0 * hidden));
    for (auto& v : layer.w2.a) v = rng.normal() * s2;
  }
  m.readout_w.assign(hidden, 0.0);
  const double s3 = std::sqrt(2.0 / (hidden + 1));
  for (auto& v : m.readout_w) v = rng.normal() * s3;
  m.readout_b = 0.0;
  return m;
}

GraphSample preprocess(const ArchGraph& g) {
  GraphSample s;
  s.n = g.node_count;
  s.x.resize(static_cast<size_t>(s.n) * kGraphFeatureDim);
  for (int v = 0; v < s.n; ++v) {
    for (int c = 0; c < kGraphFeatureDim; ++c) {
      s.x[static_cast<size_t>(v) * kGraphFeatureDim + c] = g.features[v][c];
    }
  }
  // in-neighbor CSR; the edge list is a multiset and stays one
  std::vector<int> degree(s.n, 0);
  for (const auto& [src, dst] : g.edges) {
    if (src < 0 || src >= s.n || dst < 0 || dst >= s.n) {
      throw DimensionError("graph edge endpoint out of range");
    }
    ++degree[dst];
  }
  s.nbr_off.resize(s.n + 1);
  s.nbr_off[0] = 0;
  for (int v = 0; v < s.n; ++v) s.nbr_off[v + 1] = s.nbr_off[v] + degree[v];
  s.nbr.resize(s.nbr_off[s.n]);
  std::vector<int> cursor(s.nbr_off.begin(), s.nbr_off.end() - 1);
  for (const auto& [src, dst] : g.edges) s.nbr[cursor[dst]++] = src;
  s.label = g.true_latency_ms.value_or(0.0);
  return s;
}

namespace {

struct LayerCache {
  std::vector<double> z;  // n x in_d, aggregated input to the MLP
  std::vector<double> p;  // n x h, pre-ReLU
  std::vector<double> r;  // n x h, post-ReLU
  std::vector<double> o;  // n x h, layer output
};

// h_v' = MLP(h_v + mean of in-neighbors); caches everything backward needs.
void layer_forward(const GinLayer& layer, const GraphSample& g, const std::vector<double>& in,
                   int in_d, int h, LayerCache& cache) {
  const int n = g.n;
  cache.z.assign(static_cast<size_t>(n) * in_d, 0.0);
  for (int v = 0; v < n; ++v) {
    double* zv = cache.z.data() + static_cast<size_t>(v) * in_d;
    const int begin = g.nbr_off[v], end = g.nbr_off[v + 1];
    const double inv = end > begin ? 1.0 / (end - begin) : 0.0;
    for (int e = begin; e < end; ++e) {
      const double* xu = in.data() + static_cast<size_t>(g.nbr[e]) * in_d;
      for (int c = 0; c < in_d; ++c) zv[c] += xu[c];
    }
    const double* xv = in.data() + static_cast<size_t>(v) * in_d;
    for (int c = 0; c < in_d; ++c) zv[c] = xv[c] + zv[c] * inv;
  }

  cache.p.assign(static_cast<size_t>(n) * h, 0.0);
  cache.r.assign(static_cast<size_t>(n) * h, 0.0);
  cache.o.assign(static_cast<size_t>(n) * h, 0.0);
  for (int v = 0; v < n; ++v) {
    const double* zv = cache.z.data() + static_cast<size_t>(v) * in_d;
    double* pv = cache.p.data() + static_cast<size_t>(v) * h;
    std::copy(layer.b1.begin(), layer.b1.end(), pv);
    for (int c = 0; c < in_d; ++c) {
      const double x = zv[c];
      if (x == 0.0) continue;
      const double* wrow = layer.w1.a.data() + static_cast<size_t>(c) * h;
      for (int o = 0; o < h; ++o) pv[o] += x * wrow[o];
    }
    double* rv = cache.r.data() + static_cast<size_t>(v) * h;
    for (int o = 0; o < h; ++o) rv[o] = pv[o] > 0.0 ? pv[o] : 0.0;
    double* ov = cache.o.data() + static_cast<size_t>(v) * h;
    std::copy(layer.b2.begin(), layer.b2.end(), ov);
    for (int c = 0; c < h; ++c) {
      const double x = rv[c];
      if (x == 0.0) continue;
      const double* wrow = layer.w2.a.data() + static_cast<size_t>(c) * h;
      for (int o = 0; o < h; ++o) ov[o] += x * wrow[o];
    }
  }
}

double forward_cached(const PredictorModel& m, const GraphSample& g,
                      std::array<LayerCache, 3>& caches) {
  const int h = m.hidden;
  const std::vector<double>* in = &g.x;
  for (int l = 0; l < 3; ++l) {
    const int in_d = l == 0 ? m.d_in : h;
    layer_forward(m.gin[l], g, *in, in_d, h, caches[l]);
    in = &caches[l].o;
  }
  double pred = m.readout_b;
  for (int v = 0; v < g.n; ++v) {
    const double* ov = in->data() + static_cast<size_t>(v) * h;
    for (int c = 0; c < h; ++c) pred += ov[c] * m.readout_w[c];
  }
  return pred;
}

// Flat layout: per gin layer w1, b1, w2, b2; then readout w, b.
struct ParamSlices {
  size_t w1[3], b1[3], w2[3], b2[3], rw, rb, total;
};

ParamSlices slices(const PredictorModel& m) {
  ParamSlices s{};
  size_t off = 0;
  for (int l = 0; l < 3; ++l) {
    const int in_d = l == 0 ? m.d_in : m.hidden;
    s.w1[l] = off;
    off += static_cast<size_t>(in_d) * m.hidden;
    s.b1[l] = off;
    off += m.hidden;
    s.w2[l] = off;
    off += static_cast<size_t>(m.hidden) * m.hidden;
    s.b2[l] = off;
    off += m.hidden;
  }
  s.rw = off;
  off += m.hidden;
  s.rb = off;
  off += 1;
  s.total = off;
  return s;
}

}  // namespace

size_t param_count(const PredictorModel& m) { return slices(m).total; }

std::vector<double> flatten_params(const PredictorModel& m) {
  const ParamSlices s = slices(m);
  std::vector<double> flat(s.total);
  for (int l = 0; l < 3; ++l) {
    std::copy(m.gin[l].w1.a.begin(), m.gin[l].w1.a.end(), flat.begin() + s.w1[l]);
    std::copy(m.gin[l].b1.begin(), m.gin[l].b1.end(), flat.begin() + s.b1[l]);
    std::copy(m.gin[l].w2.a.begin(), m.gin[l].w2.a.end(), flat.begin() + s.w2[l]);
    std::copy(m.gin[l].b2.begin(), m.gin[l].b2.end(), flat.begin() + s.b2[l]);
  }
  std::copy(m.readout_w.begin(), m.readout_w.end(), flat.begin() + s.rw);
  flat[s.rb] = m.readout_b;
  return flat;
}

void unflatten_params(PredictorModel& m, const std::vector<double>& flat) {
  const ParamSlices s = slices(m);
  if (flat.size() != s.total) throw DimensionError("parameter vector size mismatch");
  for (int l = 0; l < 3; ++l) {
    std::copy(flat.begin() + s.w1[l], flat.begin() + s.b1[l], m.gin[l].w1.a.begin());
    std::copy(flat.begin() + s.b1[l], flat.begin() + s.w2[l], m.gin[l].b1.begin());
    std::copy(flat.begin() + s.w2[l], flat.begin() + s.b2[l], m.gin[l].w2.a.begin());
    std::copy(flat.begin() + s.b2[l], flat.begin() + s.b2[l] + m.hidden,
              m.gin[l].b2.begin());
  }
  std::copy(flat.begin() + s.rw, flat.begin() + s.rb, m.readout_w.begin());
  m.readout_b = flat[s.rb];
}

double forward(const PredictorModel& m, const GraphSample& g) {
  if (static_cast<int>(g.x.size()) != g.n * m.d_in) {
    throw DimensionError("graph feature dimension does not match the model input");
  }
  std::array<LayerCache, 3> caches;
  return forward_cached(m, g, caches);
}

double forward(const PredictorModel& m, const ArchGraph& g) {
  return forward(m, preprocess(g));
}

double compute_gradients(const PredictorModel& m, const std::vector<const GraphSample*>& batch,
                         std::vector<double>& grad_out) {
  const ParamSlices s = slices(m);
  grad_out.assign(s.total, 0.0);
  if (batch.empty()) return 0.0;

  const int h = m.hidden;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;

  std::array<LayerCache, 3> caches;
  for (const GraphSample* gp : batch) {
    const GraphSample& g = *gp;
    if (g.label <= 0.0) throw ZeroTruthError("training label must be positive");
    const double pred = forward_cached(m, g, caches);
    const double err = pred - g.label;
    loss += std::fabs(err) / g.label * inv_b;
    const double dpred = (err > 0 ? 1.0 : err < 0 ? -1.0 : 0.0) / g.label * inv_b;
    if (dpred == 0.0) continue;

    const int n = g.n;
    // readout: pred = sum_v o3[v] . rw + rb
    const std::vector<double>& o3 = caches[2].o;
    for (int v = 0; v < n; ++v) {
      const double* ov = o3.data() + static_cast<size_t>(v) * h;
      for (int c = 0; c < h; ++c) grad_out[s.rw + c] += dpred * ov[c];
    }
    grad_out[s.rb] += dpred;

    // d o3[v][c] = dpred * rw[c] for every node
    std::vector<double> d_out(static_cast<size_t>(n) * h);
    for (int v = 0; v < n; ++v) {
      double* dv = d_out.data() + static_cast<size_t>(v) * h;
      for (int c = 0; c < h; ++c) dv[c] = dpred * m.readout_w[c];
    }

    for (int l = 2; l >= 0; --l) {
      const int in_d = l == 0 ? m.d_in : h;
      const GinLayer& layer = m.gin[l];
      const LayerCache& cache = caches[l];

      // o = r . w2 + b2
      std::vector<double> d_r(static_cast<size_t>(n) * h, 0.0);
      for (int v = 0; v < n; ++v) {
        const double* rv = cache.r.data() + static_cast<size_t>(v) * h;
        const double* dov = d_out.data() + static_cast<size_t>(v) * h;
        double* drv = d_r.data() + static_cast<size_t>(v) * h;
        for (int c = 0; c < h; ++c) {
          const double* wrow = layer.w2.a.data() + static_cast<size_t>(c) * h;
          double acc = 0.0;
          for (int o = 0; o < h; ++o) {
            grad_out[s.w2[l] + static_cast<size_t>(c) * h + o] += rv[c] * dov[o];
            acc += wrow[o] * dov[o];
          }
          drv[c] = acc;
        }
        for (int o = 0; o < h; ++o) grad_out[s.b2[l] + o] += dov[o];
      }

      // r = relu(p); p = z . w1 + b1
      std::vector<double> d_z(static_cast<size_t>(n) * in_d, 0.0);
      for (int v = 0; v < n; ++v) {
        const double* pv = cache.p.data() + static_cast<size_t>(v) * h;
        double* dpv = d_r.data() + static_cast<size_t>(v) * h;  // becomes d_p in place
        for (int o = 0; o < h; ++o) {
          if (pv[o] <= 0.0) dpv[o] = 0.0;
        }
        const double* zv = cache.z.data() + static_cast<size_t>(v) * in_d;
        double* dzv = d_z.data() + static_cast<size_t>(v) * in_d;
        for (int c = 0; c < in_d; ++c) {
          const double* wrow = layer.w1.a.data() + static_cast<size_t>(c) * h;
          double acc = 0.0;
          for (int o = 0; o < h; ++o) {
            grad_out[s.w1[l] + static_cast<size_t>(c) * h + o] += zv[c] * dpv[o];
            acc += wrow[o] * dpv[o];
          }
          dzv[c] = acc;
        }
        for (int o = 0; o < h; ++o) grad_out[s.b1[l] + o] += dpv[o];
      }

      // z[v] = in[v] + mean of in-neighbors: identity path plus scatter
      if (l > 0) {
        std::vector<double>& d_in = d_out;  // reuse as next iteration's d_out
        d_in.assign(static_cast<size_t>(n) * in_d, 0.0);
        for (int v = 0; v < n; ++v) {
          const double* dzv = d_z.data() + static_cast<size_t>(v) * in_d;
          double* div = d_in.data() + static_cast<size_t>(v) * in_d;
          for (int c = 0; c < in_d; ++c) div[c] += dzv[c];
          const int begin = g.nbr_off[v], end = g.nbr_off[v + 1];
          if (end == begin) continue;
          const double inv = 1.0 / (end - begin);
          for (int e = begin; e < end; ++e) {
            double* du = d_in.data() + static_cast<size_t>(g.nbr[e]) * in_d;
            for (int c = 0; c < in_d; ++c) du[c] += dzv[c] * inv;
          }
        }
      }
    }
  }
  return loss;
}

double mape(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw DimensionError("mape: length mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] <= 0.0) throw ZeroTruthError("mape: truth must be positive");
    sum += std::fabs(pred[i] - truth[i]) / truth[i];
  }
  return sum / static_cast<double>(pred.size());
}

void split_dataset(const std::vector<GraphSample>& dataset, double fraction, uint64_t seed,
                   std::vector<const GraphSample*>& train_out,
                   std::vector<const GraphSample*>& val_out) {
  std::vector<size_t> idx(dataset.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const size_t n_train = static_cast<size_t>(std::lround(fraction * dataset.size()));
  train_out.clear();
  val_out.clear();
  for (size_t i = 0; i < idx.size(); ++i) {
    (i < n_train ? train_out : val_out).push_back(&dataset[idx[i]]);
  }
}

static double eval_mape(const PredictorModel& m, const std::vector<const GraphSample*>& set) {
  if (set.empty()) return 0.0;
  std::vector<double> pred, truth;
  pred.reserve(set.size());
  truth.reserve(set.size());
  for (const GraphSample* g : set) {
    pred.push_back(forward(m, *g));
    truth.push_back(g->label);
  }
  return mape(pred, truth);
}

TrainHistory train(PredictorModel& m, const std::vector<GraphSample>& dataset,
                   const TrainConfig& cfg) {
  if (dataset.size() < 10) throw DimensionError("train: dataset must have >= 10 samples");
  std::vector<const GraphSample*> train_set, val_set;
  split_dataset(dataset, cfg.split_fraction, cfg.seed, train_set, val_set);

  const ParamSlices s = slices(m);
  std::vector<double> params = flatten_params(m);
  std::vector<double> grad, m1(s.total, 0.0), m2(s.total, 0.0);
  int64_t step = 0;

  const bool full_batch = train_set.size() < 1024;
  Rng shuffle_rng(mix_seed(cfg.seed, 0xba7c4e5ULL));

  TrainHistory history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<const GraphSample*> order = train_set;
    if (!full_batch) shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int batches = 0;
    const size_t bs = full_batch ? order.size() : static_cast<size_t>(cfg.batch_size);
    for (size_t start = 0; start < order.size(); start += bs) {
      const size_t stop = std::min(order.size(), start + bs);
      std::vector<const GraphSample*> batch(order.begin() + start, order.begin() + stop);
      const double loss = compute_gradients(m, batch, grad);
      if (!std::isfinite(loss)) throw NonFiniteError("training loss diverged");
      epoch_loss += loss;
      ++batches;

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (size_t i = 0; i < s.total; ++i) {
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        params[i] -= cfg.learning_rate * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + cfg.eps);
      }
      unflatten_params(m, params);
    }
    history.train_mape.push_back(batches ? epoch_loss / batches : 0.0);
    history.val_mape.push_back(eval_mape(m, val_set));
  }
  return history;
}

double within_fraction(const std::vector<double>& pred, const std::vector<double>& truth,
                       double bound) {
  if (pred.empty()) return 0.0;
  size_t hit = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] <= 0.0) throw ZeroTruthError("within_fraction: truth must be positive");
    if (std::fabs(pred[i] - truth[i]) / truth[i] <= bound) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double pairwise_order_accuracy(const std::vector<double>& pred,
                               const std::vector<double>& truth, double tie_rel) {
  const size_t n = pred.size();
  if (n < 2) return 1.0;
  size_t correct = 0, total = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      ++total;
      const double hi = std::max(truth[i], truth[j]);
      if (hi <= 0.0 || std::fabs(truth[i] - truth[j]) <= tie_rel * hi) {
        ++correct;  // tie: either order accepted
        continue;
      }
      if ((pred[i] - pred[j]) * (truth[i] - truth[j]) > 0.0) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

PredictionReport predict_accuracy_report(const PredictorModel& m,
                                         const std::vector<GraphSample>& testset,
                                         double error_bound) {
  std::vector<double> pred, truth;
  pred.reserve(testset.size());
  truth.reserve(testset.size());
  for (const auto& g : testset) {
    pred.push_back(forward(m, g));
    truth.push_back(g.label);
  }
  PredictionReport r;
  r.within_bound_fraction = within_fraction(pred, truth, error_bound);
  r.pairwise_order_accuracy = pairwise_order_accuracy(pred, truth);
  return r;
}

// --- serialization ---

static json mat_to_json(const Mat& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

static Mat mat_from_json(const json& j) {
  Mat m(require_field(j, "rows", "matrix").get<int>(),
        require_field(j, "cols", "matrix").get<int>());
  const auto data = require_field(j, "data", "matrix").get<std::vector<double>>();
  if (data.size() != m.a.size()) throw JsonSchemaError("matrix data size mismatch");
  m.a = data;
  return m;
}

nlohmann::json model_to_json(const PredictorModel& m) {
  json layers = json::array();
  for (const auto& l : m.gin) {
    layers.push_back(json{{"w1", mat_to_json(l.w1)},
                          {"b1", l.b1},
                          {"w2", mat_to_json(l.w2)},
                          {"b2", l.b2}});
  }
  return json{{"d_in", m.d_in},
              {"hidden", m.hidden},
              {"layers", layers},
              {"readout", {{"w", m.readout_w}, {"b", m.readout_b}}}};
}

PredictorModel model_from_json(const nlohmann::json& j) {
  PredictorModel m;
  m.d_in = require_field(j, "d_in", "model").get<int>();
  m.hidden = require_field(j, "hidden", "model").get<int>();
  const json& layers = require_field(j, "layers", "model");
  if (layers.size() != 3) throw JsonSchemaError("model: expected 3 GIN layers");
  for (int l = 0; l < 3; ++l) {
    m.gin[l].w1 = mat_from_json(layers[l]["w1"]);
    m.gin[l].b1 = layers[l]["b1"].get<std::vector<double>>();
    m.gin[l].w2 = mat_from_json(layers[l]["w2"]);
    m.gin[l].b2 = layers[l]["b2"].get<std::vector<double>>();
  }
  const json& r = require_field(j, "readout", "model");
  m.readout_w = require_field(r, "w", "readout").get<std::vector<double>>();
  m.readout_b = require_field(r, "b", "readout").get<double>();
  if (static_cast<int>(m.readout_w.size()) != m.hidden) {
    throw JsonSchemaError("model: readout width mismatch");
  }
  return m;
}

// --- synthetic data ---

std::vector<DatasetEntry> generate_synthetic_dataset(const SpaceConfig& space,
                                                     const SystemConfig& sys,
                                                     const LatencyLUT& lut, int count,
                                                     uint64_t seed,
                                                     const SyntheticDataParams& params) {
  Rng rng(seed);
  std::vector<DatasetEntry> out;
  out.reserve(count);
  int guard = 0;
  while (static_cast<int>(out.size()) < count) {
    Architecture arch = sample_random(space, rng);
    if (!check_validity(arch).empty()) {
      if (++guard > count * 100000) {
        throw InvalidArchitectureError("synthetic dataset: validity rate too low");
      }
      continue;
    }
    const PerfReport report = estimate_cost(arch, sys, lut);
    const MappingScheme mapping = derive_mapping(arch);
    int n_dev = 0, n_edge = 0;
    for (size_t i = 0; i < arch.layers.size(); ++i) {
      if (arch.layers[i].op == OpKind::Communicate) continue;
      (mapping.placement[i] == Placement::Device ? n_dev : n_edge) += 1;
    }
    const double det = report.total_latency_ms * params.multiplier +
                       params.per_device_op_ms * n_dev + params.per_edge_op_ms * n_edge +
                       params.comm_inflation * report.comm_ms;
    const double label = det * std::max(1.0 + params.noise_frac * rng.normal(), 0.1);

    DatasetEntry entry;
    entry.arch = std::move(arch);
    entry.graph = build_graph(entry.arch, sys, lut);
    entry.graph.true_latency_ms = label;
    entry.est_total_ms = report.total_latency_ms;
    entry.label_ms = label;
    out.push_back(std::move(entry));
  }
  return out;
}

void save_dataset_jsonl(const std::string& path, const std::vector<DatasetEntry>& data) {
  std::ofstream outf(path);
  if (!outf) throw JsonSchemaError("cannot write " + path);
  for (const auto& e : data) outf << graph_to_json(e.graph).dump() << "\n";
}

std::vector<GraphSample> load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonSchemaError("cannot open " + path);
  std::vector<GraphSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const ArchGraph g = graph_from_json(json::parse(line));
    if (!g.true_latency_ms) throw JsonSchemaError("dataset line missing true_latency_ms");
    out.push_back(preprocess(g));
  }
  return out;
}

}  // namespace coedge
