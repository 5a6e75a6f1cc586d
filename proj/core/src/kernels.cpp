#include "coedge/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coedge/errors.hpp"
#include "coedge/rng.hpp"

namespace coedge {

static size_t product(const std::vector<uint32_t>& dims) {
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return n;
}

Tensor Tensor::zeros_f32(std::vector<uint32_t> dims) {
  Tensor t;
  t.dims = std::move(dims);
  t.dtype = Dtype::F32;
  t.f.assign(product(t.dims), 0.0f);
  return t;
}

Tensor Tensor::zeros_i32(std::vector<uint32_t> dims) {
  Tensor t;
  t.dims = std::move(dims);
  t.dtype = Dtype::I32;
  t.i.assign(product(t.dims), 0);
  return t;
}

size_t Tensor::elems() const { return product(dims); }

bool operator==(const Tensor& a, const Tensor& b) {
  return a.dims == b.dims && a.dtype == b.dtype && a.f == b.f && a.i == b.i;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.dims != b.dims || a.dtype != Dtype::F32 || b.dtype != Dtype::F32) {
    throw DimensionError("max_abs_diff requires matching f32 tensors");
  }
  float worst = 0.0f;
  for (size_t i = 0; i < a.f.size(); ++i) {
    worst = std::max(worst, std::fabs(a.f[i] - b.f[i]));
  }
  return worst;
}

Tensor kernel_sample(const Tensor& features, int k) {
  const int n = static_cast<int>(features.dim(0));
  const int fd = static_cast<int>(features.dim(1));
  if (k >= n) throw DimensionError("sample: k must be < num_nodes");
  if (k < 1) throw DimensionError("sample: k must be >= 1");

  Tensor out = Tensor::zeros_i32({static_cast<uint32_t>(n), static_cast<uint32_t>(k)});
  std::vector<std::pair<float, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    const float* row_i = features.f.data() + static_cast<size_t>(i) * fd;
    for (int j = 0; j < n; ++j) {
      const float* row_j = features.f.data() + static_cast<size_t>(j) * fd;
      float d = 0.0f;
      for (int c = 0; c < fd; ++c) {
        const float diff = row_i[c] - row_j[c];
        d += diff * diff;
      }
      dist[j] = {d, j};
    }
    dist[i].first = std::numeric_limits<float>::infinity();  // exclude self
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int c = 0; c < k; ++c) {
      out.i[static_cast<size_t>(i) * k + c] = dist[c].second;
    }
  }
  return out;
}

Tensor kernel_aggregate(const Tensor& features, const Tensor& edges, Reducer reducer) {
  const int n = static_cast<int>(features.dim(0));
  const int fd = static_cast<int>(features.dim(1));
  if (edges.dtype != Dtype::I32 || edges.dims.size() != 2 ||
      static_cast<int>(edges.dim(0)) != n) {
    throw DimensionError("aggregate: edges must be [N, k] i32");
  }
  const int k = static_cast<int>(edges.dim(1));

  Tensor out = Tensor::zeros_f32(features.dims);
  for (int i = 0; i < n; ++i) {
    float* dst = out.f.data() + static_cast<size_t>(i) * fd;
    if (k == 0) continue;
    for (int e = 0; e < k; ++e) {
      const int32_t j = edges.i[static_cast<size_t>(i) * k + e];
      if (j < 0 || j >= n) throw DimensionError("aggregate: neighbor index out of range");
      const float* src = features.f.data() + static_cast<size_t>(j) * fd;
      if (e == 0 && reducer == Reducer::Max) {
        std::copy(src, src + fd, dst);
      } else if (reducer == Reducer::Max) {
        for (int c = 0; c < fd; ++c) dst[c] = std::max(dst[c], src[c]);
      } else {
        for (int c = 0; c < fd; ++c) dst[c] += src[c];
      }
    }
    if (reducer == Reducer::Mean) {
      const float inv = 1.0f / static_cast<float>(k);
      for (int c = 0; c < fd; ++c) dst[c] *= inv;
    }
  }
  return out;
}

Tensor kernel_combine(const Tensor& features, const Tensor& weights, const Tensor& bias) {
  const int n = static_cast<int>(features.dim(0));
  const int f_in = static_cast<int>(features.dim(1));
  if (weights.dims.size() != 2 || static_cast<int>(weights.dim(0)) != f_in) {
    throw DimensionError("combine: weights must be [F_in, F_out]");
  }
  const int f_out = static_cast<int>(weights.dim(1));
  if (static_cast<int>(bias.elems()) != f_out) {
    throw DimensionError("combine: bias must be [F_out]");
  }

  Tensor out = Tensor::zeros_f32({static_cast<uint32_t>(n), static_cast<uint32_t>(f_out)});
  for (int i = 0; i < n; ++i) {
    const float* x = features.f.data() + static_cast<size_t>(i) * f_in;
    float* y = out.f.data() + static_cast<size_t>(i) * f_out;
    std::copy(bias.f.begin(), bias.f.end(), y);
    for (int c = 0; c < f_in; ++c) {
      const float xv = x[c];
      if (xv == 0.0f) continue;
      const float* wrow = weights.f.data() + static_cast<size_t>(c) * f_out;
      for (int o = 0; o < f_out; ++o) y[o] += xv * wrow[o];
    }
    for (int o = 0; o < f_out; ++o) y[o] = std::max(y[o], 0.0f);
  }
  return out;
}

Tensor kernel_global_pool(const Tensor& features, PoolReducer reducer) {
  const int n = static_cast<int>(features.dim(0));
  const int fd = static_cast<int>(features.dim(1));
  if (n < 1) throw DimensionError("global_pool: empty input");

  Tensor out = Tensor::zeros_f32({1, static_cast<uint32_t>(fd)});
  std::copy(features.f.begin(), features.f.begin() + fd, out.f.begin());
  for (int i = 1; i < n; ++i) {
    const float* row = features.f.data() + static_cast<size_t>(i) * fd;
    for (int c = 0; c < fd; ++c) {
      if (reducer == PoolReducer::Max) {
        out.f[c] = std::max(out.f[c], row[c]);
      } else {
        out.f[c] += row[c];
      }
    }
  }
  if (reducer == PoolReducer::Mean) {
    const float inv = 1.0f / static_cast<float>(n);
    for (int c = 0; c < fd; ++c) out.f[c] *= inv;
  }
  return out;
}

Tensor make_combine_weights(uint64_t seed, int layer_index, int f_in, int f_out) {
  Rng rng(mix_seed(mix_seed(seed, static_cast<uint64_t>(layer_index)),
                   (static_cast<uint64_t>(f_in) << 32) | static_cast<uint64_t>(f_out)));
  Tensor w = Tensor::zeros_f32({static_cast<uint32_t>(f_in), static_cast<uint32_t>(f_out)});
  const double bound = std::sqrt(6.0 / (f_in + f_out));
  for (auto& v : w.f) v = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

Tensor make_combine_bias(uint64_t /*seed*/, int /*layer_index*/, int f_out) {
  return Tensor::zeros_f32({static_cast<uint32_t>(f_out)});
}

Tensor make_input_graph_edges(int num_nodes) {
  const int k = input_graph_degree(num_nodes);
  Tensor edges =
      Tensor::zeros_i32({static_cast<uint32_t>(num_nodes), static_cast<uint32_t>(k)});
  for (int i = 0; i < num_nodes; ++i) {
    // neighbors i±1, i±2, ... wrapping around
    for (int e = 0; e < k; ++e) {
      const int step = e / 2 + 1;
      const int j = (e % 2 == 0) ? (i + step) % num_nodes
                                 : (i - step % num_nodes + num_nodes) % num_nodes;
      edges.i[static_cast<size_t>(i) * k + e] = j;
    }
  }
  return edges;
}

Tensor random_input_tensor(const InputSpec& input, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros_f32(
      {static_cast<uint32_t>(input.num_nodes), static_cast<uint32_t>(input.feature_dim)});
  for (auto& v : t.f) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

Tensor execute_reference(const Architecture& arch, const Tensor& input, uint64_t seed,
                         std::vector<std::pair<int, int>>* layer_shapes) {
  Tensor feats = input;
  Tensor edges;
  bool have_edges = arch.input.has_input_graph;
  if (have_edges) edges = make_input_graph_edges(arch.input.num_nodes);

  if (layer_shapes) layer_shapes->clear();
  for (int idx = 0; idx < static_cast<int>(arch.layers.size()); ++idx) {
    const auto& layer = arch.layers[idx];
    switch (layer.op) {
      case OpKind::Sample:
        edges = kernel_sample(feats, layer.setting.sample_k);
        have_edges = true;
        break;
      case OpKind::Aggregate:
        if (!have_edges) throw InvalidArchitectureError("aggregate without an edge set");
        feats = kernel_aggregate(feats, edges, layer.setting.aggregate_reducer);
        break;
      case OpKind::Combine: {
        const int f_in = static_cast<int>(feats.dim(1));
        const int f_out = layer.setting.combine_out_dim;
        feats = kernel_combine(feats, make_combine_weights(seed, idx, f_in, f_out),
                               make_combine_bias(seed, idx, f_out));
        break;
      }
      case OpKind::GlobalPooling:
        feats = kernel_global_pool(feats, layer.setting.pooling_reducer);
        have_edges = false;
        edges = Tensor();
        break;
      case OpKind::Communicate:
      case OpKind::Identity:
        break;
    }
    if (layer_shapes) {
      layer_shapes->push_back({static_cast<int>(feats.dim(0)),
                               static_cast<int>(feats.dim(1))});
    }
  }
  return feats;
}

}  // namespace coedge
