#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "coedge/arch.hpp"

namespace coedge {

enum class Dtype : uint8_t { F32 = 0, I32 = 1 };

// Dense row-major tensor. Exactly one of the two buffers is in use,
// selected by dtype.
struct Tensor {
  std::vector<uint32_t> dims;
  Dtype dtype = Dtype::F32;
  std::vector<float> f;
  std::vector<int32_t> i;

  static Tensor zeros_f32(std::vector<uint32_t> dims);
  static Tensor zeros_i32(std::vector<uint32_t> dims);

  size_t elems() const;
  uint32_t dim(size_t idx) const { return dims[idx]; }
};

bool operator==(const Tensor& a, const Tensor& b);

// Max absolute element-wise difference; both tensors must be f32 and
// shape-identical.
float max_abs_diff(const Tensor& a, const Tensor& b);

// k nearest neighbors per row by Euclidean distance, self excluded, ties to
// the lower index, nearest first. Output is [N, k] i32. Requires k < N.
Tensor kernel_sample(const Tensor& features, int k);

// out[i] = reducer over {features[j] : j in edges.row(i)}. Mean divides by
// the neighbor count; an empty neighborhood yields zeros.
Tensor kernel_aggregate(const Tensor& features, const Tensor& edges, Reducer reducer);

// ReLU(features * weights + bias). weights is [F_in, F_out], bias [F_out].
Tensor kernel_combine(const Tensor& features, const Tensor& weights, const Tensor& bias);

// Column-wise max or mean to [1, F].
Tensor kernel_global_pool(const Tensor& features, PoolReducer reducer);

// Combine weights are derived from (seed, layer index, dims) so the device
// and the edge agree on them without shipping parameters.
Tensor make_combine_weights(uint64_t seed, int layer_index, int f_in, int f_out);
Tensor make_combine_bias(uint64_t seed, int layer_index, int f_out);

// Deterministic ring lattice standing in for a real input graph
// (has_input_graph inputs). Degree input_graph_degree(n).
Tensor make_input_graph_edges(int num_nodes);

// Uniform(-1, 1) f32 frame of the input shape, deterministic per seed.
Tensor random_input_tensor(const InputSpec& input, uint64_t seed);

// Runs every layer in order in one process, Communicate as a no-op. The
// single-process oracle that split execution must reproduce. layer_shapes,
// when given, receives each layer's output (rows, cols).
Tensor execute_reference(const Architecture& arch, const Tensor& input, uint64_t seed,
                         std::vector<std::pair<int, int>>* layer_shapes = nullptr);

}  // namespace coedge
