#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dbsn/concrete.hpp"
#include "dbsn/rng.hpp"
#include "dbsn/tensor.hpp"

namespace dbsn {

// Weight-sharing supernet: a stack of cells whose edges mix K candidate dense
// operations by a relaxed structure sample. All cells share one structure;
// weights are per cell (widths shrink between cells via affine downsampling).

enum class OpKind { Zero, Identity, Affine, AffineRelu };

OpKind op_kind_from_string(const std::string& s);
std::string to_string(OpKind k);

struct CellSpec {
  int num_nodes = 4;             // B sequential nodes; node 1 is the cell input
  std::vector<OpKind> op_kinds;  // K candidate ops per edge
  int node_width = 8;
  bool normalize = false;  // per-node zero-mean/unit-variance over features

  int ops_per_edge() const { return static_cast<int>(op_kinds.size()); }
  int num_edges() const { return num_nodes * (num_nodes - 1) / 2; }
};

// Canonical edge enumeration shared by logits, samples and weights:
// for target node j = 1..B-1 (0-based), source i = 0..j-1 -> j*(j-1)/2 + i.
inline int edge_index(int i, int j) { return j * (j - 1) / 2 + i; }

struct NetworkSpec {
  int input_dim = 2;
  int num_classes = 2;
  int num_cells = 2;
  CellSpec cell;
  double downsample_factor = 0.4;  // width compression between cells, rounded up

  void validate() const;
  // node width of each cell; widths after the first follow
  // ceil(factor * B * previous_width)
  std::vector<int> cell_widths() const;
  int final_width() const;  // width of the last cell's concatenated output
};

// Per-edge categorical logits, shared across all cells.
struct StructureLogits {
  std::vector<Tensor> theta;  // num_edges tensors of shape [K]

  int num_edges() const { return static_cast<int>(theta.size()); }
  static StructureLogits init(const CellSpec& cell, std::uint64_t seed, double stddev = 1e-3);
};

// One relaxed structure: an EdgeSample per edge.
struct StructureSample {
  std::vector<EdgeSample> edges;
};

// Pathwise structure sample; Gumbel noise comes from per-edge substreams keyed
// by (seed, step, mc_sample, edge) so draws are reproducible and resumable.
StructureSample sample_structure(const StructureLogits& logits, const SharpTemp& st,
                                 std::uint64_t seed, std::uint64_t step, std::uint64_t mc_sample);

// Fixed uniform masks (alpha = 1/K on every edge).
StructureSample uniform_structure(const CellSpec& cell);

// Deterministic point structure softmax(theta / tau): the beta = 0 limit.
StructureSample point_structure(const StructureLogits& logits, double tau);

// Sum over edges of the single-sample KL integrand.
Tensor structure_kl_term(const StructureSample& sample, const StructureLogits& logits,
                         const SharpTemp& st, double tau_prior);

struct AffineParam {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  bool defined() const { return weight.defined(); }
};

// Shared weights: one store serves every structure sample.
struct WeightStore {
  AffineParam stem;  // input_dim -> width of first cell
  // edge_ops[cell][edge][k]; only affine-family ops carry parameters
  std::vector<std::vector<std::vector<AffineParam>>> edge_ops;
  std::vector<AffineParam> downsample;  // cell i output -> cell i+1 input
  AffineParam head;                     // last cell output -> class logits

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  // Structural copy with fn applied to each parameter tensor, visited in the
  // same order as parameters(); used to splice per-sample weight expressions
  // (e.g. mu + sigma * eps) in front of the shared forward pass.
  WeightStore transformed(const std::function<Tensor(const Tensor&, std::size_t)>& fn) const;

  // He-initialized weights (N(0, 2/fan_in)), zero biases.
  static WeightStore init(const NetworkSpec& spec, std::uint64_t seed);
};

// Test-time/train-time multiplicative noise on affine-family op outputs.
// Masks come from substream(seed, {counter}) in application order.
struct DropoutCtx {
  double rate = 0.0;
  std::uint64_t seed = 0;
  mutable std::uint64_t counter = 0;
};

// Weighted sum of the K candidate op outputs, weights = alpha entries.
Tensor edge_forward(const Tensor& input, const Tensor& alpha,
                    const std::vector<AffineParam>& edge_weights,
                    const std::vector<OpKind>& kinds, const DropoutCtx* dropout = nullptr);

// Nodes in topological order (node 1 = cell input); returns the concatenation
// of nodes 2..B followed by the cell input.
Tensor cell_forward(const Tensor& cell_input, const StructureSample& alpha,
                    const std::vector<std::vector<AffineParam>>& cell_weights,
                    const CellSpec& cell, const DropoutCtx* dropout = nullptr);

// stem -> (cell, downsample)* -> cell -> head; logits [batch, num_classes].
Tensor network_forward(const Tensor& x, const StructureSample& alpha, const WeightStore& w,
                       const NetworkSpec& spec, const DropoutCtx* dropout = nullptr);

}  // namespace dbsn
