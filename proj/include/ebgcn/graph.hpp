#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ebgcn/mask.hpp"

namespace ebgcn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Undirected node-classification dataset. Edges are stored once per
// undirected pair with i < j, sorted lexicographically, duplicate-free,
// no self-loops.
struct GraphDataset {
  std::string name;
  int num_nodes = 0;
  std::vector<std::pair<int32_t, int32_t>> edges;
  Matrix features;               // num_nodes x num_features
  std::vector<int32_t> labels;   // per node, in [0, num_classes)
  std::vector<uint8_t> train_mask, val_mask, test_mask;
  int num_classes = 0;

  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_features() const { return static_cast<int>(features.cols()); }

  // Throws validation_error on any violated invariant.
  void validate() const;
};

// Symmetric degree-normalized adjacency with self-loops in CSR layout.
// Off-diagonal entry (i,j) = v_ij / sqrt(deg_i * deg_j)
// self-loop  entry (i,i) = 1 / deg_i
// deg_i = 1 + sum over kept incident edges of |v_ij|.
struct NormalizedAdjacency {
  int n = 0;
  std::vector<int32_t> row_ptr;  // n + 1
  std::vector<int32_t> col;      // nnz, ascending within each row
  std::vector<double> val;       // nnz
  std::vector<int32_t> edge_id;  // nnz, undirected edge index; -1 = self-loop
  std::vector<double> degree;    // n

  int nnz() const { return static_cast<int>(col.size()); }

  // A_hat * x, deterministic summation order.
  Matrix multiply(const Matrix& x) const;

  Matrix to_dense() const;
  double entry(int i, int j) const;  // 0 when (i,j) not stored
};

GraphDataset load_bundle(const std::string& dir);
void save_bundle(const GraphDataset& ds, const std::string& dir);

// Stochastic block model fixture: `blocks` blocks of `nodes_per_block`
// nodes, intra-/inter-block edge probabilities p_in > p_out, labels equal
// block ids, block-indicator-plus-noise features, 10/10/80 stratified
// splits. Deterministic per seed.
GraphDataset gen_synthetic(uint64_t seed, int blocks, int nodes_per_block,
                           double p_in, double p_out, int feat_dim);

// Builds A_hat from per-undirected-edge values; `keep`, when given, drops
// masked-out edges from the structure before degrees are computed.
NormalizedAdjacency normalize_adjacency(const GraphDataset& ds,
                                        const Vector& edge_values,
                                        const PruneMask* keep = nullptr);

inline Vector unit_edge_values(const GraphDataset& ds) {
  return Vector::Ones(ds.num_edges());
}

}  // namespace ebgcn
