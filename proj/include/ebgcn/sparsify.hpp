#pragma once

#include <cstdint>
#include <vector>

#include "ebgcn/gcn.hpp"
#include "ebgcn/graph.hpp"
#include "ebgcn/mask.hpp"

namespace ebgcn {

// Trainable value per undirected edge (the learnable view of A), with its
// own Adam state. Values start at 1.
struct EdgeParams {
  Vector values;
  Vector m, v;
  int64_t step = 0;

  explicit EdgeParams(int num_edges)
      : values(Vector::Ones(num_edges)),
        m(Vector::Zero(num_edges)),
        v(Vector::Zero(num_edges)) {}
};

void adam_step(EdgeParams& p, const Vector& grad, double lr);

// Masked cross-entropy through an eval-mode forward on A_hat(values), plus
// the l1 term lambda * sum|values|. `a` must have been built from `values`.
double graph_loss(const NormalizedAdjacency& a, const Matrix& x,
                  const GcnParams& params, const std::vector<int32_t>& labels,
                  const std::vector<uint8_t>& mask, const Vector& values,
                  double lambda);

// Analytic d graph_loss / d value_e for every undirected edge. Accounts for
// both A_hat applications in the forward AND the chain through the degree
// terms (values sit in the numerator and in deg via |v|); the l1 subgradient
// uses sign(0) = 0. Edges absent from `a` (pruned by a keep mask) receive
// only the l1 term. `cache` must come from an eval-mode forward on `a`.
Vector grad_edge_values(const ForwardCache& cache, const NormalizedAdjacency& a,
                        const Matrix& x, const GcnParams& params,
                        const std::vector<int32_t>& labels,
                        const std::vector<uint8_t>& mask, const Vector& values,
                        double lambda, bool through_degrees = true);

// Keeps exactly round((1-p)*len) entries of largest |magnitude|; ties at
// the cut keep the lower index.
PruneMask derive_mask(const Vector& magnitudes, double p);

// W0 then W1, row-major, as one flat vector (the global ranking order used
// by weight masks).
Vector flatten_weights(const GcnParams& params);

// Global magnitude ranking across both matrices by default; per_layer
// ranks within each matrix at ratio p and concatenates.
PruneMask derive_weight_mask(const GcnParams& params, double p, bool per_layer = false);

struct GraphPruneResult {
  std::vector<int32_t> kept_edges;  // original edge indices, ascending
  Vector kept_values;
};

// Surviving edges retain their trained values; downstream normalization
// recomputes degrees from the survivors.
GraphPruneResult apply_graph_prune(const Vector& edge_values, const PruneMask& mask);

// Zeroes masked weight entries and their moments and installs freeze masks
// so subsequent adam steps leave them at exactly 0. Mask length must be
// w0.size + w1.size, flattened row-major W0 then W1.
void apply_weight_prune(GcnParams& params, const PruneMask& mask);

}  // namespace ebgcn
