#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ebgcn {

// Counting convention applied everywhere; printed in report headers.
inline constexpr const char* kFlopsConvention =
    "multiply-add = 2 FLOPs; aggregation counts stored adjacency entries "
    "incl. self-loops; softmax/ReLU/normalization excluded; backward pass "
    "costed at backward_factor x forward";

struct FlopsEntry {
  std::string label;
  uint64_t value = 0;
};

// Totals always equal the exact sum of their breakdown entries.
struct FlopsReport {
  uint64_t inference_flops = 0;
  uint64_t training_flops = 0;
  uint64_t memory_bytes = 0;
  std::vector<FlopsEntry> inference_breakdown;  // per layer, per term
  std::vector<FlopsEntry> training_breakdown;   // per phase
  std::vector<FlopsEntry> memory_breakdown;     // per layer, per term
  double pg = 0.0, pw = 0.0;
  std::string convention = kFlopsConvention;
};

// Per layer: 2 * m_kept * F_out (aggregation) +
//            2 * n * round((1-pw) * F_in * F_out) (combination).
// m_kept counts stored directed entries including self-loops
// (2 * kept undirected edges + n).
uint64_t inference_flops(int64_t n, int64_t m_kept_directed,
                         const std::vector<int>& layer_dims, double pw,
                         std::vector<FlopsEntry>* breakdown = nullptr);

// Same aggregation term, but combination uses actual per-layer surviving
// weight counts (what pipeline records use once a real mask exists).
uint64_t inference_flops_counts(int64_t n, int64_t m_kept_directed,
                                const std::vector<int>& layer_dims,
                                const std::vector<int64_t>& kept_weights,
                                std::vector<FlopsEntry>* breakdown = nullptr);

// epochs * (forward + round(backward_factor * forward)).
uint64_t training_flops(uint64_t per_epoch_inference, int64_t epochs,
                        double backward_factor = 2.0);

// Activations plus surviving weights:
// sum over layers of (n * F_out + round((1-pw) * F_in * F_out)) * bytes.
uint64_t memory_estimate(int64_t n, const std::vector<int>& layer_dims, double pw,
                         int64_t bytes_per_value,
                         std::vector<FlopsEntry>* breakdown = nullptr);

uint64_t memory_estimate_counts(int64_t n, const std::vector<int>& layer_dims,
                                const std::vector<int64_t>& kept_weights,
                                int64_t bytes_per_value,
                                std::vector<FlopsEntry>* breakdown = nullptr);

// Stored directed entries incl. self-loops for a graph with `kept`
// undirected edges over n nodes.
inline int64_t stored_entries(int64_t n, int64_t kept_undirected) {
  return 2 * kept_undirected + n;
}

// One training phase for report assembly: `epochs` at the given
// per-epoch inference cost.
struct PhaseCost {
  std::string name;
  uint64_t per_epoch_inference = 0;
  int64_t epochs = 0;
};

// Assembles the full accounting for a finished run: inference totals and
// per-layer aggregation/combination breakdown for the final model, training
// totals per phase, and the memory estimate, all from the surviving graph
// and weight counts.
FlopsReport build_flops_report(int64_t n, int64_t m_kept_directed,
                               const std::vector<int>& layer_dims,
                               const std::vector<int64_t>& kept_weights,
                               const std::vector<PhaseCost>& phases,
                               double backward_factor, double pg, double pw);

}  // namespace ebgcn
