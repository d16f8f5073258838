#pragma once

#include <cstdint>
#include <vector>

#include "ebgcn/graph.hpp"
#include "ebgcn/rng.hpp"

namespace ebgcn {

struct AdamState {
  Matrix m, v;  // first/second moments, same shape as the parameter

  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }
};

// Two-layer GCN weights plus optimizer state. keep0/keep1, when non-empty,
// are 0/1 masks from weight pruning: masked entries stay exactly zero under
// further adam steps.
struct GcnParams {
  Matrix w0;  // in_dim x hidden
  Matrix w1;  // hidden x out_dim
  AdamState adam0, adam1;
  int64_t step = 0;
  Matrix keep0, keep1;

  bool has_weight_mask() const { return keep0.size() != 0; }
  int64_t weight_count() const { return w0.size() + w1.size(); }
};

struct TrainConfig {
  int hidden = 16;
  int epochs = 100;
  double lr_weights = 0.01;
  double lr_graph = 0.001;
  double weight_decay = 5e-4;  // applied to w0 only
  double dropout = 0.5;        // applied to X and H1 in train mode
  uint64_t seed = 0;
  double lambda_reg = 0.01;    // l1 coefficient on edge values

  void validate() const;
};

// Everything the backward pass and the edge-gradient need from a forward
// run. xw0/h1w1 hold the post-dropout dense products, so in eval mode they
// are exactly X*W0 and H1*W1.
struct ForwardCache {
  Matrix xw0;     // (X . drop_x) * W0,  N x H
  Matrix h1_pre;  // A_hat * xw0,        N x H
  Matrix h1;      // relu(h1_pre),       N x H
  Matrix h1w1;    // (h1 . drop_h1)*W1,  N x F
  Matrix logits;  // A_hat * h1w1,       N x F
  Matrix probs;   // row softmax,        N x F
  Matrix drop_x, drop_h1;  // dropout multipliers (0 or 1/keep); empty in eval
  bool training = false;
};

// Z = softmax(A_hat relu(A_hat X W0) W1), row-wise stable softmax.
// `rng` is consumed only when training && dropout > 0. When W0 is frozen
// and dropout is off, callers may pass a precomputed X*W0 to skip the
// dominant dense product.
ForwardCache gcn_forward(const NormalizedAdjacency& a, const Matrix& x,
                         const GcnParams& p, bool training, double dropout,
                         Rng* rng, const Matrix* precomputed_xw0 = nullptr);

// Sum (not mean) of -ln Z[n, y_n] over masked nodes; probabilities clamped
// at 1e-12 (counted, see cross_entropy_clamp_count).
double masked_cross_entropy(const Matrix& probs,
                            const std::vector<int32_t>& labels,
                            const std::vector<uint8_t>& mask);

uint64_t cross_entropy_clamp_count();

struct WeightGrads {
  Matrix dw0, dw1;
};

// Analytic gradient of the masked cross-entropy through the two-layer
// forward, using dL/dlogits = Z - onehot(Y) on masked rows; weight decay
// contributes weight_decay * W0 to dw0.
WeightGrads gcn_backward_weights(const ForwardCache& cache,
                                 const NormalizedAdjacency& a, const Matrix& x,
                                 const GcnParams& p,
                                 const std::vector<int32_t>& labels,
                                 const std::vector<uint8_t>& mask,
                                 double weight_decay);

// Bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8) over both weight
// matrices; honors keep0/keep1 freeze masks.
void adam_step(GcnParams& p, const WeightGrads& g, double lr);

// Shared Adam core; t is the post-increment (1-based) step counter.
void adam_update(Matrix& w, AdamState& s, const Matrix& grad, double lr, int64_t t);

// Glorot-uniform initialization, bound sqrt(6/(fan_in+fan_out)).
GcnParams init_params(int in_dim, int hidden, int out_dim, uint64_t seed);

// Fraction of masked nodes with argmax_f Z[n,f] == Y[n]; ties broken by
// the lowest class index. Runs an eval-mode forward.
double evaluate_accuracy(const NormalizedAdjacency& a, const Matrix& x,
                         const GcnParams& p, const std::vector<int32_t>& labels,
                         const std::vector<uint8_t>& mask);

// Same tie-break rule, applied to already-computed probabilities.
double accuracy_from_probs(const Matrix& probs, const std::vector<int32_t>& labels,
                           const std::vector<uint8_t>& mask);

}  // namespace ebgcn
