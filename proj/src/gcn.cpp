#include "ebgcn/gcn.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "ebgcn/errors.hpp"

namespace ebgcn {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

std::atomic<uint64_t> g_clamp_count{0};

void require_finite(const Matrix& m, const char* stage) {
  if (!m.allFinite()) {
    throw numeric_error(std::string("gcn_forward: non-finite value at stage ") + stage);
  }
}

// Dropout multiplier matrix: entries 0 with probability `dropout`, else
// 1/keep (inverted scaling, eval needs no rescale). Column-major fill
// order fixes the stream.
Matrix dropout_multipliers(Eigen::Index rows, Eigen::Index cols, double dropout, Rng& rng) {
  const double keep = 1.0 - dropout;
  const double scale = 1.0 / keep;
  Matrix d(rows, cols);
  double* p = d.data();
  const Eigen::Index total = rows * cols;
  for (Eigen::Index k = 0; k < total; ++k) {
    p[k] = rng.bernoulli(keep) ? scale : 0.0;
  }
  return d;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix z(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    z.row(i) = e / e.sum();
  }
  return z;
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden < 1 || epochs < 0) throw argument_error("TrainConfig: hidden >= 1, epochs >= 0 required");
  if (!(lr_weights > 0.0) || !(lr_graph > 0.0)) throw argument_error("TrainConfig: learning rates must be positive");
  if (weight_decay < 0.0 || lambda_reg < 0.0) throw argument_error("TrainConfig: decay/reg must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw argument_error("TrainConfig: dropout must be in [0,1)");
}

ForwardCache gcn_forward(const NormalizedAdjacency& a, const Matrix& x,
                         const GcnParams& p, bool training, double dropout,
                         Rng* rng, const Matrix* precomputed_xw0) {
  if (x.rows() != a.n) throw contract_error("gcn_forward: features/adjacency row mismatch");
  if (x.cols() != p.w0.rows() || p.w0.cols() != p.w1.rows()) {
    throw contract_error("gcn_forward: weight shapes inconsistent with input");
  }
  const bool use_dropout = training && dropout > 0.0;
  if (use_dropout && rng == nullptr) throw contract_error("gcn_forward: training dropout needs an rng");
  if (precomputed_xw0 && use_dropout) throw contract_error("gcn_forward: precomputed X*W0 is only valid without dropout");

  ForwardCache c;
  c.training = use_dropout;

  if (precomputed_xw0) {
    if (precomputed_xw0->rows() != a.n || precomputed_xw0->cols() != p.w0.cols()) {
      throw contract_error("gcn_forward: precomputed X*W0 has wrong shape");
    }
    c.xw0 = *precomputed_xw0;
  } else if (use_dropout) {
    c.drop_x = dropout_multipliers(x.rows(), x.cols(), dropout, *rng);
    c.xw0.noalias() = x.cwiseProduct(c.drop_x) * p.w0;
  } else {
    c.xw0.noalias() = x * p.w0;
  }
  require_finite(c.xw0, "X*W0");

  c.h1_pre = a.multiply(c.xw0);
  require_finite(c.h1_pre, "aggregate-1");
  c.h1 = c.h1_pre.cwiseMax(0.0);

  if (use_dropout) {
    c.drop_h1 = dropout_multipliers(c.h1.rows(), c.h1.cols(), dropout, *rng);
    c.h1w1.noalias() = c.h1.cwiseProduct(c.drop_h1) * p.w1;
  } else {
    c.h1w1.noalias() = c.h1 * p.w1;
  }
  require_finite(c.h1w1, "H1*W1");

  c.logits = a.multiply(c.h1w1);
  require_finite(c.logits, "aggregate-2");
  c.probs = row_softmax(c.logits);
  require_finite(c.probs, "softmax");
  return c;
}

double masked_cross_entropy(const Matrix& probs, const std::vector<int32_t>& labels,
                            const std::vector<uint8_t>& mask) {
  if (probs.rows() != static_cast<Eigen::Index>(labels.size()) ||
      labels.size() != mask.size()) {
    throw contract_error("masked_cross_entropy: length mismatch");
  }
  double loss = 0.0;
  int selected = 0;
  bool clamped = false;
  for (size_t n = 0; n < mask.size(); ++n) {
    if (!mask[n]) continue;
    ++selected;
    double z = probs(static_cast<Eigen::Index>(n), labels[n]);
    if (z < 1e-12) {
      z = 1e-12;
      clamped = true;
    }
    loss -= std::log(z);
  }
  if (selected == 0) throw argument_error("masked_cross_entropy: mask selects no node");
  if (clamped) {
    if (g_clamp_count.fetch_add(1) == 0) {
      std::cerr << "[ebgcn] warning: cross-entropy probability clamped at 1e-12\n";
    }
  }
  return loss;
}

uint64_t cross_entropy_clamp_count() { return g_clamp_count.load(); }

WeightGrads gcn_backward_weights(const ForwardCache& cache,
                                 const NormalizedAdjacency& a, const Matrix& x,
                                 const GcnParams& p,
                                 const std::vector<int32_t>& labels,
                                 const std::vector<uint8_t>& mask,
                                 double weight_decay) {
  if (cache.probs.rows() != a.n || cache.xw0.cols() != p.w0.cols() ||
      cache.h1w1.cols() != p.w1.cols() || x.rows() != a.n) {
    throw contract_error("gcn_backward_weights: cache/params mismatch");
  }
  if (cache.training &&
      (cache.drop_x.rows() != x.rows() || cache.drop_h1.rows() != cache.h1.rows())) {
    throw contract_error("gcn_backward_weights: dropout cache mismatch");
  }

  // dL/dlogits = Z - onehot(Y) on masked rows, 0 elsewhere.
  Matrix g = Matrix::Zero(cache.probs.rows(), cache.probs.cols());
  for (size_t n = 0; n < mask.size(); ++n) {
    if (!mask[n]) continue;
    const auto r = static_cast<Eigen::Index>(n);
    g.row(r) = cache.probs.row(r);
    g(r, labels[n]) -= 1.0;
  }

  const Matrix ag = a.multiply(g);  // A_hat symmetric, so A^T = A in the chain
  WeightGrads out;
  if (cache.training) {
    out.dw1.noalias() = cache.h1.cwiseProduct(cache.drop_h1).transpose() * ag;
  } else {
    out.dw1.noalias() = cache.h1.transpose() * ag;
  }

  Matrix dh1 = ag * p.w1.transpose();
  if (cache.training) dh1 = dh1.cwiseProduct(cache.drop_h1);
  // relu'(0) = 0
  Matrix dpre = (cache.h1_pre.array() > 0.0).select(dh1, 0.0);
  const Matrix adpre = a.multiply(dpre);
  if (cache.training) {
    out.dw0.noalias() = x.cwiseProduct(cache.drop_x).transpose() * adpre;
  } else {
    out.dw0.noalias() = x.transpose() * adpre;
  }
  if (weight_decay != 0.0) out.dw0 += weight_decay * p.w0;
  return out;
}

void adam_update(Matrix& w, AdamState& s, const Matrix& grad, double lr, int64_t t) {
  if (!grad.allFinite()) throw numeric_error("adam_update: non-finite gradient");
  s.m = kBeta1 * s.m + (1.0 - kBeta1) * grad;
  s.v = kBeta2 * s.v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  w.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + kEps);
}

void adam_step(GcnParams& p, const WeightGrads& g, double lr) {
  if (g.dw0.rows() != p.w0.rows() || g.dw0.cols() != p.w0.cols() ||
      g.dw1.rows() != p.w1.rows() || g.dw1.cols() != p.w1.cols()) {
    throw contract_error("adam_step: gradient shape mismatch");
  }
  ++p.step;
  if (p.has_weight_mask()) {
    adam_update(p.w0, p.adam0, g.dw0.cwiseProduct(p.keep0), lr, p.step);
    adam_update(p.w1, p.adam1, g.dw1.cwiseProduct(p.keep1), lr, p.step);
    p.w0 = p.w0.cwiseProduct(p.keep0);
    p.w1 = p.w1.cwiseProduct(p.keep1);
  } else {
    adam_update(p.w0, p.adam0, g.dw0, lr, p.step);
    adam_update(p.w1, p.adam1, g.dw1, lr, p.step);
  }
}

GcnParams init_params(int in_dim, int hidden, int out_dim, uint64_t seed) {
  if (in_dim < 1 || hidden < 1 || out_dim < 1) {
    throw argument_error("init_params: dimensions must be >= 1");
  }
  GcnParams p;
  p.w0.resize(in_dim, hidden);
  p.w1.resize(hidden, out_dim);
  Rng r0(derive_seed(seed, "init-w0"));
  const double b0 = std::sqrt(6.0 / (in_dim + hidden));
  for (Eigen::Index k = 0; k < p.w0.size(); ++k) p.w0.data()[k] = r0.uniform(-b0, b0);
  Rng r1(derive_seed(seed, "init-w1"));
  const double b1 = std::sqrt(6.0 / (hidden + out_dim));
  for (Eigen::Index k = 0; k < p.w1.size(); ++k) p.w1.data()[k] = r1.uniform(-b1, b1);
  p.adam0.init(in_dim, hidden);
  p.adam1.init(hidden, out_dim);
  return p;
}

double accuracy_from_probs(const Matrix& probs, const std::vector<int32_t>& labels,
                           const std::vector<uint8_t>& mask) {
  if (probs.rows() != static_cast<Eigen::Index>(labels.size()) ||
      labels.size() != mask.size()) {
    throw contract_error("accuracy_from_probs: length mismatch");
  }
  int64_t total = 0, hit = 0;
  for (size_t n = 0; n < mask.size(); ++n) {
    if (!mask[n]) continue;
    ++total;
    const auto r = static_cast<Eigen::Index>(n);
    int best = 0;
    for (Eigen::Index f = 1; f < probs.cols(); ++f) {
      if (probs(r, f) > probs(r, best)) best = static_cast<int>(f);
    }
    hit += (best == labels[n]);
  }
  if (total == 0) throw argument_error("accuracy: mask selects no node");
  return static_cast<double>(hit) / static_cast<double>(total);
}

double evaluate_accuracy(const NormalizedAdjacency& a, const Matrix& x,
                         const GcnParams& p, const std::vector<int32_t>& labels,
                         const std::vector<uint8_t>& mask) {
  const ForwardCache c = gcn_forward(a, x, p, /*training=*/false, 0.0, nullptr);
  return accuracy_from_probs(c.probs, labels, mask);
}

}  // namespace ebgcn
