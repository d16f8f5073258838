#include "ebgcn/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ebgcn/errors.hpp"

namespace ebgcn {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

void adam_step(EdgeParams& p, const Vector& grad, double lr) {
  if (grad.size() != p.values.size()) throw contract_error("adam_step(edges): length mismatch");
  if (!grad.allFinite()) throw numeric_error("adam_step(edges): non-finite gradient");
  ++p.step;
  p.m = kBeta1 * p.m + (1.0 - kBeta1) * grad;
  p.v = kBeta2 * p.v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(p.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(p.step));
  p.values.array() -= lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + kEps);
}

double graph_loss(const NormalizedAdjacency& a, const Matrix& x,
                  const GcnParams& params, const std::vector<int32_t>& labels,
                  const std::vector<uint8_t>& mask, const Vector& values,
                  double lambda) {
  const ForwardCache c = gcn_forward(a, x, params, /*training=*/false, 0.0, nullptr);
  return masked_cross_entropy(c.probs, labels, mask) +
         lambda * values.cwiseAbs().sum();
}

Vector grad_edge_values(const ForwardCache& cache, const NormalizedAdjacency& a,
                        const Matrix& x, const GcnParams& params,
                        const std::vector<int32_t>& labels,
                        const std::vector<uint8_t>& mask, const Vector& values,
                        double lambda, bool through_degrees) {
  if (cache.training) throw contract_error("grad_edge_values: cache must be eval-mode (dropout off)");
  if (cache.probs.rows() != a.n || x.rows() != a.n) {
    throw contract_error("grad_edge_values: cache/adjacency mismatch");
  }
  const auto m = values.size();

  // dL/dlogits
  Matrix g = Matrix::Zero(cache.probs.rows(), cache.probs.cols());
  for (size_t n = 0; n < mask.size(); ++n) {
    if (!mask[n]) continue;
    const auto r = static_cast<Eigen::Index>(n);
    g.row(r) = cache.probs.row(r);
    g(r, labels[n]) -= 1.0;
  }

  const Matrix ag = a.multiply(g);
  Matrix r = ag * params.w1.transpose();
  r = (cache.h1_pre.array() > 0.0).select(r, 0.0);

  // Per stored entry (i,j): T_ij = G[i,:].Q[j,:] + R[i,:].P[j,:] with
  // Q = H1*W1 and P = X*W0 from the eval cache. Direct value term goes to
  // the owning edge; T_ij * S_ij feeds the degree chain.
  Vector grad = Vector::Zero(m);
  Vector row_sum = Vector::Zero(a.n);
  Vector col_sum = Vector::Zero(a.n);
  for (int i = 0; i < a.n; ++i) {
    for (int32_t idx = a.row_ptr[i]; idx < a.row_ptr[i + 1]; ++idx) {
      const int j = a.col[idx];
      const double t = g.row(i).dot(cache.h1w1.row(j)) + r.row(i).dot(cache.xw0.row(j));
      const double ts = t * a.val[idx];
      row_sum[i] += ts;
      col_sum[j] += ts;
      const int e = a.edge_id[idx];
      if (e >= 0) {
        grad[e] += t / std::sqrt(a.degree[i] * a.degree[j]);
      }
    }
  }

  if (through_degrees) {
    // dL/d deg_i = -(row_i + col_i) / (2 deg_i); deg depends on |v|.
    Vector dldeg(a.n);
    for (int i = 0; i < a.n; ++i) {
      dldeg[i] = -(row_sum[i] + col_sum[i]) / (2.0 * a.degree[i]);
    }
    for (int i = 0; i < a.n; ++i) {
      for (int32_t idx = a.row_ptr[i]; idx < a.row_ptr[i + 1]; ++idx) {
        const int e = a.edge_id[idx];
        const int j = a.col[idx];
        if (e >= 0 && i < j) {
          grad[e] += (dldeg[i] + dldeg[j]) * sign0(values[e]);
        }
      }
    }
  }

  for (Eigen::Index e = 0; e < m; ++e) grad[e] += lambda * sign0(values[e]);

  if (!grad.allFinite()) throw numeric_error("grad_edge_values: non-finite gradient");
  return grad;
}

PruneMask derive_mask(const Vector& magnitudes, double p) {
  const auto len = magnitudes.size();
  if (len == 0) throw argument_error("derive_mask: empty magnitude vector");
  if (!(p >= 0.0 && p <= 1.0)) throw argument_error("derive_mask: p must be in [0,1]");
  if (!magnitudes.allFinite()) throw argument_error("derive_mask: non-finite magnitude");

  const auto keep = static_cast<Eigen::Index>(
      std::llround((1.0 - p) * static_cast<double>(len)));
  std::vector<int64_t> order(len);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    const double ma = std::abs(magnitudes[a]);
    const double mb = std::abs(magnitudes[b]);
    if (ma != mb) return ma > mb;
    return a < b;  // ties at the cut keep the lower index
  });
  std::vector<uint8_t> bits(len, 0);
  for (Eigen::Index k = 0; k < keep; ++k) bits[order[k]] = 1;
  return PruneMask::make(std::move(bits), p);
}

Vector flatten_weights(const GcnParams& params) {
  Vector out(params.weight_count());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < params.w0.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.w0.cols(); ++c) out[k++] = params.w0(r, c);
  }
  for (Eigen::Index r = 0; r < params.w1.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.w1.cols(); ++c) out[k++] = params.w1(r, c);
  }
  return out;
}

PruneMask derive_weight_mask(const GcnParams& params, double p, bool per_layer) {
  if (!per_layer) return derive_mask(flatten_weights(params), p);
  const Vector flat = flatten_weights(params);
  const auto n0 = params.w0.size();
  const PruneMask m0 = derive_mask(flat.head(n0), p);
  const PruneMask m1 = derive_mask(flat.tail(flat.size() - n0), p);
  std::vector<uint8_t> bits = m0.bits();
  bits.insert(bits.end(), m1.bits().begin(), m1.bits().end());
  return PruneMask::from_bits(std::move(bits));
}

GraphPruneResult apply_graph_prune(const Vector& edge_values, const PruneMask& mask) {
  if (static_cast<size_t>(edge_values.size()) != mask.size()) {
    throw contract_error("apply_graph_prune: mask length != M");
  }
  GraphPruneResult out;
  out.kept_edges.reserve(mask.popcount());
  for (Eigen::Index e = 0; e < edge_values.size(); ++e) {
    if (mask.bit(static_cast<size_t>(e))) out.kept_edges.push_back(static_cast<int32_t>(e));
  }
  out.kept_values.resize(static_cast<Eigen::Index>(out.kept_edges.size()));
  for (size_t k = 0; k < out.kept_edges.size(); ++k) {
    out.kept_values[static_cast<Eigen::Index>(k)] = edge_values[out.kept_edges[k]];
  }
  return out;
}

void apply_weight_prune(GcnParams& params, const PruneMask& mask) {
  if (static_cast<int64_t>(mask.size()) != params.weight_count()) {
    throw contract_error("apply_weight_prune: mask length != weight count");
  }
  params.keep0 = Matrix::Zero(params.w0.rows(), params.w0.cols());
  params.keep1 = Matrix::Zero(params.w1.rows(), params.w1.cols());
  size_t k = 0;
  for (Eigen::Index r = 0; r < params.w0.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.w0.cols(); ++c) {
      params.keep0(r, c) = mask.bit(k++) ? 1.0 : 0.0;
    }
  }
  for (Eigen::Index r = 0; r < params.w1.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.w1.cols(); ++c) {
      params.keep1(r, c) = mask.bit(k++) ? 1.0 : 0.0;
    }
  }
  params.w0 = params.w0.cwiseProduct(params.keep0);
  params.w1 = params.w1.cwiseProduct(params.keep1);
  params.adam0.m = params.adam0.m.cwiseProduct(params.keep0);
  params.adam0.v = params.adam0.v.cwiseProduct(params.keep0);
  params.adam1.m = params.adam1.m.cwiseProduct(params.keep1);
  params.adam1.v = params.adam1.v.cwiseProduct(params.keep1);
}

}  // namespace ebgcn
