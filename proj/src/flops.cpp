#include "ebgcn/flops.hpp"

#include <cmath>

#include "ebgcn/errors.hpp"

namespace ebgcn {

namespace {

void check_dims(int64_t n, const std::vector<int>& dims) {
  if (n < 1) throw argument_error("flops: n must be >= 1");
  if (dims.size() < 2) throw argument_error("flops: need at least one layer (two dims)");
  for (int d : dims) {
    if (d < 1) throw argument_error("flops: layer dims must be >= 1");
  }
}

void check_pw(double pw) {
  if (!(pw >= 0.0 && pw <= 1.0)) throw argument_error("flops: pw must be in [0,1]");
}

void add(std::vector<FlopsEntry>* breakdown, const std::string& label, uint64_t v) {
  if (breakdown) breakdown->push_back({label, v});
}

}  // namespace

uint64_t inference_flops(int64_t n, int64_t m_kept_directed,
                         const std::vector<int>& layer_dims, double pw,
                         std::vector<FlopsEntry>* breakdown) {
  check_dims(n, layer_dims);
  check_pw(pw);
  if (m_kept_directed < 0) throw argument_error("flops: m_kept must be >= 0");
  std::vector<int64_t> kept(layer_dims.size() - 1);
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    kept[l] = std::llround((1.0 - pw) * static_cast<double>(layer_dims[l]) *
              static_cast<double>(layer_dims[l + 1]));
  }
  return inference_flops_counts(n, m_kept_directed, layer_dims, kept, breakdown);
}

uint64_t inference_flops_counts(int64_t n, int64_t m_kept_directed,
                                const std::vector<int>& layer_dims,
                                const std::vector<int64_t>& kept_weights,
                                std::vector<FlopsEntry>* breakdown) {
  check_dims(n, layer_dims);
  if (m_kept_directed < 0) throw argument_error("flops: m_kept must be >= 0");
  if (kept_weights.size() != layer_dims.size() - 1) {
    throw argument_error("flops: kept_weights size must match layer count");
  }
  uint64_t total = 0;
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto f_out = static_cast<uint64_t>(layer_dims[l + 1]);
    const uint64_t agg = 2ull * static_cast<uint64_t>(m_kept_directed) * f_out;
    const uint64_t comb = 2ull * static_cast<uint64_t>(n) *
                          static_cast<uint64_t>(kept_weights[l]);
    add(breakdown, "layer" + std::to_string(l) + "/aggregation", agg);
    add(breakdown, "layer" + std::to_string(l) + "/combination", comb);
    total += agg + comb;
  }
  return total;
}

uint64_t training_flops(uint64_t per_epoch_inference, int64_t epochs,
                        double backward_factor) {
  if (epochs < 0) throw argument_error("training_flops: epochs must be >= 0");
  if (backward_factor < 0.0) throw argument_error("training_flops: backward_factor must be >= 0");
  const auto backward = static_cast<uint64_t>(
      std::llround(backward_factor * static_cast<double>(per_epoch_inference)));
  return static_cast<uint64_t>(epochs) * (per_epoch_inference + backward);
}

uint64_t memory_estimate(int64_t n, const std::vector<int>& layer_dims, double pw,
                         int64_t bytes_per_value, std::vector<FlopsEntry>* breakdown) {
  check_dims(n, layer_dims);
  check_pw(pw);
  std::vector<int64_t> kept(layer_dims.size() - 1);
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    kept[l] = std::llround((1.0 - pw) * static_cast<double>(layer_dims[l]) *
              static_cast<double>(layer_dims[l + 1]));
  }
  return memory_estimate_counts(n, layer_dims, kept, bytes_per_value, breakdown);
}

FlopsReport build_flops_report(int64_t n, int64_t m_kept_directed,
                               const std::vector<int>& layer_dims,
                               const std::vector<int64_t>& kept_weights,
                               const std::vector<PhaseCost>& phases,
                               double backward_factor, double pg, double pw) {
  FlopsReport r;
  r.pg = pg;
  r.pw = pw;
  r.inference_flops = inference_flops_counts(n, m_kept_directed, layer_dims,
                                             kept_weights, &r.inference_breakdown);
  for (const PhaseCost& ph : phases) {
    const uint64_t f = training_flops(ph.per_epoch_inference, ph.epochs, backward_factor);
    r.training_breakdown.push_back({ph.name, f});
    r.training_flops += f;
  }
  r.memory_bytes =
      memory_estimate_counts(n, layer_dims, kept_weights, 8, &r.memory_breakdown);
  return r;
}

uint64_t memory_estimate_counts(int64_t n, const std::vector<int>& layer_dims,
                                const std::vector<int64_t>& kept_weights,
                                int64_t bytes_per_value,
                                std::vector<FlopsEntry>* breakdown) {
  check_dims(n, layer_dims);
  if (bytes_per_value < 1) throw argument_error("memory_estimate: bytes_per_value must be >= 1");
  if (kept_weights.size() != layer_dims.size() - 1) {
    throw argument_error("memory_estimate: kept_weights size must match layer count");
  }
  uint64_t total = 0;
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const uint64_t act = static_cast<uint64_t>(n) *
                         static_cast<uint64_t>(layer_dims[l + 1]) *
                         static_cast<uint64_t>(bytes_per_value);
    const uint64_t wts = static_cast<uint64_t>(kept_weights[l]) *
                         static_cast<uint64_t>(bytes_per_value);
    add(breakdown, "layer" + std::to_string(l) + "/activations", act);
    add(breakdown, "layer" + std::to_string(l) + "/weights", wts);
    total += act + wts;
  }
  return total;
}

}  // namespace ebgcn
