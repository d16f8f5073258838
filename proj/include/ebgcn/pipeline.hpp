#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebgcn/detector.hpp"
#include "ebgcn/flops.hpp"
#include "ebgcn/gcn.hpp"
#include "ebgcn/graph.hpp"
#include "ebgcn/sparsify.hpp"

namespace ebgcn {

enum class PipelineKind { Baseline, Geb, JointEb, RandomPrune };

const char* to_string(PipelineKind k);
PipelineKind pipeline_from_string(const std::string& s);

struct RunConfig {
  TrainConfig train;
  double pg = 0.0;  // graph pruning ratio (fraction of edges removed)
  double pw = 0.0;  // weight pruning ratio
  double eta = 0.1;
  int queue_len = 3;
  StopCriterion criterion = StopCriterion::Sum;
  int warmup = 0;
  double backward_factor = 2.0;
  bool per_layer_weight_mask = false;
  bool reinit_after_joint = false;
  bool grad_through_degrees = true;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct EpochTrace {
  std::string phase;
  int epoch = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  double d_g = std::numeric_limits<double>::quiet_NaN();
  double d_w = std::numeric_limits<double>::quiet_NaN();
  double combined = std::numeric_limits<double>::quiet_NaN();
  bool fired = false;
};

struct RunRecord {
  PipelineKind kind = PipelineKind::Baseline;
  std::string dataset;
  RunConfig cfg;
  int t_eb = -1;
  bool eb_fallback = false;
  int best_val_epoch = -1;
  double best_val_acc = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  uint64_t training_flops = 0;
  uint64_t inference_flops = 0;
  uint64_t memory_bytes = 0;
  std::vector<FlopsEntry> training_breakdown;
  std::vector<FlopsEntry> inference_breakdown;
  double wall_time_sec = 0.0;
  std::string error;
  std::vector<EpochTrace> trace;

  uint64_t seed() const { return cfg.train.seed; }

  nlohmann::ordered_json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  void write_trace_csv(std::ostream& os) const;
};

// --- phase building blocks ------------------------------------------------

struct WeightPhaseResult {
  GcnParams params;
  int best_val_epoch = -1;
  double best_val_acc = 0.0;
  double test_at_best = 0.0;
  std::vector<EpochTrace> trace;
};

// Trains `params` on a fixed adjacency for cfg.epochs epochs; evaluates
// val/test each epoch and selects the best-val epoch (ties -> earliest).
// `stream_tag` names the dropout RNG stream derived from cfg.seed.
WeightPhaseResult train_weights_phase(const GraphDataset& ds,
                                      const NormalizedAdjacency& a,
                                      const TrainConfig& cfg, GcnParams params,
                                      const std::string& stream_tag,
                                      const std::string& phase_name);

struct SparsifyOptions {
  bool detect = true;        // run the GEB detector
  bool stop_on_fire = true;  // stop training when it fires
  bool record_history = false;
};

struct SparsifyPhaseResult {
  Vector values;     // edge values at the drawn epoch
  PruneMask mask;    // graph mask at the drawn epoch
  int t_eb = -1;
  bool fallback = false;  // detector never fired; final-epoch mask used
  int epochs_run = 0;
  std::vector<EpochTrace> trace;
  std::vector<PruneMask> mask_history;  // when record_history
  Vector values_final;
  PruneMask mask_final;
};

// Trains edge values with weights frozen (dropout off), deriving the graph
// mask each epoch per the graph-only stopping rule.
SparsifyPhaseResult sparsify_graph_phase(const GraphDataset& ds,
                                         const GcnParams& frozen,
                                         const RunConfig& cfg,
                                         const SparsifyOptions& opt);

struct JointPhaseResult {
  GcnParams params;  // weights at the drawn epoch (pre-prune)
  Vector values;
  PruneMask graph_mask, net_mask;
  int t_eb = -1;
  bool fallback = false;
  int epochs_run = 0;
  std::vector<EpochTrace> trace;
};

// Alternates one weight update (supervised loss, dropout on) and one edge-value
// update (graph loss, dropout off) per epoch, deriving both masks and
// stepping the joint detector until it fires.
JointPhaseResult joint_cosparsify_phase(const GraphDataset& ds, const RunConfig& cfg);

// --- pipelines --------------------------------------------------------------

// Pretrain -> full-length graph sparsification -> magnitude prune at pg ->
// retrain from a fresh init on the pruned graph.
RunRecord run_baseline(const GraphDataset& ds, const RunConfig& cfg);

// Same, except the graph phase stops the moment the detector fires.
RunRecord run_geb(const GraphDataset& ds, const RunConfig& cfg);

// Co-sparsify weights and edges until the joint detector fires, prune both,
// retrain the ticket (masked weights frozen at 0; surviving weights keep
// their values unless cfg.reinit_after_joint).
RunRecord run_joint_eb(const GraphDataset& ds, const RunConfig& cfg);

// Uniformly random graph mask with exact popcount; single retrain phase on
// the pruned unit-valued graph. With pg = 0 this is a plain GCN training run.
RunRecord run_random_prune(const GraphDataset& ds, const RunConfig& cfg);

RunRecord run_pipeline(PipelineKind kind, const GraphDataset& ds, const RunConfig& cfg);

// Cartesian sweep in deterministic (pipeline, pg, pw, seed) order. A failed
// run is recorded in place (error field) and the sweep continues. Runs are
// independent; `workers` > 1 executes them on a small thread pool.
std::vector<RunRecord> sweep(const GraphDataset& ds, const RunConfig& base,
                             const std::vector<PipelineKind>& pipelines,
                             const std::vector<double>& pgs,
                             const std::vector<double>& pws,
                             const std::vector<uint64_t>& seeds, int workers = 1);

}  // namespace ebgcn
