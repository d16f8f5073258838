#include "ebgcn/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <ostream>
#include <thread>

#include "ebgcn/errors.hpp"

namespace ebgcn {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_sec(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_splits(const GraphDataset& ds) {
  auto any = [](const std::vector<uint8_t>& m) {
    for (uint8_t b : m) {
      if (b) return true;
    }
    return false;
  };
  if (!any(ds.val_mask) || !any(ds.test_mask)) {
    throw argument_error("pipeline: dataset needs non-empty val and test splits");
  }
}

std::vector<int> layer_dims(const GraphDataset& ds, const TrainConfig& cfg) {
  return {ds.num_features(), cfg.hidden, ds.num_classes};
}

// Surviving weights per layer under a flat W0|W1 mask; full counts when the
// mask is empty.
std::vector<int64_t> kept_weight_counts(const PruneMask& net_mask, int c, int h, int f) {
  if (net_mask.empty()) {
    return {static_cast<int64_t>(c) * h, static_cast<int64_t>(h) * f};
  }
  int64_t k0 = 0;
  const size_t n0 = static_cast<size_t>(c) * static_cast<size_t>(h);
  for (size_t i = 0; i < n0; ++i) k0 += net_mask.bit(i);
  int64_t k1 = 0;
  for (size_t i = n0; i < net_mask.size(); ++i) k1 += net_mask.bit(i);
  return {k0, k1};
}

PruneMask random_graph_mask(int m, double pg, uint64_t seed) {
  const auto keep = static_cast<int>(std::llround((1.0 - pg) * m));
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "random-mask"));
  rng.shuffle(idx);
  std::vector<uint8_t> bits(m, 0);
  for (int k = 0; k < keep; ++k) bits[idx[k]] = 1;
  return PruneMask::make(std::move(bits), pg);
}

nlohmann::ordered_json trace_to_json(const std::vector<EpochTrace>& trace) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& t : trace) {
    nlohmann::ordered_json row;
    row["phase"] = t.phase;
    row["epoch"] = t.epoch;
    row["loss"] = t.loss;
    row["val_acc"] = t.val_acc;
    row["test_acc"] = t.test_acc;
    row["d_g"] = t.d_g;
    row["d_w"] = t.d_w;
    row["combined"] = t.combined;
    row["fired"] = t.fired;
    arr.push_back(std::move(row));
  }
  return arr;
}

double json_double(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

void csv_num(std::ostream& os, double v) {
  if (std::isnan(v)) return;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  os << buf;
}

}  // namespace

const char* to_string(PipelineKind k) {
  switch (k) {
    case PipelineKind::Baseline: return "baseline";
    case PipelineKind::Geb: return "geb";
    case PipelineKind::JointEb: return "joint-eb";
    case PipelineKind::RandomPrune: return "random-prune";
  }
  return "?";
}

PipelineKind pipeline_from_string(const std::string& s) {
  if (s == "baseline") return PipelineKind::Baseline;
  if (s == "geb") return PipelineKind::Geb;
  if (s == "joint-eb") return PipelineKind::JointEb;
  if (s == "random-prune") return PipelineKind::RandomPrune;
  throw argument_error("unknown pipeline: " + s +
                       " (want baseline|geb|joint-eb|random-prune)");
}

void RunConfig::validate() const {
  train.validate();
  if (train.epochs < 1) throw argument_error("RunConfig: pipelines need epochs >= 1");
  if (!(pg >= 0.0 && pg <= 1.0)) throw argument_error("RunConfig: pg must be in [0,1]");
  if (!(pw >= 0.0 && pw <= 1.0)) throw argument_error("RunConfig: pw must be in [0,1]");
  if (!(eta > 0.0)) throw argument_error("RunConfig: eta must be positive");
  if (queue_len < 1) throw argument_error("RunConfig: queue_len must be >= 1");
  if (warmup < 0) throw argument_error("RunConfig: warmup must be >= 0");
  if (backward_factor < 0.0) throw argument_error("RunConfig: backward_factor must be >= 0");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["hidden"] = train.hidden;
  j["epochs"] = train.epochs;
  j["lr_weights"] = train.lr_weights;
  j["lr_graph"] = train.lr_graph;
  j["weight_decay"] = train.weight_decay;
  j["dropout"] = train.dropout;
  j["seed"] = train.seed;
  j["lambda_reg"] = train.lambda_reg;
  j["pg"] = pg;
  j["pw"] = pw;
  j["eta"] = eta;
  j["queue_len"] = queue_len;
  j["criterion"] = to_string(criterion);
  j["warmup"] = warmup;
  j["backward_factor"] = backward_factor;
  j["per_layer_weight_mask"] = per_layer_weight_mask;
  j["reinit_after_joint"] = reinit_after_joint;
  j["grad_through_degrees"] = grad_through_degrees;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.train.hidden = j.at("hidden").get<int>();
  c.train.epochs = j.at("epochs").get<int>();
  c.train.lr_weights = j.at("lr_weights").get<double>();
  c.train.lr_graph = j.at("lr_graph").get<double>();
  c.train.weight_decay = j.at("weight_decay").get<double>();
  c.train.dropout = j.at("dropout").get<double>();
  c.train.seed = j.at("seed").get<uint64_t>();
  c.train.lambda_reg = j.at("lambda_reg").get<double>();
  c.pg = j.at("pg").get<double>();
  c.pw = j.at("pw").get<double>();
  c.eta = j.at("eta").get<double>();
  c.queue_len = j.at("queue_len").get<int>();
  c.criterion = criterion_from_string(j.at("criterion").get<std::string>());
  c.warmup = j.at("warmup").get<int>();
  c.backward_factor = j.at("backward_factor").get<double>();
  c.per_layer_weight_mask = j.at("per_layer_weight_mask").get<bool>();
  c.reinit_after_joint = j.at("reinit_after_joint").get<bool>();
  c.grad_through_degrees = j.at("grad_through_degrees").get<bool>();
  return c;
}

nlohmann::ordered_json RunRecord::to_json() const {
  nlohmann::ordered_json j;
  j["pipeline"] = to_string(kind);
  j["dataset"] = dataset;
  j["config"] = cfg.to_json();
  j["t_eb"] = t_eb;
  j["eb_fallback"] = eb_fallback;
  j["best_val_epoch"] = best_val_epoch;
  j["best_val_acc"] = best_val_acc;
  j["test_accuracy"] = test_accuracy;
  j["training_flops"] = training_flops;
  j["inference_flops"] = inference_flops;
  j["memory_bytes"] = memory_bytes;
  nlohmann::ordered_json tb = nlohmann::ordered_json::array();
  for (const auto& e : training_breakdown) tb.push_back({{"label", e.label}, {"value", e.value}});
  j["training_breakdown"] = std::move(tb);
  nlohmann::ordered_json ib = nlohmann::ordered_json::array();
  for (const auto& e : inference_breakdown) ib.push_back({{"label", e.label}, {"value", e.value}});
  j["inference_breakdown"] = std::move(ib);
  j["flops_convention"] = kFlopsConvention;
  j["error"] = error;
  j["wall_time_sec"] = wall_time_sec;
  j["trace"] = trace_to_json(trace);
  return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.kind = pipeline_from_string(j.at("pipeline").get<std::string>());
  r.dataset = j.at("dataset").get<std::string>();
  r.cfg = RunConfig::from_json(j.at("config"));
  r.t_eb = j.at("t_eb").get<int>();
  r.eb_fallback = j.at("eb_fallback").get<bool>();
  r.best_val_epoch = j.at("best_val_epoch").get<int>();
  r.best_val_acc = json_double(j.at("best_val_acc"));
  r.test_accuracy = json_double(j.at("test_accuracy"));
  r.training_flops = j.at("training_flops").get<uint64_t>();
  r.inference_flops = j.at("inference_flops").get<uint64_t>();
  r.memory_bytes = j.at("memory_bytes").get<uint64_t>();
  for (const auto& e : j.at("training_breakdown")) {
    r.training_breakdown.push_back({e.at("label").get<std::string>(), e.at("value").get<uint64_t>()});
  }
  for (const auto& e : j.at("inference_breakdown")) {
    r.inference_breakdown.push_back({e.at("label").get<std::string>(), e.at("value").get<uint64_t>()});
  }
  r.error = j.at("error").get<std::string>();
  r.wall_time_sec = j.at("wall_time_sec").get<double>();
  for (const auto& t : j.at("trace")) {
    EpochTrace e;
    e.phase = t.at("phase").get<std::string>();
    e.epoch = t.at("epoch").get<int>();
    e.loss = json_double(t.at("loss"));
    e.val_acc = json_double(t.at("val_acc"));
    e.test_acc = json_double(t.at("test_acc"));
    e.d_g = json_double(t.at("d_g"));
    e.d_w = json_double(t.at("d_w"));
    e.combined = json_double(t.at("combined"));
    e.fired = t.at("fired").get<bool>();
    r.trace.push_back(std::move(e));
  }
  return r;
}

void RunRecord::write_trace_csv(std::ostream& os) const {
  os << "phase,epoch,loss,val_acc,test_acc,d_g,d_w,combined,fired\n";
  for (const auto& t : trace) {
    os << t.phase << ',' << t.epoch << ',';
    csv_num(os, t.loss);
    os << ',';
    csv_num(os, t.val_acc);
    os << ',';
    csv_num(os, t.test_acc);
    os << ',';
    csv_num(os, t.d_g);
    os << ',';
    csv_num(os, t.d_w);
    os << ',';
    csv_num(os, t.combined);
    os << ',' << (t.fired ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------

WeightPhaseResult train_weights_phase(const GraphDataset& ds,
                                      const NormalizedAdjacency& a,
                                      const TrainConfig& cfg, GcnParams params,
                                      const std::string& stream_tag,
                                      const std::string& phase_name) {
  WeightPhaseResult out;
  Rng drop_rng(derive_seed(cfg.seed, stream_tag));
  double best_val = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      const ForwardCache cache =
          gcn_forward(a, ds.features, params, /*training=*/true, cfg.dropout, &drop_rng);
      const double loss = masked_cross_entropy(cache.probs, ds.labels, ds.train_mask);
      const WeightGrads grads = gcn_backward_weights(cache, a, ds.features, params,
                                                     ds.labels, ds.train_mask,
                                                     cfg.weight_decay);
      adam_step(params, grads, cfg.lr_weights);

      const ForwardCache ev = gcn_forward(a, ds.features, params, false, 0.0, nullptr);
      const double val = accuracy_from_probs(ev.probs, ds.labels, ds.val_mask);
      const double test = accuracy_from_probs(ev.probs, ds.labels, ds.test_mask);
      EpochTrace t;
      t.phase = phase_name;
      t.epoch = epoch;
      t.loss = loss;
      t.val_acc = val;
      t.test_acc = test;
      out.trace.push_back(std::move(t));
      if (val > best_val) {
        best_val = val;
        out.best_val_epoch = epoch;
        out.best_val_acc = val;
        out.test_at_best = test;
      }
    } catch (const numeric_error& e) {
      throw numeric_error(phase_name + " epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  out.params = std::move(params);
  return out;
}

SparsifyPhaseResult sparsify_graph_phase(const GraphDataset& ds,
                                         const GcnParams& frozen,
                                         const RunConfig& cfg,
                                         const SparsifyOptions& opt) {
  SparsifyPhaseResult out;
  const int m = ds.num_edges();
  EdgeParams edges(m);
  EbDetector detector(cfg.queue_len, cfg.eta, StopCriterion::GraphOnly, cfg.warmup);
  // Weights are frozen and dropout is off, so X*W0 is constant all phase.
  const Matrix xw0 = ds.features * frozen.w0;
  PruneMask prev_mask;
  bool have_prev = false;

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    try {
      const NormalizedAdjacency a = normalize_adjacency(ds, edges.values);
      const ForwardCache cache = gcn_forward(a, ds.features, frozen, false, 0.0,
                                             nullptr, &xw0);
      const double loss = masked_cross_entropy(cache.probs, ds.labels, ds.train_mask) +
                          cfg.train.lambda_reg * edges.values.cwiseAbs().sum();
      const Vector grad = grad_edge_values(cache, a, ds.features, frozen, ds.labels,
                                           ds.train_mask, edges.values,
                                           cfg.train.lambda_reg,
                                           cfg.grad_through_degrees);
      adam_step(edges, grad, cfg.train.lr_graph);

      const PruneMask mask = derive_mask(edges.values, cfg.pg);
      bool fired = false;
      if (opt.detect && !detector.fired()) {
        fired = detector.geb_step(mask, epoch);
      }
      EpochTrace t;
      t.phase = "sparsify";
      t.epoch = epoch;
      t.loss = loss;
      if (have_prev) {
        t.d_g = mask_distance(mask, prev_mask);
        t.combined = t.d_g;
      }
      t.fired = fired;
      out.trace.push_back(std::move(t));
      prev_mask = mask;
      have_prev = true;
      if (opt.record_history) out.mask_history.push_back(mask);
      out.epochs_run = epoch;

      if (fired) {
        out.t_eb = epoch;
        out.values = edges.values;
        out.mask = mask;
        if (opt.stop_on_fire) break;
      }
      if (epoch == cfg.train.epochs) {
        out.values_final = edges.values;
        out.mask_final = mask;
        if (out.t_eb < 0) {
          out.values = edges.values;
          out.mask = mask;
          if (opt.detect) {
            out.fallback = true;
            std::cerr << "[ebgcn] warning: detector did not fire by epoch "
                      << cfg.train.epochs << "; using final-epoch mask\n";
          }
        }
      }
    } catch (const numeric_error& e) {
      throw numeric_error("sparsify epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  if (out.values_final.size() == 0) {
    out.values_final = out.values;
    out.mask_final = out.mask;
  }
  return out;
}

JointPhaseResult joint_cosparsify_phase(const GraphDataset& ds, const RunConfig& cfg) {
  JointPhaseResult out;
  const int m = ds.num_edges();
  GcnParams params = init_params(ds.num_features(), cfg.train.hidden, ds.num_classes,
                                 derive_seed(cfg.train.seed, "joint-init"));
  Rng drop_rng(derive_seed(cfg.train.seed, "joint-dropout"));
  EdgeParams edges(m);
  EbDetector detector(cfg.queue_len, cfg.eta, cfg.criterion, cfg.warmup);

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    try {
      NormalizedAdjacency a = normalize_adjacency(ds, edges.values);

      // weight half: supervised cross-entropy, dropout on
      const ForwardCache wc =
          gcn_forward(a, ds.features, params, true, cfg.train.dropout, &drop_rng);
      const double loss = masked_cross_entropy(wc.probs, ds.labels, ds.train_mask);
      const WeightGrads grads = gcn_backward_weights(wc, a, ds.features, params,
                                                     ds.labels, ds.train_mask,
                                                     cfg.train.weight_decay);
      adam_step(params, grads, cfg.train.lr_weights);

      // edge half: graph loss on the updated weights, dropout off
      const ForwardCache ec = gcn_forward(a, ds.features, params, false, 0.0, nullptr);
      const Vector vgrad = grad_edge_values(ec, a, ds.features, params, ds.labels,
                                            ds.train_mask, edges.values,
                                            cfg.train.lambda_reg,
                                            cfg.grad_through_degrees);
      adam_step(edges, vgrad, cfg.train.lr_graph);

      const PruneMask m_t = derive_mask(edges.values, cfg.pg);
      const PruneMask n_t = derive_weight_mask(params, cfg.pw, cfg.per_layer_weight_mask);
      const bool fired = detector.joint_step(m_t, n_t, epoch);

      EpochTrace t;
      t.phase = "co-train";
      t.epoch = epoch;
      t.loss = loss;
      t.val_acc = accuracy_from_probs(ec.probs, ds.labels, ds.val_mask);
      t.test_acc = accuracy_from_probs(ec.probs, ds.labels, ds.test_mask);
      t.d_g = detector.last_graph_distance();
      t.d_w = detector.last_network_distance();
      t.combined = detector.last_combined();
      t.fired = fired;
      out.trace.push_back(std::move(t));
      out.epochs_run = epoch;

      if (fired || epoch == cfg.train.epochs) {
        out.params = params;
        out.values = edges.values;
        out.graph_mask = m_t;
        out.net_mask = n_t;
        if (fired) {
          out.t_eb = epoch;
        } else {
          out.fallback = true;
          std::cerr << "[ebgcn] warning: joint detector did not fire by epoch "
                    << cfg.train.epochs << "; using final-epoch masks\n";
        }
        break;
      }
    } catch (const numeric_error& e) {
      throw numeric_error("co-train epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Shared tail of baseline/geb: prune at pg using the drawn values/mask and
// retrain from a fresh init on the pruned graph.
void finish_prune_retrain(RunRecord& rec, const GraphDataset& ds, const RunConfig& cfg,
                          const SparsifyPhaseResult& sp, int sparsify_epochs) {
  const auto dims = layer_dims(ds, cfg.train);
  const NormalizedAdjacency a_pruned = normalize_adjacency(ds, sp.values, &sp.mask);
  GcnParams fresh = init_params(ds.num_features(), cfg.train.hidden, ds.num_classes,
                                derive_seed(cfg.train.seed, "retrain-init"));
  WeightPhaseResult retrain = train_weights_phase(ds, a_pruned, cfg.train,
                                                  std::move(fresh), "retrain-dropout",
                                                  "retrain");

  rec.t_eb = sp.t_eb;
  rec.eb_fallback = sp.fallback;
  rec.best_val_epoch = retrain.best_val_epoch;
  rec.best_val_acc = retrain.best_val_acc;
  rec.test_accuracy = retrain.test_at_best;
  for (auto& t : retrain.trace) rec.trace.push_back(std::move(t));

  const int64_t m_full = stored_entries(ds.num_nodes, ds.num_edges());
  const int64_t m_kept = stored_entries(ds.num_nodes,
                                        static_cast<int64_t>(sp.mask.popcount()));
  const auto full_w = kept_weight_counts(PruneMask{}, ds.num_features(),
                                         cfg.train.hidden, ds.num_classes);
  const uint64_t i_full = inference_flops(ds.num_nodes, m_full, dims, 0.0);
  const uint64_t i_pruned = inference_flops_counts(ds.num_nodes, m_kept, dims, full_w);
  const FlopsReport fr = build_flops_report(
      ds.num_nodes, m_kept, dims, full_w,
      {{"pretrain", i_full, cfg.train.epochs},
       {"sparsify", i_full, sparsify_epochs},
       {"retrain", i_pruned, cfg.train.epochs}},
      cfg.backward_factor, cfg.pg, 0.0);
  rec.training_flops = fr.training_flops;
  rec.training_breakdown = fr.training_breakdown;
  rec.inference_flops = fr.inference_flops;
  rec.inference_breakdown = fr.inference_breakdown;
  rec.memory_bytes = fr.memory_bytes;
}

RunRecord run_baseline_or_geb(const GraphDataset& ds, const RunConfig& cfg, bool geb) {
  const auto start = Clock::now();
  cfg.validate();
  ds.validate();
  check_splits(ds);

  RunRecord rec;
  rec.kind = geb ? PipelineKind::Geb : PipelineKind::Baseline;
  rec.dataset = ds.name;
  rec.cfg = cfg;

  const NormalizedAdjacency a_full = normalize_adjacency(ds, unit_edge_values(ds));
  GcnParams init = init_params(ds.num_features(), cfg.train.hidden, ds.num_classes,
                               derive_seed(cfg.train.seed, "pretrain-init"));
  WeightPhaseResult pre = train_weights_phase(ds, a_full, cfg.train, std::move(init),
                                              "pretrain-dropout", "pretrain");
  for (auto& t : pre.trace) rec.trace.push_back(std::move(t));

  SparsifyOptions opt;
  opt.detect = geb;
  opt.stop_on_fire = geb;
  const SparsifyPhaseResult sp = sparsify_graph_phase(ds, pre.params, cfg, opt);
  for (const auto& t : sp.trace) rec.trace.push_back(t);

  finish_prune_retrain(rec, ds, cfg, sp, sp.epochs_run);
  rec.wall_time_sec = elapsed_sec(start);
  return rec;
}

}  // namespace

RunRecord run_baseline(const GraphDataset& ds, const RunConfig& cfg) {
  return run_baseline_or_geb(ds, cfg, false);
}

RunRecord run_geb(const GraphDataset& ds, const RunConfig& cfg) {
  return run_baseline_or_geb(ds, cfg, true);
}

RunRecord run_joint_eb(const GraphDataset& ds, const RunConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate();
  ds.validate();
  check_splits(ds);

  RunRecord rec;
  rec.kind = PipelineKind::JointEb;
  rec.dataset = ds.name;
  rec.cfg = cfg;

  JointPhaseResult jp = joint_cosparsify_phase(ds, cfg);
  for (const auto& t : jp.trace) rec.trace.push_back(t);

  GcnParams ticket = cfg.reinit_after_joint
                         ? init_params(ds.num_features(), cfg.train.hidden,
                                       ds.num_classes,
                                       derive_seed(cfg.train.seed, "joint-reinit"))
                         : std::move(jp.params);
  apply_weight_prune(ticket, jp.net_mask);

  const NormalizedAdjacency a_pruned = normalize_adjacency(ds, jp.values, &jp.graph_mask);
  WeightPhaseResult retrain = train_weights_phase(ds, a_pruned, cfg.train,
                                                  std::move(ticket), "retrain-dropout",
                                                  "retrain");
  rec.t_eb = jp.t_eb;
  rec.eb_fallback = jp.fallback;
  rec.best_val_epoch = retrain.best_val_epoch;
  rec.best_val_acc = retrain.best_val_acc;
  rec.test_accuracy = retrain.test_at_best;
  for (auto& t : retrain.trace) rec.trace.push_back(std::move(t));

  const auto dims = layer_dims(ds, cfg.train);
  const auto kept_w = kept_weight_counts(jp.net_mask, ds.num_features(),
                                         cfg.train.hidden, ds.num_classes);
  const int64_t m_full = stored_entries(ds.num_nodes, ds.num_edges());
  const int64_t m_kept = stored_entries(ds.num_nodes,
                                        static_cast<int64_t>(jp.graph_mask.popcount()));
  const uint64_t i_full = inference_flops(ds.num_nodes, m_full, dims, 0.0);
  const uint64_t i_ticket = inference_flops_counts(ds.num_nodes, m_kept, dims, kept_w);
  const FlopsReport fr = build_flops_report(
      ds.num_nodes, m_kept, dims, kept_w,
      {{"co-train/weights", i_full, jp.epochs_run},
       {"co-train/edges", i_full, jp.epochs_run},
       {"retrain", i_ticket, cfg.train.epochs}},
      cfg.backward_factor, cfg.pg, cfg.pw);
  rec.training_flops = fr.training_flops;
  rec.training_breakdown = fr.training_breakdown;
  rec.inference_flops = fr.inference_flops;
  rec.inference_breakdown = fr.inference_breakdown;
  rec.memory_bytes = fr.memory_bytes;
  rec.wall_time_sec = elapsed_sec(start);
  return rec;
}

RunRecord run_random_prune(const GraphDataset& ds, const RunConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate();
  ds.validate();
  check_splits(ds);

  RunRecord rec;
  rec.kind = PipelineKind::RandomPrune;
  rec.dataset = ds.name;
  rec.cfg = cfg;

  const PruneMask mask = random_graph_mask(ds.num_edges(), cfg.pg, cfg.train.seed);
  const NormalizedAdjacency a_pruned =
      normalize_adjacency(ds, unit_edge_values(ds), &mask);
  GcnParams fresh = init_params(ds.num_features(), cfg.train.hidden, ds.num_classes,
                                derive_seed(cfg.train.seed, "retrain-init"));
  WeightPhaseResult retrain = train_weights_phase(ds, a_pruned, cfg.train,
                                                  std::move(fresh), "retrain-dropout",
                                                  "retrain");
  rec.best_val_epoch = retrain.best_val_epoch;
  rec.best_val_acc = retrain.best_val_acc;
  rec.test_accuracy = retrain.test_at_best;
  rec.trace = std::move(retrain.trace);

  const auto dims = layer_dims(ds, cfg.train);
  const int64_t m_kept = stored_entries(ds.num_nodes,
                                        static_cast<int64_t>(mask.popcount()));
  const auto full_w = kept_weight_counts(PruneMask{}, ds.num_features(),
                                         cfg.train.hidden, ds.num_classes);
  const uint64_t i_pruned = inference_flops_counts(ds.num_nodes, m_kept, dims, full_w);
  const FlopsReport fr = build_flops_report(ds.num_nodes, m_kept, dims, full_w,
                                            {{"retrain", i_pruned, cfg.train.epochs}},
                                            cfg.backward_factor, cfg.pg, 0.0);
  rec.training_flops = fr.training_flops;
  rec.training_breakdown = fr.training_breakdown;
  rec.inference_flops = fr.inference_flops;
  rec.inference_breakdown = fr.inference_breakdown;
  rec.memory_bytes = fr.memory_bytes;
  rec.wall_time_sec = elapsed_sec(start);
  return rec;
}

RunRecord run_pipeline(PipelineKind kind, const GraphDataset& ds, const RunConfig& cfg) {
  switch (kind) {
    case PipelineKind::Baseline: return run_baseline(ds, cfg);
    case PipelineKind::Geb: return run_geb(ds, cfg);
    case PipelineKind::JointEb: return run_joint_eb(ds, cfg);
    case PipelineKind::RandomPrune: return run_random_prune(ds, cfg);
  }
  throw argument_error("run_pipeline: bad kind");
}

std::vector<RunRecord> sweep(const GraphDataset& ds, const RunConfig& base,
                             const std::vector<PipelineKind>& pipelines,
                             const std::vector<double>& pgs,
                             const std::vector<double>& pws,
                             const std::vector<uint64_t>& seeds, int workers) {
  if (pipelines.empty() || pgs.empty() || pws.empty() || seeds.empty()) {
    throw argument_error("sweep: empty grid");
  }
  struct Cell {
    PipelineKind kind;
    RunConfig cfg;
  };
  std::vector<Cell> cells;
  for (PipelineKind k : pipelines) {
    for (double pg : pgs) {
      for (double pw : pws) {
        for (uint64_t seed : seeds) {
          RunConfig c = base;
          c.pg = pg;
          c.pw = pw;
          c.train.seed = seed;
          cells.push_back({k, std::move(c)});
        }
      }
    }
  }

  std::vector<RunRecord> out(cells.size());
  auto run_cell = [&](size_t i) {
    try {
      out[i] = run_pipeline(cells[i].kind, ds, cells[i].cfg);
    } catch (const std::exception& e) {
      RunRecord r;
      r.kind = cells[i].kind;
      r.dataset = ds.name;
      r.cfg = cells[i].cfg;
      r.error = e.what();
      out[i] = std::move(r);
    }
  };

  if (workers <= 1) {
    for (size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        run_cell(i);
      }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min<int>(workers, static_cast<int>(cells.size()));
    pool.reserve(nthreads);
    for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace ebgcn
