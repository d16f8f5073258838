#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ebgcn/errors.hpp"
#include "ebgcn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ebgcn;

namespace {

std::string fmt_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string run_name(PipelineKind kind, const std::string& dataset, const RunConfig& cfg) {
  std::ostringstream s;
  s << to_string(kind) << "_" << dataset << "_pg" << fmt_ratio(cfg.pg) << "_pw"
    << fmt_ratio(cfg.pw) << "_seed" << cfg.train.seed;
  return s.str();
}

void write_record(const RunRecord& rec, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const std::string name = run_name(rec.kind, rec.dataset, rec.cfg);
  {
    std::ofstream f(out_dir / (name + ".jsonl"), std::ios::trunc);
    if (!f) throw io_error("cannot write " + (out_dir / (name + ".jsonl")).string());
    f << rec.to_json().dump() << "\n";
  }
  {
    std::ofstream f(out_dir / (name + ".trace.csv"), std::ios::trunc);
    if (!f) throw io_error("cannot write trace csv for " + name);
    rec.write_trace_csv(f);
  }
}

void print_summary(const RunRecord& rec) {
  std::cout << to_string(rec.kind) << " on " << rec.dataset << ": accuracy "
            << rec.test_accuracy;
  if (rec.t_eb >= 0) {
    std::cout << ", t_eb " << rec.t_eb << (rec.eb_fallback ? " (fallback)" : "");
  }
  std::cout << ", training flops " << rec.training_flops << ", inference flops "
            << rec.inference_flops << "\n";
}

// Flat key=value config file mirroring RunConfig; unknown keys are errors.
void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw argument_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw argument_error("config: line " + std::to_string(lineno) + " is not key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    auto as_bool = [&] {
      if (val == "true" || val == "1") return true;
      if (val == "false" || val == "0") return false;
      throw argument_error("config: bad boolean for " + key + ": " + val);
    };
    try {
      if (key == "hidden") cfg.train.hidden = std::stoi(val);
      else if (key == "epochs") cfg.train.epochs = std::stoi(val);
      else if (key == "lr_weights") cfg.train.lr_weights = std::stod(val);
      else if (key == "lr_graph") cfg.train.lr_graph = std::stod(val);
      else if (key == "weight_decay") cfg.train.weight_decay = std::stod(val);
      else if (key == "dropout") cfg.train.dropout = std::stod(val);
      else if (key == "seed") cfg.train.seed = std::stoull(val);
      else if (key == "lambda_reg") cfg.train.lambda_reg = std::stod(val);
      else if (key == "pg") cfg.pg = std::stod(val);
      else if (key == "pw") cfg.pw = std::stod(val);
      else if (key == "eta") cfg.eta = std::stod(val);
      else if (key == "queue_len") cfg.queue_len = std::stoi(val);
      else if (key == "criterion") cfg.criterion = criterion_from_string(val);
      else if (key == "warmup") cfg.warmup = std::stoi(val);
      else if (key == "backward_factor") cfg.backward_factor = std::stod(val);
      else if (key == "per_layer_weight_mask") cfg.per_layer_weight_mask = as_bool();
      else if (key == "reinit_after_joint") cfg.reinit_after_joint = as_bool();
      else if (key == "grad_through_degrees") cfg.grad_through_degrees = as_bool();
      else throw argument_error("config: unknown key: " + key);
    } catch (const std::invalid_argument&) {
      throw argument_error("config: bad value for " + key + ": " + val);
    }
  }
}

// Options shared by the pipeline subcommands; flags override config values.
struct RunOptions {
  std::string dataset;
  std::string out = "runs";
  std::string config;
  std::string pairwise_out;
  double pg = 0.0, pw = 0.0, eta = 0.1;
  uint64_t seed = 0;
  std::string criterion = "sum";
  int queue_len = 3, epochs = 100, hidden = 16, warmup = 0;
  double lr_weights = 0.01, lr_graph = 0.001, weight_decay = 5e-4, dropout = 0.5;
  double lambda_reg = 0.01, backward_factor = 2.0;
  bool per_layer_weight_mask = false, reinit_after_joint = false;
  bool freeze_degrees = false;

  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* cmd, bool needs_pw) {
    opts["dataset"] = cmd->add_option("--dataset", dataset, "dataset bundle directory")
                          ->required();
    opts["out"] = cmd->add_option("--out", out, "output directory for records/traces");
    opts["config"] = cmd->add_option("--config", config, "key=value config file");
    opts["pg"] = cmd->add_option("--pg", pg, "graph pruning ratio");
    if (needs_pw) opts["pw"] = cmd->add_option("--pw", pw, "weight pruning ratio");
    opts["seed"] = cmd->add_option("--seed", seed, "run seed");
    opts["eta"] = cmd->add_option("--eta", eta, "detector threshold");
    opts["criterion"] =
        cmd->add_option("--criterion", criterion, "joint stop criterion: graph|network|sum");
    opts["queue-len"] = cmd->add_option("--queue-len", queue_len, "detector FIFO length");
    opts["epochs"] = cmd->add_option("--epochs", epochs, "epochs per phase");
    opts["hidden"] = cmd->add_option("--hidden", hidden, "hidden units");
    opts["warmup"] = cmd->add_option("--warmup", warmup, "epochs ignored by the detector");
    opts["lr-weights"] = cmd->add_option("--lr-weights", lr_weights, "weight learning rate");
    opts["lr-graph"] = cmd->add_option("--lr-graph", lr_graph, "edge-value learning rate");
    opts["weight-decay"] = cmd->add_option("--weight-decay", weight_decay, "L2 on W0");
    opts["dropout"] = cmd->add_option("--dropout", dropout, "dropout probability");
    opts["lambda-reg"] = cmd->add_option("--lambda-reg", lambda_reg, "l1 coefficient");
    opts["backward-factor"] =
        cmd->add_option("--backward-factor", backward_factor, "backward/forward cost ratio");
    opts["per-layer-weight-mask"] = cmd->add_flag("--per-layer-weight-mask",
                                                  per_layer_weight_mask,
                                                  "rank weight magnitudes per layer");
    opts["reinit-after-joint"] = cmd->add_flag("--reinit-after-joint", reinit_after_joint,
                                               "re-initialize ticket weights before retrain");
    opts["freeze-degrees"] = cmd->add_flag("--freeze-degrees", freeze_degrees,
                                           "drop the degree chain from edge gradients");
  }

  void attach_pairwise(CLI::App* cmd) {
    opts["pairwise-out"] = cmd->add_option(
        "--pairwise-out", pairwise_out,
        "also write the epoch-pairwise graph mask distance matrix as CSV");
  }

  bool given(const std::string& k) const {
    const auto it = opts.find(k);
    return it != opts.end() && it->second->count() > 0;
  }

  RunConfig build() const {
    RunConfig cfg;
    if (!config.empty()) apply_config_file(config, cfg);
    if (given("pg")) cfg.pg = pg;
    if (given("pw")) cfg.pw = pw;
    if (given("seed")) cfg.train.seed = seed;
    if (given("eta")) cfg.eta = eta;
    if (given("criterion")) cfg.criterion = criterion_from_string(criterion);
    if (given("queue-len")) cfg.queue_len = queue_len;
    if (given("epochs")) cfg.train.epochs = epochs;
    if (given("hidden")) cfg.train.hidden = hidden;
    if (given("warmup")) cfg.warmup = warmup;
    if (given("lr-weights")) cfg.train.lr_weights = lr_weights;
    if (given("lr-graph")) cfg.train.lr_graph = lr_graph;
    if (given("weight-decay")) cfg.train.weight_decay = weight_decay;
    if (given("dropout")) cfg.train.dropout = dropout;
    if (given("lambda-reg")) cfg.train.lambda_reg = lambda_reg;
    if (given("backward-factor")) cfg.backward_factor = backward_factor;
    if (given("per-layer-weight-mask")) cfg.per_layer_weight_mask = per_layer_weight_mask;
    if (given("reinit-after-joint")) cfg.reinit_after_joint = reinit_after_joint;
    if (given("freeze-degrees")) cfg.grad_through_degrees = !freeze_degrees;
    cfg.validate();
    return cfg;
  }
};

std::string csv_field(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Replays pretrain + graph sparsification with mask history on and writes
// the pairwise distance matrix; runs are deterministic, so the replay sees
// exactly the masks of the recorded run.
void write_pairwise_matrix(PipelineKind kind, const GraphDataset& ds,
                           const RunConfig& cfg, const std::string& path) {
  const auto a_full = normalize_adjacency(ds, unit_edge_values(ds));
  GcnParams init = init_params(ds.num_features(), cfg.train.hidden, ds.num_classes,
                               derive_seed(cfg.train.seed, "pretrain-init"));
  const auto pre = train_weights_phase(ds, a_full, cfg.train, std::move(init),
                                       "pretrain-dropout", "pretrain");
  SparsifyOptions opt;
  opt.detect = (kind == PipelineKind::Geb);
  opt.stop_on_fire = (kind == PipelineKind::Geb);
  opt.record_history = true;
  const auto sp = sparsify_graph_phase(ds, pre.params, cfg, opt);
  const Matrix d = pairwise_distance_matrix(sp.mask_history);

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw io_error("cannot write " + path);
  f << "# pairwise graph mask distances; row/col i = sparsify epoch i+1\n";
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      f << (j ? "," : "") << csv_field(d(i, j));
    }
    f << '\n';
  }
}

int run_one(PipelineKind kind, const RunOptions& o) {
  const RunConfig cfg = o.build();
  const GraphDataset ds = load_bundle(o.dataset);
  const RunRecord rec = run_pipeline(kind, ds, cfg);
  write_record(rec, o.out);
  if (!o.pairwise_out.empty()) write_pairwise_matrix(kind, ds, cfg, o.pairwise_out);
  print_summary(rec);
  return 0;
}

std::vector<double> parse_ratio_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream s(csv);
  std::string tok;
  while (std::getline(s, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

// --- report ----------------------------------------------------------------

int report(const std::string& runs_dir, const std::string& out_dir) {
  std::vector<RunRecord> records;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream f(entry.path());
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      records.push_back(RunRecord::from_json(nlohmann::json::parse(line)));
    }
  }
  if (records.empty()) {
    throw io_error("report: no .jsonl records under " + runs_dir);
  }
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    const auto ka = std::make_tuple(std::string(to_string(a.kind)), a.dataset, a.cfg.pg,
                                    a.cfg.pw, a.seed());
    const auto kb = std::make_tuple(std::string(to_string(b.kind)), b.dataset, b.cfg.pg,
                                    b.cfg.pw, b.seed());
    return ka < kb;
  });

  fs::create_directories(out_dir);
  const std::string header = std::string("# ") + kFlopsConvention + "\n";

  {
    std::ofstream f(fs::path(out_dir) / "summary.csv", std::ios::trunc);
    f << header
      << "pipeline,dataset,p_g,p_w,seed,t_eb,accuracy,train_flops,infer_flops,"
         "memory_bytes,error\n";
    for (const auto& r : records) {
      f << to_string(r.kind) << ',' << r.dataset << ',' << fmt_ratio(r.cfg.pg) << ','
        << fmt_ratio(r.cfg.pw) << ',' << r.seed() << ',' << r.t_eb << ','
        << csv_field(r.test_accuracy) << ',' << r.training_flops << ','
        << r.inference_flops << ',' << r.memory_bytes << ',' << r.error << '\n';
    }
  }
  {
    std::ofstream f(fs::path(out_dir) / "fig_accuracy_vs_flops.csv", std::ios::trunc);
    f << header
      << "pipeline,dataset,p_g,p_w,seed,t_eb,accuracy,train_flops,infer_flops\n";
    for (const auto& r : records) {
      if (!r.error.empty()) continue;
      f << to_string(r.kind) << ',' << r.dataset << ',' << fmt_ratio(r.cfg.pg) << ','
        << fmt_ratio(r.cfg.pw) << ',' << r.seed() << ',' << r.t_eb << ','
        << csv_field(r.test_accuracy) << ',' << r.training_flops << ','
        << r.inference_flops << '\n';
    }
  }
  {
    std::ofstream f(fs::path(out_dir) / "fig_distance_trace.csv", std::ios::trunc);
    f << header
      << "pipeline,dataset,p_g,p_w,seed,phase,epoch,d_g,d_w,combined,fired\n";
    for (const auto& r : records) {
      for (const auto& t : r.trace) {
        if (std::isnan(t.d_g) && std::isnan(t.d_w)) continue;
        f << to_string(r.kind) << ',' << r.dataset << ',' << fmt_ratio(r.cfg.pg) << ','
          << fmt_ratio(r.cfg.pw) << ',' << r.seed() << ',' << t.phase << ',' << t.epoch
          << ',' << csv_field(t.d_g) << ',' << csv_field(t.d_w) << ','
          << csv_field(t.combined) << ',' << (t.fired ? 1 : 0) << '\n';
      }
    }
  }
  std::cout << "report: " << records.size() << " records -> " << out_dir
            << " (summary.csv, fig_accuracy_vs_flops.csv, fig_distance_trace.csv)\n"
            << kFlopsConvention << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-layer GCN training with graph/weight co-sparsification and "
      "early-bird ticket detection"};
  app.require_subcommand(1);

  std::function<int()> action;

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic SBM dataset bundle");
  struct {
    uint64_t seed = 0;
    int blocks = 3, npb = 150, feat_dim = 6;
    double p_in = 0.2, p_out = 0.08;
    std::string out;
  } g;
  gen->add_option("--seed", g.seed, "generator seed");
  gen->add_option("--blocks", g.blocks, "number of blocks/classes");
  gen->add_option("--nodes-per-block", g.npb, "nodes per block");
  gen->add_option("--p-in", g.p_in, "intra-block edge probability");
  gen->add_option("--p-out", g.p_out, "inter-block edge probability");
  gen->add_option("--feat-dim", g.feat_dim, "feature dimension");
  gen->add_option("--out", g.out, "bundle directory to write")->required();
  gen->callback([&] {
    action = [&]() {
      const auto ds = gen_synthetic(g.seed, g.blocks, g.npb, g.p_in, g.p_out, g.feat_dim);
      save_bundle(ds, g.out);
      std::cout << "wrote " << ds.name << " (N=" << ds.num_nodes
                << ", M=" << ds.num_edges() << ", C=" << ds.num_features()
                << ", F=" << ds.num_classes << ") to " << g.out << "\n";
      return 0;
    };
  });

  RunOptions baseline_o, geb_o, joint_o, random_o;
  auto* baseline = app.add_subcommand("train-baseline",
                                      "pretrain, full-length graph sparsification, retrain");
  baseline_o.attach(baseline, false);
  baseline_o.attach_pairwise(baseline);
  baseline->callback([&] { action = [&] { return run_one(PipelineKind::Baseline, baseline_o); }; });

  auto* findgeb = app.add_subcommand("find-geb",
                                     "graph early-bird ticket pipeline (detector-stopped)");
  geb_o.attach(findgeb, false);
  geb_o.attach_pairwise(findgeb);
  findgeb->callback([&] { action = [&] { return run_one(PipelineKind::Geb, geb_o); }; });

  auto* findjoint = app.add_subcommand("find-joint-eb",
                                       "joint graph+weight early-bird ticket pipeline");
  joint_o.attach(findjoint, true);
  findjoint->callback([&] { action = [&] { return run_one(PipelineKind::JointEb, joint_o); }; });

  auto* randomp = app.add_subcommand("random-prune",
                                     "random graph mask baseline (pg=0 is a plain GCN run)");
  random_o.attach(randomp, false);
  randomp->callback([&] { action = [&] { return run_one(PipelineKind::RandomPrune, random_o); }; });

  // sweep
  RunOptions sweep_o;
  auto* sw = app.add_subcommand("sweep", "cartesian sweep over pipelines x pg x pw x seeds");
  sweep_o.attach(sw, true);
  struct {
    std::string pipelines = "geb,random-prune";
    std::string pgs = "0.1,0.3,0.5";
    std::string pws = "0";
    std::string seeds = "0,1,2,3,4";
    int workers = 1;
  } s;
  sw->add_option("--pipelines", s.pipelines, "comma list: baseline,geb,joint-eb,random-prune");
  sw->add_option("--pg-list", s.pgs, "comma list of graph ratios");
  sw->add_option("--pw-list", s.pws, "comma list of weight ratios");
  sw->add_option("--seeds", s.seeds, "comma list of seeds");
  sw->add_option("--workers", s.workers, "parallel runs");
  sw->callback([&] {
    action = [&]() {
      const RunConfig cfg = sweep_o.build();
      const GraphDataset ds = load_bundle(sweep_o.dataset);
      std::vector<PipelineKind> kinds;
      {
        std::stringstream ss(s.pipelines);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          if (!tok.empty()) kinds.push_back(pipeline_from_string(tok));
        }
      }
      std::vector<uint64_t> seeds;
      {
        std::stringstream ss(s.seeds);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          if (!tok.empty()) seeds.push_back(std::stoull(tok));
        }
      }
      const auto records = sweep(ds, cfg, kinds, parse_ratio_list(s.pgs),
                                 parse_ratio_list(s.pws), seeds, s.workers);
      fs::create_directories(sweep_o.out);
      std::ofstream f(fs::path(sweep_o.out) / ("sweep_" + ds.name + ".jsonl"),
                      std::ios::trunc);
      if (!f) throw io_error("cannot write sweep jsonl");
      int failures = 0;
      for (const auto& r : records) {
        f << r.to_json().dump() << "\n";
        std::ofstream tf(fs::path(sweep_o.out) /
                             (run_name(r.kind, r.dataset, r.cfg) + ".trace.csv"),
                         std::ios::trunc);
        r.write_trace_csv(tf);
        failures += !r.error.empty();
      }
      std::cout << "sweep: " << records.size() << " records (" << failures
                << " failed) -> " << sweep_o.out << "\n";
      return 0;
    };
  });

  // report
  auto* rep = app.add_subcommand("report", "aggregate JSONL records into CSV summaries");
  struct {
    std::string runs = "runs";
    std::string out = "runs";
  } r;
  rep->add_option("--runs", r.runs, "directory of .jsonl records");
  rep->add_option("--out", r.out, "output directory for CSV files");
  rep->callback([&] { action = [&] { return report(r.runs, r.out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return action();
  } catch (const argument_error& e) {
    // bad flag values, config keys, grids: usage errors
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
