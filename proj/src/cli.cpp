#include "unitdiff/cli.hpp"

#include "unitdiff/codebook.hpp"
#include "unitdiff/evaluate.hpp"
#include "unitdiff/hybrid.hpp"
#include "unitdiff/io.hpp"
#include "unitdiff/process.hpp"
#include "unitdiff/sampler.hpp"
#include "unitdiff/schedule.hpp"
#include "unitdiff/seed.hpp"
#include "unitdiff/synthbench.hpp"
#include "unitdiff/training.hpp"
#include "unitdiff/transformer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace unitdiff {

namespace fs = std::filesystem;

namespace {

// Files a command has written so far; removed again if the command fails.
class Outputs {
 public:
  void write(const fs::path& path, const std::string& contents) {
    io::write_file(path, contents);
    paths_.push_back(path);
  }
  void track(const fs::path& path) { paths_.push_back(path); }
  void discard() {
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(p, ec);
    paths_.clear();
  }

 private:
  std::vector<fs::path> paths_;
};

struct ScheduleArgs {
  std::string kind = "linear";
  int steps = 1000;
  double beta0 = 0.3;

  ScheduleSpec spec() const {
    auto s = ScheduleSpec::defaults(schedule_kind_from_string(kind), steps);
    s.beta0 = beta0;
    return s;
  }
};

void add_schedule_flags(CLI::App* cmd, ScheduleArgs& a) {
  cmd->add_option("--schedule", a.kind, "Noise schedule")->check(CLI::IsMember({"linear", "uniform"}));
  cmd->add_option("--T", a.steps, "Diffusion steps")->check(CLI::PositiveNumber);
  cmd->add_option("--beta0", a.beta0, "Initial corruption of the uniform schedule");
}

struct MakeCodebookArgs {
  int classes = kDefaultClasses;
  int per_class = kDefaultPerClass;
  int dim = kDefaultDim;
  double s_meta = kDefaultMetaScale;
  double s_intra = kDefaultIntraScale;
  std::uint64_t seed = 0;
  std::string fit_points;
  int k = 0;
  int max_iters = 100;
  std::string out = "codebook.json";
};

Matrix read_points_csv(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("points file: ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("points file is empty: " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void cmd_make_codebook(const MakeCodebookArgs& a, Outputs& outs, std::ostream& out) {
  std::unique_ptr<Codebook> cb;
  if (!a.fit_points.empty()) {
    if (a.k < 1) throw std::invalid_argument("--k is required with --fit-points");
    cb = std::make_unique<Codebook>(fit_kmeans(read_points_csv(a.fit_points), a.k, a.max_iters, a.seed));
  } else {
    cb = std::make_unique<Codebook>(make_structured_codebook(a.classes, a.per_class, a.dim, a.s_meta, a.s_intra, a.seed));
  }
  outs.write(a.out, codebook_to_json(*cb));
  out << "K=" << cb->size() << " D=" << cb->dim() << " min_gap=" << io::format_double(cb->min_centroid_gap()) << "\n";
}

struct GenDataArgs {
  std::string codebook;
  int train_n = 2000;
  int test_n = 200;
  int src_min = 8, src_max = 16;
  int rep_min = 2, rep_max = 4;
  std::uint64_t seed = 0;
  std::string out_dir = "data";
};

void cmd_gen_data(const GenDataArgs& a, Outputs& outs, std::ostream& out) {
  const auto cb = load_codebook(a.codebook);
  BenchmarkSpec spec;
  spec.train_pairs = a.train_n;
  spec.test_pairs = a.test_n;
  spec.src_len = {a.src_min, a.src_max};
  spec.repeats = {a.rep_min, a.rep_max};
  const auto b = generate_benchmark(cb, spec, a.seed);
  const fs::path dir(a.out_dir);
  outs.write(dir / "train.jsonl", dataset_to_jsonl(b.train));
  outs.write(dir / "test.jsonl", dataset_to_jsonl(b.test));
  out << "train=" << b.train.pairs.size() << " test=" << b.test.pairs.size() << "\n";
}

struct TrainArgs {
  std::string codebook;
  std::string data;
  std::string system = "hybrid";
  bool no_kmeans = false;
  ScheduleArgs schedule;
  TrainConfig tc;
  DenoiserConfig model;
  std::uint64_t seed = 0;
  std::string out = "model.ckpt";
  std::string loss_csv;
  int log_every = 0;
};

std::string checkpoint_metadata(const std::string& system, bool kmeans_mapping, const ScheduleSpec& spec,
                                const TrainConfig& tc) {
  nlohmann::json j = {{"system", system},
                      {"kmeans_mapping", kmeans_mapping},
                      {"schedule", nlohmann::json::parse(spec.to_json())},
                      {"train", nlohmann::json::parse(tc.to_json())}};
  return j.dump();
}

void cmd_train(TrainArgs a, Outputs& outs, std::ostream& out) {
  const auto cb = load_codebook(a.codebook);
  const auto data = load_dataset(cb, a.data);
  const auto spec = a.schedule.spec();
  const auto ns = spec.build();
  const auto kind = system_kind_from_string(a.system);
  if (a.no_kmeans && kind != SystemKind::hybrid) throw std::invalid_argument("--no-kmeans applies to hybrid only");
  const DiffusionProcess proc(kind, cb, ns, !a.no_kmeans);

  a.model.num_units = cb.size();
  a.model.source_vocab = cb.num_classes();
  if (longest_target(data.pairs) > a.model.max_len)
    throw std::invalid_argument("--max-len is shorter than the longest training target");
  a.tc.warmup_steps = std::min(a.tc.warmup_steps, a.tc.total_steps);
  a.tc.seed = derive_seed(a.seed, "train");
  TransformerDenoiser model(a.model, derive_seed(a.seed, "model"));

  const auto history = train(model, data.pairs, proc, a.tc, [&](const LossRecord& r) {
    if (a.log_every > 0 && r.step % a.log_every == 0)
      out << "step " << r.step << " loss " << io::format_double(r.loss) << "\n" << std::flush;
  });

  const fs::path ckpt(a.out);
  fs::path bin = ckpt;
  bin += ".bin";
  outs.track(bin);
  outs.track(ckpt);
  save_checkpoint(model, ckpt, a.tc.total_steps, a.seed, checkpoint_metadata(a.system, !a.no_kmeans, spec, a.tc));
  const fs::path loss_path = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
  outs.write(loss_path, loss_history_csv(history));
  out << "steps=" << history.size();
  if (!history.empty()) out << " final_loss=" << io::format_double(history.back().loss);
  out << "\n";
}

// A checkpointed model or the oracle, plus the system it was trained for.
struct LoadedSystem {
  std::unique_ptr<Denoiser> denoiser;
  std::string system;
  bool kmeans_mapping = true;
  ScheduleSpec schedule;
};

struct DenoiserArgs {
  std::string checkpoint;
  bool oracle = false;
  std::string system = "hybrid";
  bool no_kmeans = false;
  ScheduleArgs schedule;
};

void add_denoiser_flags(CLI::App* cmd, DenoiserArgs& a) {
  cmd->add_option("--checkpoint", a.checkpoint, "Trained model manifest");
  cmd->add_flag("--oracle-denoiser", a.oracle, "Use a denoiser that knows the references (pipeline self-test)");
  cmd->add_option("--system", a.system, "System, when no checkpoint is given")
      ->check(CLI::IsMember({"hybrid", "multinomial", "absorbing"}));
  cmd->add_flag("--no-kmeans", a.no_kmeans, "Hybrid without the K-means mapping, when no checkpoint is given");
  add_schedule_flags(cmd, a.schedule);
}

LoadedSystem load_system(const DenoiserArgs& a, const Codebook& cb, const Dataset& data) {
  LoadedSystem s;
  if (a.oracle) {
    std::map<SourceSequence, UnitSequence> refs;
    for (const auto& p : data.pairs) refs[p.source] = p.target;
    s.denoiser = std::make_unique<OracleDenoiser>(cb.size(), std::max(64, longest_target(data.pairs)), refs);
    s.system = a.system;
    s.kmeans_mapping = !a.no_kmeans;
    s.schedule = a.schedule.spec();
    return s;
  }
  if (a.checkpoint.empty()) throw std::invalid_argument("either --checkpoint or --oracle-denoiser is required");
  auto loaded = load_checkpoint(a.checkpoint);
  const auto meta = nlohmann::json::parse(loaded.metadata_json);
  s.system = meta.at("system").get<std::string>();
  s.kmeans_mapping = meta.at("kmeans_mapping").get<bool>();
  s.schedule = ScheduleSpec::from_json(meta.at("schedule").dump());
  if (loaded.model.num_units() != cb.size()) throw std::invalid_argument("checkpoint and codebook disagree on K");
  s.denoiser = std::make_unique<TransformerDenoiser>(std::move(loaded.model));
  return s;
}

struct SamplerArgs {
  int steps = 50;
  int beam = 5;
  std::string mode = "posterior";

  SamplerConfig config() const {
    SamplerConfig c;
    c.steps = steps;
    c.length_beam = beam;
    c.mode = reverse_mode_from_string(mode);
    return c;
  }
};

void add_sampler_flags(CLI::App* cmd, SamplerArgs& a) {
  cmd->add_option("--steps", a.steps, "Reverse steps")->check(CLI::PositiveNumber);
  cmd->add_option("--beam", a.beam, "Length beam size")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", a.mode, "Reverse kernel of the hybrid system")
      ->check(CLI::IsMember({"posterior", "renoise"}));
}

struct EvalArgs {
  std::string codebook;
  std::string data;
  DenoiserArgs denoiser;
  SamplerArgs sampler;
  std::uint64_t seed = 0;
  std::string out = "metrics.json";
  std::string csv;
};

void cmd_eval(const EvalArgs& a, Outputs& outs, std::ostream& out) {
  const auto cb = load_codebook(a.codebook);
  const auto data = load_dataset(cb, a.data, Split::test);
  const auto sys = load_system(a.denoiser, cb, data);
  const auto ns = sys.schedule.build();
  const DiffusionProcess proc(system_kind_from_string(sys.system), cb, ns, sys.kmeans_mapping);
  const auto ev = evaluate_system(proc, *sys.denoiser, data, a.sampler.config(), a.seed);
  outs.write(a.out, ev.report.to_json());
  if (!a.csv.empty()) {
    std::string table = fs::exists(a.csv) ? io::read_file(a.csv) : MetricsReport::csv_header();
    table += ev.report.csv_row();
    io::write_file(a.csv, table);
  }
  out << ev.report.csv_row();
}

struct KnnCurveArgs {
  std::string codebook;
  std::string data;
  ScheduleArgs schedule;
  std::vector<int> ts;
  int points = 21;
  int limit = 0;
  std::uint64_t seed = 0;
  std::string out = "knn_accuracy.csv";
};

void cmd_knn_curve(const KnnCurveArgs& a, Outputs& outs, std::ostream& out) {
  const auto cb = load_codebook(a.codebook);
  const auto data = load_dataset(cb, a.data);
  const auto ns = a.schedule.spec().build();
  std::vector<int> ts = a.ts;
  if (ts.empty()) {
    if (a.points < 2) throw std::invalid_argument("--points must be >= 2");
    for (int i = 0; i < a.points; ++i) {
      const int t = static_cast<int>(std::lround(static_cast<double>(i) * ns.steps() / (a.points - 1)));
      if (ts.empty() || std::max(t, 1) != ts.back()) ts.push_back(std::max(t, 1));
    }
  }
  std::vector<UnitSequence> seqs;
  for (const auto& p : data.pairs) {
    if (a.limit > 0 && static_cast<int>(seqs.size()) == a.limit) break;
    seqs.push_back(p.target);
  }
  const auto curve = knn_accuracy_curve(cb, ns, seqs, ts, a.seed);
  std::string csv = "t,value\n";
  for (const auto& p : curve) csv += std::to_string(p.t) + "," + io::format_double(p.value) + "\n";
  outs.write(a.out, csv);
  out << "points=" << curve.size() << "\n";
}

struct IntermediateArgs {
  std::string codebook;
  std::string data;
  DenoiserArgs denoiser;
  SamplerArgs sampler;
  int limit = 50;
  std::uint64_t seed = 0;
  std::string out = "intermediate.csv";
};

void cmd_intermediate(const IntermediateArgs& a, Outputs& outs, std::ostream& out) {
  const auto cb = load_codebook(a.codebook);
  auto data = load_dataset(cb, a.data, Split::test);
  if (a.limit > 0 && static_cast<int>(data.pairs.size()) > a.limit) data.pairs.resize(static_cast<std::size_t>(a.limit));
  const auto sys = load_system(a.denoiser, cb, data);
  const auto ns = sys.schedule.build();
  const DiffusionProcess proc(system_kind_from_string(sys.system), cb, ns, sys.kmeans_mapping);
  auto cfg = a.sampler.config();
  cfg.track_intermediate = true;
  const auto ev = evaluate_system(proc, *sys.denoiser, data, cfg, a.seed);
  std::vector<std::vector<TraceEntry>> traces;
  std::vector<UnitSequence> refs;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    traces.push_back(ev.samples[i].trace);
    refs.push_back(data.pairs[i].target);
  }
  const auto scores = intermediate_quality_corpus(cb, traces, refs);
  outs.write(a.out, step_scores_csv(scores));
  out << "steps=" << scores.size() << " final=" << io::format_double(scores.back().score) << "\n";
}

void add_model_flags(CLI::App* cmd, DenoiserConfig& m) {
  cmd->add_option("--embed-dim", m.embed_dim, "Model width");
  cmd->add_option("--heads", m.heads, "Attention heads");
  cmd->add_option("--enc-layers", m.enc_layers, "Encoder layers");
  cmd->add_option("--dec-layers", m.dec_layers, "Decoder layers");
  cmd->add_option("--ffn", m.ffn_dim, "Feed-forward width");
  cmd->add_option("--max-len", m.max_len, "Longest target the model handles");
  cmd->add_option("--dropout", m.dropout, "Dropout rate");
}

}  // namespace

int run_cli(int argc, char** argv) { return run_cli(argc, argv, std::cout, std::cerr); }

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid continuous/discrete diffusion for unit sequences"};
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.require_subcommand(1);

  MakeCodebookArgs mk;
  auto* c_mk = app.add_subcommand("make-codebook", "Write a structured (or fitted) codebook");
  c_mk->add_option("--classes", mk.classes, "Semantic classes C");
  c_mk->add_option("--per-class", mk.per_class, "Units per class");
  c_mk->add_option("--dim", mk.dim, "Embedding dimension D");
  c_mk->add_option("--s-meta", mk.s_meta, "Spread of class means");
  c_mk->add_option("--s-intra", mk.s_intra, "Spread within a class");
  c_mk->add_option("--seed", mk.seed, "Seed");
  c_mk->add_option("--fit-points", mk.fit_points, "CSV of points to cluster with k-means instead");
  c_mk->add_option("--k", mk.k, "Clusters for --fit-points");
  c_mk->add_option("--max-iters", mk.max_iters, "Lloyd iterations for --fit-points");
  c_mk->add_option("--out", mk.out, "Output JSON");

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "Write train/test JSONL pairs");
  c_gd->add_option("--codebook", gd.codebook, "Codebook JSON")->required();
  c_gd->add_option("--train-n", gd.train_n, "Training pairs");
  c_gd->add_option("--test-n", gd.test_n, "Test pairs");
  c_gd->add_option("--src-min", gd.src_min, "Shortest source");
  c_gd->add_option("--src-max", gd.src_max, "Longest source");
  c_gd->add_option("--rep-min", gd.rep_min, "Fewest units per source symbol");
  c_gd->add_option("--rep-max", gd.rep_max, "Most units per source symbol");
  c_gd->add_option("--seed", gd.seed, "Seed");
  c_gd->add_option("--out-dir", gd.out_dir, "Output directory");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a denoiser for one system");
  c_tr->add_option("--codebook", tr.codebook, "Codebook JSON")->required();
  c_tr->add_option("--data", tr.data, "Training JSONL")->required();
  c_tr->add_option("--system", tr.system, "Diffusion system")->check(CLI::IsMember({"hybrid", "multinomial", "absorbing"}));
  c_tr->add_flag("--no-kmeans", tr.no_kmeans, "Hybrid without the K-means mapping");
  add_schedule_flags(c_tr, tr.schedule);
  c_tr->add_option("--steps", tr.tc.total_steps, "Optimizer steps");
  c_tr->add_option("--warmup", tr.tc.warmup_steps, "Warmup steps");
  c_tr->add_option("--batch", tr.tc.batch_size, "Batch size");
  c_tr->add_option("--lr", tr.tc.lr, "Peak learning rate");
  c_tr->add_option("--smoothing", tr.tc.label_smoothing, "Label smoothing");
  c_tr->add_option("--length-weight", tr.tc.length_weight, "Weight of the length loss");
  add_model_flags(c_tr, tr.model);
  c_tr->add_option("--seed", tr.seed, "Seed");
  c_tr->add_option("--out", tr.out, "Checkpoint manifest");
  c_tr->add_option("--loss-csv", tr.loss_csv, "Loss history CSV (default: <out>.loss.csv)");
  c_tr->add_option("--log-every", tr.log_every, "Print the loss every N steps");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Decode a test set and report metrics");
  c_ev->add_option("--codebook", ev.codebook, "Codebook JSON")->required();
  c_ev->add_option("--data", ev.data, "Test JSONL")->required();
  add_denoiser_flags(c_ev, ev.denoiser);
  add_sampler_flags(c_ev, ev.sampler);
  c_ev->add_option("--seed", ev.seed, "Seed");
  c_ev->add_option("--out", ev.out, "Metrics JSON");
  c_ev->add_option("--csv", ev.csv, "Comparison table to append a row to");

  auto* c_cu = app.add_subcommand("curves", "Diagnostic curves");
  c_cu->require_subcommand(1);
  KnnCurveArgs kc;
  auto* c_knn = c_cu->add_subcommand("knn-accuracy", "Unit survival under forward corruption");
  c_knn->add_option("--codebook", kc.codebook, "Codebook JSON")->required();
  c_knn->add_option("--data", kc.data, "JSONL pairs whose targets are corrupted")->required();
  add_schedule_flags(c_knn, kc.schedule);
  c_knn->add_option("--ts", kc.ts, "Timesteps (default: evenly spaced)");
  c_knn->add_option("--points", kc.points, "Number of evenly spaced timesteps");
  c_knn->add_option("--limit", kc.limit, "Use at most this many sequences");
  c_knn->add_option("--seed", kc.seed, "Seed");
  c_knn->add_option("--out", kc.out, "Output CSV");
  IntermediateArgs im;
  auto* c_im = c_cu->add_subcommand("intermediate", "Quality of the intermediate predictions");
  c_im->add_option("--codebook", im.codebook, "Codebook JSON")->required();
  c_im->add_option("--data", im.data, "Test JSONL")->required();
  add_denoiser_flags(c_im, im.denoiser);
  add_sampler_flags(c_im, im.sampler);
  c_im->add_option("--limit", im.limit, "Use at most this many pairs");
  c_im->add_option("--seed", im.seed, "Seed");
  c_im->add_option("--out", im.out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  Outputs outs;
  try {
    if (*c_mk) cmd_make_codebook(mk, outs, out);
    else if (*c_gd) cmd_gen_data(gd, outs, out);
    else if (*c_tr) cmd_train(tr, outs, out);
    else if (*c_ev) cmd_eval(ev, outs, out);
    else if (*c_knn) cmd_knn_curve(kc, outs, out);
    else if (*c_im) cmd_intermediate(im, outs, out);
  } catch (const std::exception& e) {
    outs.discard();
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace unitdiff
