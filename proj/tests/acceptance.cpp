// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--cache DIR] [--only N ...] [--train-only]
//
// Criteria 7-10 share trained models, cached under DIR and reused when
// their recorded settings match.

#include "unitdiff/baselines.hpp"
#include "unitdiff/cli.hpp"
#include "unitdiff/evaluate.hpp"
#include "unitdiff/hybrid.hpp"
#include "unitdiff/io.hpp"
#include "unitdiff/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

using namespace unitdiff;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kRoundTripSeconds = 1.0;
constexpr double kScheduleSeconds = 1.0;
constexpr double kAlphaBarRelTol = 0.01;
constexpr double kFrozenAlphaBarT = 4.0358297654e-05;
constexpr double kKnnEarlyMin = 0.95;
constexpr double kKnnLateMax = 0.05;
constexpr double kKnnMonotoneSlack = 0.02;
constexpr int kKnnPositions = 10000;
constexpr double kKnnSeconds = 30.0;
constexpr double kOracleSeconds = 30.0;
constexpr double kGradEps = 1e-5;
constexpr double kGradMaxRel = 1e-4;
constexpr int kGradParams = 200;
constexpr double kGradSeconds = 120.0;
constexpr int kBayesDraws = 100000;
constexpr double kBayesSigmas = 3.0;
constexpr double kBayesSeconds = 60.0;
constexpr double kMarginOverMultinomial = 2.0;
constexpr double kTrainSecondsPerSystem = 1800.0;
constexpr double kStepRobustRatio = 0.85;
constexpr double kEarlyFraction = 0.8;
constexpr double kIntermediateSeconds = 300.0;
constexpr double kAblationBleuTol = 1.0;
constexpr double kAblationSeconds = 300.0;
constexpr double kDeterminismSeconds = 300.0;

constexpr std::uint64_t kSeed = 0;
constexpr int kDecodeSteps = 50;
constexpr int kFewSteps = 5;
const ScheduleKind kComparisonSchedule = ScheduleKind::linear;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Codebook default_codebook() {
  return make_structured_codebook(kDefaultClasses, kDefaultPerClass, kDefaultDim, kDefaultMetaScale,
                                  kDefaultIntraScale, kSeed);
}

// ---------------------------------------------------------------- 1

Outcome round_trip() {
  const auto start = Clock::now();
  const auto cb = default_codebook();
  UnitSequence all(cb.size());
  for (int u = 0; u < cb.size(); ++u) all[u] = u;
  const bool identity = quantize(cb, embed(cb, all)) == all;

  // Inside half the minimum gap every point snaps back.
  const double radius = 0.499 * cb.min_centroid_gap();
  Matrix noise = standard_normal(cb.size(), cb.dim(), 1);
  for (int i = 0; i < cb.size(); ++i) noise.row(i) *= radius / noise.row(i).norm();
  const bool perturbed = quantize(cb, embed(cb, all) + noise) == all;

  Matrix pair(2, 1);
  pair << 0.0, 2.0;
  const Codebook line(pair);
  Matrix mid(1, 1);
  mid << 1.0;
  const bool tie = quantize(line, mid) == UnitSequence{0};

  const double secs = seconds_since(start);
  return {identity && perturbed && tie && secs < kRoundTripSeconds,
          "identity=" + std::to_string(identity) + " radius=" + std::to_string(perturbed) +
              " tie_low=" + std::to_string(tie) + " " + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 2

Outcome schedules() {
  const auto start = Clock::now();
  const auto lin = default_linear_schedule(1000);
  double product = 1.0;
  for (int i = 0; i < 1000; ++i) product *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 999.0);
  const double rel = std::abs(lin.alpha_bar(1000) / product - 1.0);
  const double frozen_rel = std::abs(lin.alpha_bar(1000) / kFrozenAlphaBarT - 1.0);

  const auto uni = uniform_schedule(1000, 0.3);
  bool decreasing = true;
  for (int t = 1; t <= 1000; ++t) decreasing = decreasing && uni.alpha_bar(t) < uni.alpha_bar(t - 1);
  const bool start_exact = uni.alpha_bar(0) == 0.7;

  const double secs = seconds_since(start);
  return {rel <= kAlphaBarRelTol && frozen_rel <= kAlphaBarRelTol && decreasing && start_exact &&
              secs < kScheduleSeconds,
          "abar_T=" + fmt(lin.alpha_bar(1000), 8) + " rel_err=" + fmt(rel, 3) + " uniform_abar0=" +
              fmt(uni.alpha_bar(0), 10) + " decreasing=" + std::to_string(decreasing) + " " + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 3

Outcome knn_curve() {
  const auto start = Clock::now();
  const auto cb = default_codebook();
  const auto data = generate_dataset(cb, 400, {8, 16}, {2, 4}, derive_seed(kSeed, "knn-data"));
  std::vector<UnitSequence> targets;
  int positions = 0;
  for (const auto& p : data.pairs) {
    if (positions >= kKnnPositions) break;
    UnitSequence t = p.target;
    if (positions + static_cast<int>(t.size()) > kKnnPositions) t.resize(kKnnPositions - positions);
    positions += static_cast<int>(t.size());
    targets.push_back(t);
  }
  std::vector<int> ts{1};
  for (int t = 10; t <= 1000; t += 10) ts.push_back(t);

  const auto lin = knn_accuracy_curve(cb, default_linear_schedule(1000), targets, ts, derive_seed(kSeed, "knn"));
  double early_min = 1.0, worst_rise = 0.0;
  for (std::size_t i = 0; i < lin.size(); ++i) {
    if (lin[i].t <= 200) early_min = std::min(early_min, lin[i].value);
    if (i > 0) worst_rise = std::max(worst_rise, lin[i].value - lin[i - 1].value);
  }
  const double at_t = lin.back().value;
  const auto uni = knn_accuracy_curve(cb, uniform_schedule(1000, 0.3), targets, {1}, derive_seed(kSeed, "knn"));
  const double uni_first = uni.front().value;

  const bool lin_ok = early_min >= kKnnEarlyMin && at_t <= kKnnLateMax && worst_rise <= kKnnMonotoneSlack;
  const bool uni_ok = uni_first < kKnnEarlyMin;
  const double secs = seconds_since(start);
  return {lin_ok && uni_ok && secs < kKnnSeconds && positions == kKnnPositions,
          "linear min(t<=200)=" + fmt(early_min) + " at_T=" + fmt(at_t) + " max_rise=" + fmt(worst_rise) +
              " [" + (lin_ok ? "ok" : "FAIL") + "]; uniform t=1 " + fmt(uni_first) + " (need <" + fmt(kKnnEarlyMin) +
              ") [" + (uni_ok ? "ok" : "FAIL") + "] " + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 4

Outcome oracle_sampler() {
  const auto start = Clock::now();
  const auto cb = default_codebook();
  const auto ns = default_linear_schedule(1000);
  const auto data = generate_dataset(cb, 100, {8, 16}, {2, 4}, derive_seed(kSeed, "oracle-data"));
  std::map<SourceSequence, UnitSequence> refs;
  for (const auto& p : data.pairs) refs[p.source] = p.target;
  const OracleDenoiser oracle(cb.size(), 64, refs);

  struct Run {
    SystemKind kind;
    ReverseMode mode;
  };
  const Run runs[] = {{SystemKind::hybrid, ReverseMode::posterior},
                      {SystemKind::hybrid, ReverseMode::renoise},
                      {SystemKind::multinomial, ReverseMode::posterior},
                      {SystemKind::absorbing, ReverseMode::posterior}};
  int exact = 0, total = 0;
  std::string misses;
  for (const auto& r : runs) {
    const DiffusionProcess proc(r.kind, cb, ns);
    for (int steps : {1, 5, 50}) {
      SamplerConfig sc;
      sc.steps = steps;
      sc.mode = r.mode;
      const auto ev = evaluate_system(proc, oracle, data, sc, kSeed);
      for (std::size_t i = 0; i < data.pairs.size(); ++i) {
        ++total;
        if (ev.samples[i].units == data.pairs[i].target) {
          ++exact;
        } else if (misses.size() < 80) {
          misses += " " + to_string(r.kind) + "/" + to_string(r.mode) + "@" + std::to_string(steps);
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return {exact == total && secs < kOracleSeconds,
          std::to_string(exact) + "/" + std::to_string(total) + " exact" + misses + " " + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 5

Outcome gradient() {
  const auto start = Clock::now();
  const auto cb = default_codebook();
  const auto data = generate_dataset(cb, 4, {8, 16}, {2, 4}, derive_seed(kSeed, "grad-data"));
  double worst = 0.0;
  int checked = 0;
  std::string where;
  for (auto kind : {SystemKind::hybrid, SystemKind::multinomial, SystemKind::absorbing}) {
    TransformerDenoiser m(DenoiserConfig::desk(cb.size(), cb.num_classes()), derive_seed(kSeed, "grad-model"));
    const DiffusionProcess proc(kind, cb, default_linear_schedule(1000));
    const auto r = gradcheck(m, proc, data.pairs, kGradEps, kGradParams, derive_seed(kSeed, "grad"), {0.2, 0.1});
    checked += r.checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = to_string(kind) + ":" + r.worst_parameter;
    }
  }
  const double secs = seconds_since(start);
  return {worst <= kGradMaxRel && checked >= 3 * kGradParams && secs < kGradSeconds,
          "max_rel=" + fmt(worst, 3) + " (" + where + ") over " + std::to_string(checked) + " params " + fmt(secs) +
              "s"};
}

// ---------------------------------------------------------------- 6

Outcome exhaustive_bayes() {
  const auto start = Clock::now();
  // alpha_bar = 0.8, 0.5, 0.25, 0.1; x_t = 2; p0 = (0.6, 0.3, 0.1).
  const std::vector<double> ab{0.8, 0.5, 0.25, 0.1};
  std::vector<double> betas;
  double prev = 1.0;
  for (double a : ab) {
    betas.push_back(1.0 - a / prev);
    prev = a;
  }
  const NoiseSchedule ns(ScheduleKind::linear, betas, ab, 1.0);
  struct Point {
    int t, t_prev;
    double expect[3];
  };
  // Enumerated with exact rationals.
  const Point grid[] = {{2, 1, {0.406250000000, 0.226250000000, 0.367500000000}},
                        {3, 2, {0.305555555556, 0.205555555556, 0.488888888889}},
                        {4, 2, {0.411111111111, 0.277777777778, 0.311111111111}},
                        {4, 1, {0.529861111111, 0.296527777778, 0.173611111111}}};
  Matrix p0(kBayesDraws, 3);
  p0.col(0).setConstant(0.6);
  p0.col(1).setConstant(0.3);
  p0.col(2).setConstant(0.1);
  const UnitSequence x_t(kBayesDraws, 2);
  bool ok = true;
  double worst_z = 0.0;
  for (const auto& g : grid) {
    const auto draws = multinomial_reverse_step(ns, x_t, p0, g.t, g.t_prev,
                                                derive_seed(derive_seed(kSeed, "bayes"), static_cast<std::uint64_t>(g.t * 10 + g.t_prev)));
    for (int c = 0; c < 3; ++c) {
      const double f = static_cast<double>(std::count(draws.begin(), draws.end(), c)) / kBayesDraws;
      const double sigma = std::sqrt(g.expect[c] * (1 - g.expect[c]) / kBayesDraws);
      const double z = std::abs(f - g.expect[c]) / sigma;
      worst_z = std::max(worst_z, z);
      ok = ok && z <= kBayesSigmas;
    }
  }
  const double secs = seconds_since(start);
  return {ok && secs < kBayesSeconds, "worst |z|=" + fmt(worst_z, 3) + " over 4 points x 3 classes " + fmt(secs) + "s"};
}

// ------------------------------------------------------------ models

struct Bench {
  Codebook cb = default_codebook();
  Benchmark data = generate_benchmark(cb, {}, kSeed);
  NoiseSchedule ns = ScheduleSpec::defaults(kComparisonSchedule, 1000).build();
};

struct Trained {
  std::optional<TransformerDenoiser> model;
  double train_seconds = 0.0;
  bool cached = false;
};

std::string model_key(SystemKind kind, bool kmeans) {
  return to_string(kind) + (kmeans ? "" : "-no-kmeans") + "_" + to_string(kComparisonSchedule);
}

Trained trained_model(const Bench& b, const fs::path& cache, SystemKind kind, bool kmeans) {
  const TrainConfig tc = [] {
    TrainConfig c;
    c.seed = derive_seed(kSeed, "train");
    return c;
  }();
  const DenoiserConfig mc = DenoiserConfig::desk(b.cb.size(), b.cb.num_classes());
  nlohmann::json meta = {{"key", model_key(kind, kmeans)},
                         {"train", nlohmann::json::parse(tc.to_json())},
                         {"model", nlohmann::json::parse(mc.to_json())}};
  const fs::path path = cache / (model_key(kind, kmeans) + ".ckpt");
  Trained out;
  if (fs::exists(path)) {
    try {
      auto ck = load_checkpoint(path);
      const auto stored = nlohmann::json::parse(ck.metadata_json);
      if (stored.value("key", "") == meta["key"] && stored["train"] == meta["train"] &&
          stored["model"] == meta["model"]) {
        out.model.emplace(std::move(ck.model));
        out.train_seconds = stored.value("train_seconds", 0.0);
        out.cached = true;
        return out;
      }
    } catch (const std::exception&) {
    }
  }
  const DiffusionProcess proc(kind, b.cb, b.ns, kmeans);
  TransformerDenoiser m(mc, derive_seed(kSeed, "model"));
  const auto start = Clock::now();
  train(m, b.data.train.pairs, proc, tc, [&](const LossRecord& r) {
    if (r.step % 1000 == 0)
      std::cerr << model_key(kind, kmeans) << " step " << r.step << " loss " << fmt(r.loss) << std::endl;
  });
  out.train_seconds = seconds_since(start);
  meta["train_seconds"] = out.train_seconds;
  fs::create_directories(cache);
  save_checkpoint(m, path, tc.total_steps, tc.seed, meta.dump());
  out.model.emplace(std::move(m));
  return out;
}

struct Models {
  Bench bench;
  fs::path cache;
  std::map<std::string, Trained> trained;

  Trained& get(SystemKind kind, bool kmeans = true) {
    const auto key = model_key(kind, kmeans);
    auto it = trained.find(key);
    if (it == trained.end()) it = trained.emplace(key, trained_model(bench, cache, kind, kmeans)).first;
    return it->second;
  }

  std::map<std::string, MetricsReport> reports;

  const MetricsReport& report(SystemKind kind, int steps, bool kmeans = true) {
    const auto key = model_key(kind, kmeans) + "@" + std::to_string(steps);
    auto it = reports.find(key);
    if (it != reports.end()) return it->second;
    const DiffusionProcess proc(kind, bench.cb, bench.ns, kmeans);
    SamplerConfig sc;
    sc.steps = steps;
    auto ev = evaluate_system(proc, *get(kind, kmeans).model, bench.data.test, sc, kSeed);
    std::cerr << ev.report.csv_row();
    return reports.emplace(key, ev.report).first->second;
  }
};

// ---------------------------------------------------------------- 7

Outcome ordering(Models& m) {
  const double h = m.report(SystemKind::hybrid, kDecodeSteps).meta_bleu;
  const double mu = m.report(SystemKind::multinomial, kDecodeSteps).meta_bleu;
  const double a = m.report(SystemKind::absorbing, kDecodeSteps).meta_bleu;
  double slowest = 0.0;
  for (auto kind : {SystemKind::hybrid, SystemKind::multinomial, SystemKind::absorbing})
    slowest = std::max(slowest, m.get(kind).train_seconds);
  const bool order = h > mu && mu > a;
  const bool margin = h - mu >= kMarginOverMultinomial;
  return {order && margin && slowest <= kTrainSecondsPerSystem,
          "meta_bleu@50 hybrid=" + fmt(h) + " multinomial=" + fmt(mu) + " absorbing=" + fmt(a) +
              " order=" + std::to_string(order) + " margin=" + fmt(h - mu) + " (need >=" +
              fmt(kMarginOverMultinomial) + ") slowest_train=" + fmt(slowest) + "s"};
}

// ---------------------------------------------------------------- 8

Outcome step_robustness(Models& m) {
  const double few = m.report(SystemKind::hybrid, kFewSteps).meta_bleu;
  const double full = m.report(SystemKind::hybrid, kDecodeSteps).meta_bleu;
  const double ratio = full > 0 ? few / full : 0.0;
  return {full > 0 && ratio >= kStepRobustRatio,
          "hybrid meta_bleu@5=" + fmt(few) + " @50=" + fmt(full) + " ratio=" + fmt(ratio) + " (need >=" +
              fmt(kStepRobustRatio) + ")"};
}

// ---------------------------------------------------------------- 9

Outcome intermediate(Models& m) {
  auto& model = *m.get(SystemKind::hybrid).model;
  const auto start = Clock::now();
  const DiffusionProcess proc(SystemKind::hybrid, m.bench.cb, m.bench.ns);
  SamplerConfig sc;
  sc.steps = kDecodeSteps;
  sc.track_intermediate = true;
  const auto ev = evaluate_system(proc, model, m.bench.data.test, sc, kSeed);
  std::vector<std::vector<TraceEntry>> traces;
  std::vector<UnitSequence> refs;
  for (std::size_t i = 0; i < ev.samples.size(); ++i) {
    traces.push_back(ev.samples[i].trace);
    refs.push_back(m.bench.data.test.pairs[i].target);
  }
  const auto curve = intermediate_quality_corpus(m.bench.cb, traces, refs);
  const double first = curve.front().score, last = curve.back().score;
  const int quarter = static_cast<int>(curve.size()) / 4;
  double best_early = 0.0;
  for (int i = 0; i < quarter; ++i) best_early = std::max(best_early, curve[i].score);
  const double secs = seconds_since(start);
  const bool early = last > 0 && best_early >= kEarlyFraction * last;
  return {early && last >= first && secs < kIntermediateSeconds,
          "first=" + fmt(first) + " best_in_first_" + std::to_string(quarter) + "=" + fmt(best_early) +
              " final=" + fmt(last) + " (need early >=" + fmt(kEarlyFraction * last) + ") " + fmt(secs) + "s"};
}

// --------------------------------------------------------------- 10

Outcome ablation(Models& m) {
  auto& multi = *m.get(SystemKind::multinomial).model;
  auto& plain = *m.get(SystemKind::hybrid, false).model;
  const auto start = Clock::now();
  const bool same_params = multi.parameters() == plain.parameters();

  const DiffusionProcess p_multi(SystemKind::multinomial, m.bench.cb, m.bench.ns);
  const DiffusionProcess p_plain(SystemKind::hybrid, m.bench.cb, m.bench.ns, false);
  SamplerConfig sc;
  sc.steps = kDecodeSteps;
  sc.track_intermediate = true;
  bool same_traj = true;
  for (int i = 0; i < 20; ++i) {
    const auto& src = m.bench.data.test.pairs[i].source;
    const auto a = sample_with_length_beam(p_multi, multi, src, sc, derive_seed(kSeed, static_cast<std::uint64_t>(i)));
    const auto b = sample_with_length_beam(p_plain, plain, src, sc, derive_seed(kSeed, static_cast<std::uint64_t>(i)));
    same_traj = same_traj && a.units == b.units && trace_to_jsonl(a.trace) == trace_to_jsonl(b.trace);
  }
  const double bm = m.report(SystemKind::multinomial, kDecodeSteps).meta_bleu;
  const double bp = m.report(SystemKind::hybrid, kDecodeSteps, false).meta_bleu;
  const double secs = seconds_since(start);
  return {same_params && same_traj && std::abs(bm - bp) <= kAblationBleuTol && secs < kAblationSeconds,
          "params_identical=" + std::to_string(same_params) + " trajectories_identical=" + std::to_string(same_traj) +
              " meta_bleu no-kmeans=" + fmt(bp) + " multinomial=" + fmt(bm) + " " + fmt(secs) + "s"};
}

// --------------------------------------------------------------- 11

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "unitdiff");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::map<std::string, std::string> run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  const auto p = [&](const std::string& f) { return (dir / f).string(); };
  std::vector<std::vector<std::string>> cmds = {
      {"make-codebook", "--seed", "5", "--out", p("cb.json")},
      {"gen-data", "--codebook", p("cb.json"), "--train-n", "40", "--test-n", "8", "--seed", "5", "--out-dir", p("data")},
      {"train", "--codebook", p("cb.json"), "--data", p("data/train.jsonl"), "--system", "hybrid", "--steps", "6",
       "--batch", "4", "--embed-dim", "16", "--heads", "2", "--ffn", "32", "--seed", "5", "--out", p("m.ckpt")},
      {"eval", "--codebook", p("cb.json"), "--data", p("data/test.jsonl"), "--checkpoint", p("m.ckpt"), "--steps",
       "10", "--seed", "5", "--out", p("metrics.json"), "--csv", p("table.csv")},
      {"eval", "--codebook", p("cb.json"), "--data", p("data/test.jsonl"), "--oracle-denoiser", "--system",
       "absorbing", "--steps", "5", "--seed", "5", "--out", p("oracle.json"), "--csv", p("table.csv")},
      {"curves", "knn-accuracy", "--codebook", p("cb.json"), "--data", p("data/test.jsonl"), "--schedule", "uniform",
       "--seed", "5", "--out", p("knn.csv")},
      {"curves", "intermediate", "--codebook", p("cb.json"), "--data", p("data/test.jsonl"), "--checkpoint",
       p("m.ckpt"), "--steps", "10", "--seed", "5", "--out", p("inter.csv")}};
  std::map<std::string, std::string> files;
  for (const auto& c : cmds)
    if (cli(c) != 0) throw std::runtime_error("command failed: " + c[0]);
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string body = io::read_file(e.path());
    if (e.path().extension() == ".json" && e.path().filename() != "cb.json") {
      auto j = nlohmann::ordered_json::parse(body);
      j.erase("wall_ms");
      body = j.dump();
    }
    files[fs::relative(e.path(), dir).string()] = body;
  }
  return files;
}

Outcome determinism() {
  const auto start = Clock::now();
  const auto root = fs::temp_directory_path() / "unitdiff_acceptance_cli";
  fs::remove_all(root);
  const auto a = run_pipeline(root / "a");
  const auto b = run_pipeline(root / "b");
  int differing = 0;
  std::string names;
  for (const auto& [name, body] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != body) {
      ++differing;
      names += " " + name;
    }
  }
  fs::remove_all(root);
  const double secs = seconds_since(start);
  return {differing == 0 && a.size() == b.size() && a.size() >= 10 && secs < kDeterminismSeconds,
          std::to_string(a.size()) + " files, " + std::to_string(differing) + " differ" + names + " " + fmt(secs) +
              "s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cache = "acceptance_models";
  std::vector<int> only;
  bool train_only = false;
  app.add_option("--cache", cache, "Directory for trained models");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 11));
  app.add_flag("--train-only", train_only, "Train (or load) the comparison models and exit");
  CLI11_PARSE(app, argc, argv);

  Models models{Bench{}, cache, {}, {}};
  if (train_only) {
    for (auto [kind, kmeans] : {std::pair{SystemKind::hybrid, true}, std::pair{SystemKind::multinomial, true},
                                std::pair{SystemKind::absorbing, true}, std::pair{SystemKind::hybrid, false}}) {
      const auto& t = models.get(kind, kmeans);
      std::cout << "model " << model_key(kind, kmeans) << (t.cached ? " cached" : " trained") << " train_seconds "
                << fmt(t.train_seconds) << "\n";
    }
    return 0;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"quantize round trip", round_trip},
      {"schedules", schedules},
      {"k-NN accuracy curve", knn_curve},
      {"oracle sampler", oracle_sampler},
      {"gradient check", gradient},
      {"exhaustive Bayes posterior", exhaustive_bayes},
      {"system ordering at 50 steps", [&] { return ordering(models); }},
      {"step robustness", [&] { return step_robustness(models); }},
      {"intermediate x0 quality", [&] { return intermediate(models); }},
      {"no-K-means ablation", [&] { return ablation(models); }},
      {"CLI determinism", determinism},
  };
  const std::set<int> chosen(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
