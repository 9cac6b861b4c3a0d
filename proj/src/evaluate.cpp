#include "unitdiff/evaluate.hpp"

#include "unitdiff/io.hpp"
#include "unitdiff/seed.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace unitdiff {

double unit_accuracy(const UnitSequence& hyp, const UnitSequence& ref) {
  if (hyp.size() != ref.size()) throw std::invalid_argument("unit_accuracy: length mismatch");
  if (ref.empty()) throw std::invalid_argument("unit_accuracy: empty sequences");
  std::size_t same = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) same += hyp[i] == ref[i];
  return static_cast<double>(same) / static_cast<double>(ref.size());
}

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double corpus_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  if (hyps.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (hyps.size() != refs.size()) throw std::invalid_argument("corpus_bleu: corpus sizes differ");
  constexpr int kOrder = 4;
  double matches[kOrder] = {}, totals[kOrder] = {};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& h = hyps[s];
    const auto& r = refs[s];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= kOrder; ++n) {
      std::map<std::vector<int>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[std::vector<int>(r.begin() + i, r.begin() + i + n)];
      std::map<std::vector<int>, int> hyp_counts;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[std::vector<int>(h.begin() + i, h.begin() + i + n)];
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < kOrder; ++n) {
    double p;
    if (totals[n] == 0) p = 1.0;
    else if (matches[n] == 0) p = 1.0 / (totals[n] + 1.0);
    else p = matches[n] / totals[n];
    log_p += std::log(p) / kOrder;
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return 100.0 * bp * std::exp(log_p);
}

double meta_bleu(const Codebook& cb, const std::vector<UnitSequence>& hyps, const std::vector<UnitSequence>& refs) {
  if (!cb.has_meta_labels()) throw std::invalid_argument("meta_bleu: codebook has no meta labels");
  if (hyps.empty()) throw std::invalid_argument("meta_bleu: empty corpus");
  if (hyps.size() != refs.size()) throw std::invalid_argument("meta_bleu: corpus sizes differ");
  std::vector<std::vector<int>> h, r;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    h.push_back(meta_collapse(cb, hyps[i]));
    r.push_back(meta_collapse(cb, refs[i]));
  }
  return corpus_bleu(h, r);
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j = {{"system", system},   {"steps", steps},          {"beam", beam},
                              {"mode", mode},       {"meta_bleu", meta_bleu},  {"unit_acc", unit_acc},
                              {"length_matched", length_matched},              {"edit", edit},
                              {"wall_ms", wall_ms}, {"seed", seed}};
  return j.dump(2) + "\n";
}

std::string MetricsReport::csv_header() { return "system,steps,beam,mode,meta_bleu,unit_acc,length_matched,edit,seed\n"; }

std::string MetricsReport::csv_row() const {
  return system + "," + std::to_string(steps) + "," + std::to_string(beam) + "," + mode + "," +
         io::format_double(meta_bleu) + "," + io::format_double(unit_acc) + "," + std::to_string(length_matched) +
         "," + io::format_double(edit) + "," + std::to_string(seed) + "\n";
}

int worker_threads() {
  if (const char* env = std::getenv("UNITDIFF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 1024));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Evaluation evaluate_system(const DiffusionProcess& proc, const Denoiser& d, const Dataset& data,
                           const SamplerConfig& cfg, std::uint64_t seed) {
  if (data.pairs.empty()) throw std::invalid_argument("evaluate_system: empty dataset");
  cfg.validate(proc.schedule().steps());
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t root = derive_seed(seed, "eval");
  Evaluation ev;
  ev.samples.resize(data.pairs.size());
  parallel_for(static_cast<int>(data.pairs.size()), [&](int i) {
    ev.samples[static_cast<std::size_t>(i)] = sample_with_length_beam(
        proc, d, data.pairs[static_cast<std::size_t>(i)].source, cfg, derive_seed(root, static_cast<std::uint64_t>(i)));
  });

  std::vector<UnitSequence> hyps, refs;
  double edit = 0.0, acc = 0.0;
  int matched = 0;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const auto& h = ev.samples[i].units;
    const auto& r = data.pairs[i].target;
    hyps.push_back(h);
    refs.push_back(r);
    edit += levenshtein(h, r);
    if (h.size() == r.size()) {
      acc += unit_accuracy(h, r);
      ++matched;
    }
  }
  auto& rep = ev.report;
  rep.system = to_string(proc.kind()) + (proc.kind() == SystemKind::hybrid && !proc.kmeans_mapping() ? "-no-kmeans" : "");
  rep.steps = cfg.steps;
  rep.beam = cfg.length_beam;
  rep.mode = to_string(cfg.mode);
  rep.meta_bleu = meta_bleu(proc.codebook(), hyps, refs);
  rep.unit_acc = matched ? acc / matched : 0.0;
  rep.length_matched = matched;
  rep.edit = edit / static_cast<double>(data.pairs.size());
  rep.seed = seed;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return ev;
}

std::vector<StepScore> intermediate_quality(const Codebook& cb, const std::vector<TraceEntry>& trace,
                                            const UnitSequence& reference, TraceMetric metric) {
  if (trace.empty()) throw std::invalid_argument("intermediate_quality: empty trace (enable track_intermediate)");
  std::vector<StepScore> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double score = metric == TraceMetric::meta_bleu
                             ? meta_bleu(cb, {trace[i].x0_hat}, {reference})
                             : static_cast<double>(levenshtein(trace[i].x0_hat, reference));
    out.push_back({static_cast<int>(i), trace[i].t, score});
  }
  return out;
}

std::vector<StepScore> intermediate_quality_corpus(const Codebook& cb, const std::vector<std::vector<TraceEntry>>& traces,
                                                   const std::vector<UnitSequence>& references) {
  if (traces.empty() || traces.size() != references.size())
    throw std::invalid_argument("intermediate_quality_corpus: need one reference per trace");
  const std::size_t steps = traces.front().size();
  if (steps == 0) throw std::invalid_argument("intermediate_quality_corpus: empty trace (enable track_intermediate)");
  for (const auto& tr : traces)
    if (tr.size() != steps) throw std::invalid_argument("intermediate_quality_corpus: traces differ in length");
  std::vector<StepScore> out;
  for (std::size_t i = 0; i < steps; ++i) {
    std::vector<UnitSequence> hyps;
    for (const auto& tr : traces) hyps.push_back(tr[i].x0_hat);
    out.push_back({static_cast<int>(i), traces.front()[i].t, meta_bleu(cb, hyps, references)});
  }
  return out;
}

std::string step_scores_csv(const std::vector<StepScore>& scores) {
  std::string out = "step,t,score\n";
  for (const auto& s : scores)
    out += std::to_string(s.step) + "," + std::to_string(s.t) + "," + io::format_double(s.score) + "\n";
  return out;
}

}  // namespace unitdiff
