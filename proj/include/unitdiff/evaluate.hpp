#pragma once

#include "unitdiff/codebook.hpp"
#include "unitdiff/denoiser.hpp"
#include "unitdiff/process.hpp"
#include "unitdiff/sampler.hpp"
#include "unitdiff/synthbench.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace unitdiff {

double unit_accuracy(const UnitSequence& hyp, const UnitSequence& ref);

int levenshtein(const std::vector<int>& a, const std::vector<int>& b);

// Corpus BLEU-4 in [0, 100]. An order with no matches counts as
// 1 / (candidates + 1); an order with no candidates counts as 1. Standard
// brevity penalty; an empty hypothesis corpus scores 0.
double corpus_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs);

// corpus_bleu over meta-label run-collapsed sequences.
double meta_bleu(const Codebook& cb, const std::vector<UnitSequence>& hyps, const std::vector<UnitSequence>& refs);

struct MetricsReport {
  std::string system;
  int steps = 0;
  int beam = 0;
  std::string mode;
  double meta_bleu = 0.0;
  double unit_acc = 0.0;  // over pairs whose hypothesis has the reference length
  int length_matched = 0;
  double edit = 0.0;  // mean unit-level edit distance
  double wall_ms = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

struct Evaluation {
  MetricsReport report;
  std::vector<SampleResult> samples;
};

// Decodes every pair with sample_with_length_beam; pair i uses sub-seed i.
// Pairs are spread over worker_threads() threads and aggregated in order.
Evaluation evaluate_system(const DiffusionProcess& proc, const Denoiser& d, const Dataset& data,
                           const SamplerConfig& cfg, std::uint64_t seed);

// UNITDIFF_THREADS if set and positive, else the hardware concurrency.
int worker_threads();

// fn(i) for i in [0, n) on up to worker_threads() threads. Exceptions are
// rethrown on the caller's thread.
void parallel_for(int n, const std::function<void(int)>& fn);

enum class TraceMetric { meta_bleu, edit_distance };

struct StepScore {
  int step = 0;
  int t = 0;
  double score = 0.0;
};

// Score of every intermediate x0_hat of one trace against the reference.
std::vector<StepScore> intermediate_quality(const Codebook& cb, const std::vector<TraceEntry>& trace,
                                            const UnitSequence& reference, TraceMetric metric);

// Corpus meta-BLEU of the step-i predictions across equally long traces.
std::vector<StepScore> intermediate_quality_corpus(const Codebook& cb, const std::vector<std::vector<TraceEntry>>& traces,
                                                   const std::vector<UnitSequence>& references);

std::string step_scores_csv(const std::vector<StepScore>& scores);

}  // namespace unitdiff
