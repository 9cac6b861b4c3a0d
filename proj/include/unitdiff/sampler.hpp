#pragma once

#include "unitdiff/denoiser.hpp"
#include "unitdiff/process.hpp"
#include "unitdiff/schedule.hpp"
#include "unitdiff/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace unitdiff {

struct SamplerConfig {
  int steps = 50;
  ReverseMode mode = ReverseMode::posterior;
  int length_beam = 5;
  bool track_intermediate = false;

  void validate(int schedule_steps) const;
};

struct TraceEntry {
  int t = 0;
  UnitSequence x0_hat;
};

struct SampleResult {
  UnitSequence units;
  Matrix final_logits;
  std::vector<TraceEntry> trace;
  int denoiser_calls = 0;
  double score = 0.0;  // mean token NLL under final_logits, unit columns only
};

// One reverse trajectory per requested length, advanced in lockstep so
// every step is a single batched denoiser call. All candidates share
// `seed`, so a candidate does not depend on which others run beside it.
std::vector<SampleResult> sample_lengths(const DiffusionProcess& proc, const ConditionedDenoiser& d,
                                         const std::vector<int>& lengths, const SamplerConfig& cfg,
                                         std::uint64_t seed);

SampleResult sample(const DiffusionProcess& proc, const Denoiser& d, const SourceSequence& source, int target_len,
                    const SamplerConfig& cfg, std::uint64_t seed);

// Candidates at the top cfg.length_beam predicted lengths; lowest score
// wins; scores equal to 1e-12 relative go to the shorter length.
SampleResult sample_with_length_beam(const DiffusionProcess& proc, const Denoiser& d, const SourceSequence& source,
                                     const SamplerConfig& cfg, std::uint64_t seed);

// Convenience for the discrete systems.
SampleResult baseline_sample(SystemKind kind, const Denoiser& d, const Codebook& cb, const NoiseSchedule& ns,
                             const SourceSequence& source, int target_len, const SamplerConfig& cfg,
                             std::uint64_t seed);

// {"t":int,"x0_hat":[int]} per line.
std::string trace_to_jsonl(const std::vector<TraceEntry>& trace);

}  // namespace unitdiff
