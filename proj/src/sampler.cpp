#include "unitdiff/sampler.hpp"

#include "unitdiff/seed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace unitdiff {

void SamplerConfig::validate(int schedule_steps) const {
  if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
  if (steps > schedule_steps) throw std::invalid_argument("SamplerConfig: steps exceeds the schedule length");
  if (length_beam < 1) throw std::invalid_argument("SamplerConfig: length_beam must be >= 1");
}

std::vector<SampleResult> sample_lengths(const DiffusionProcess& proc, const ConditionedDenoiser& d,
                                         const std::vector<int>& lengths, const SamplerConfig& cfg,
                                         std::uint64_t seed) {
  cfg.validate(proc.schedule().steps());
  if (lengths.empty()) throw std::invalid_argument("sample: no candidate lengths");
  const int k = proc.num_units();
  const auto taus = subset_trajectory(proc.schedule().steps(), cfg.steps);
  const std::uint64_t step_root = derive_seed(seed, "step");

  std::vector<DiffusionProcess::State> states;
  std::vector<SampleResult> results(lengths.size());
  for (int n : lengths) states.push_back(proc.init(n, seed));

  std::vector<UnitSequence> inputs(lengths.size());
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const int t = taus[i];
    const int t_prev = i + 1 < taus.size() ? taus[i + 1] : 0;
    for (std::size_t c = 0; c < states.size(); ++c) inputs[c] = states[c].units;
    const auto logits = d.logits(inputs, std::vector<int>(inputs.size(), t));
    const std::uint64_t step_seed = derive_seed(step_root, static_cast<std::uint64_t>(i));
    for (std::size_t c = 0; c < states.size(); ++c) {
      const UnitSequence x0_hat = argmax_units(logits[c], k);
      proc.step(states[c], logits[c], x0_hat, t, t_prev, cfg.mode, step_seed);
      auto& r = results[c];
      ++r.denoiser_calls;
      if (cfg.track_intermediate) r.trace.push_back({t, x0_hat});
      if (t_prev == 0) r.final_logits = logits[c];
    }
  }
  for (std::size_t c = 0; c < states.size(); ++c) {
    results[c].units = std::move(states[c].units);
    results[c].score = sequence_nll(results[c].units, results[c].final_logits.leftCols(k));
  }
  return results;
}

SampleResult sample(const DiffusionProcess& proc, const Denoiser& d, const SourceSequence& source, int target_len,
                    const SamplerConfig& cfg, std::uint64_t seed) {
  if (target_len < 1) throw std::invalid_argument("sample: target_len must be >= 1");
  const auto cond = d.condition(source);
  return std::move(sample_lengths(proc, *cond, {target_len}, cfg, seed).front());
}

SampleResult sample_with_length_beam(const DiffusionProcess& proc, const Denoiser& d, const SourceSequence& source,
                                     const SamplerConfig& cfg, std::uint64_t seed) {
  cfg.validate(proc.schedule().steps());
  const auto lengths = d.predict_length(source, cfg.length_beam);
  const auto cond = d.condition(source);
  auto results = sample_lengths(proc, *cond, lengths, cfg, seed);
  std::size_t best = 0;
  for (std::size_t c = 1; c < results.size(); ++c) {
    const auto& r = results[c];
    const auto& b = results[best];
    // Mean NLLs of different lengths round differently; near-equal scores tie.
    const double tol = 1e-12 * std::max(1.0, std::abs(b.score));
    if (r.score < b.score - tol || (std::abs(r.score - b.score) <= tol && r.units.size() < b.units.size())) best = c;
  }
  return std::move(results[best]);
}

SampleResult baseline_sample(SystemKind kind, const Denoiser& d, const Codebook& cb, const NoiseSchedule& ns,
                             const SourceSequence& source, int target_len, const SamplerConfig& cfg,
                             std::uint64_t seed) {
  if (kind == SystemKind::hybrid) throw std::invalid_argument("baseline_sample: hybrid is not a baseline");
  return sample(DiffusionProcess(kind, cb, ns), d, source, target_len, cfg, seed);
}

std::string trace_to_jsonl(const std::vector<TraceEntry>& trace) {
  std::ostringstream out;
  for (const auto& e : trace) {
    out << "{\"t\":" << e.t << ",\"x0_hat\":[";
    for (std::size_t i = 0; i < e.x0_hat.size(); ++i) out << (i ? "," : "") << e.x0_hat[i];
    out << "]}\n";
  }
  return out.str();
}

}  // namespace unitdiff
