#pragma once

#include "unitdiff/types.hpp"

#include <string>
#include <vector>

namespace unitdiff {

enum class ScheduleKind { linear, uniform };

// Signal level floor of the uniform schedule; a zero alpha_bar would make
// the posterior coefficients singular.
inline constexpr double kUniformFloor = 1e-5;

// Per-step betas and cumulative signal levels alpha_bar_t = prod_{i<=t}(1 - beta_i)
// for t = 1..T. alpha_bar(0) is the level before the first step: 1 for the
// linear schedule, 1 - beta0 for the uniform schedule.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, std::vector<double> betas, std::vector<double> alpha_bars, double alpha_bar0);

  ScheduleKind kind() const { return kind_; }
  int steps() const { return static_cast<int>(betas_.size()); }

  // t in [1, T].
  double beta(int t) const;
  // t in [0, T].
  double alpha_bar(int t) const;

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  ScheduleKind kind_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
  double alpha_bar0_;
};

// beta_t interpolated linearly from beta_start (t=1) to beta_end (t=T).
NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end);

// The standard 1e-4 -> 0.02 endpoints at T=1000, scaled by 1000/T otherwise.
NoiseSchedule default_linear_schedule(int steps);

// alpha_bar_t = (1 - beta0)(1 - t/T), floored at kUniformFloor. Corruption
// starts immediately: alpha_bar(0) = 1 - beta0.
NoiseSchedule uniform_schedule(int steps, double beta0);

// Serialized form inside experiment configs:
// {"kind":"linear"|"uniform","T":int,"beta_start":f64,"beta_end":f64,"beta0":f64}
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::linear;
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double beta0 = 0.3;

  NoiseSchedule build() const;
  std::string to_json() const;
  static ScheduleSpec from_json(const std::string& text);
  // Linear endpoints follow default_linear_schedule's scaling rule.
  static ScheduleSpec defaults(ScheduleKind kind, int steps);
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// sqrt(alpha_bar_t) v0 + sqrt(1 - alpha_bar_t) noise, t in [1, T].
ContinuousSequence q_sample(const NoiseSchedule& ns, const ContinuousSequence& v0, int t,
                            const ContinuousSequence& noise);

enum class ReverseMode {
  // Gaussian posterior q(v_prev | v_t, v0_hat) across the jump t -> t_prev.
  posterior,
  // Fresh corruption of the prediction: q_sample(v0_hat, t_prev).
  renoise,
};

std::string to_string(ReverseMode mode);
ReverseMode reverse_mode_from_string(const std::string& name);

// One reverse jump t -> t_prev (0 <= t_prev < t <= T). Returns v0_hat
// exactly when t_prev = 0.
ContinuousSequence posterior_sample(const NoiseSchedule& ns, const ContinuousSequence& v_t,
                                    const ContinuousSequence& v0_hat, int t, int t_prev,
                                    const ContinuousSequence& noise, ReverseMode mode);

// `count` evenly spaced timesteps, descending from T with stride round(T/count).
std::vector<int> subset_trajectory(int steps, int count);

}  // namespace unitdiff
