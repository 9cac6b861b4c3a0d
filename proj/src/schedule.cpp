#include "unitdiff/schedule.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unitdiff {

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::vector<double> betas, std::vector<double> alpha_bars,
                             double alpha_bar0)
    : kind_(kind), betas_(std::move(betas)), alpha_bars_(std::move(alpha_bars)), alpha_bar0_(alpha_bar0) {
  if (betas_.empty() || betas_.size() != alpha_bars_.size())
    throw std::invalid_argument("NoiseSchedule: betas and alpha_bars must be non-empty and equally long");
  double prev = alpha_bar0_;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) throw std::invalid_argument("NoiseSchedule: beta outside (0,1)");
    if (!(alpha_bars_[i] > 0.0 && alpha_bars_[i] < prev))
      throw std::invalid_argument("NoiseSchedule: alpha_bar must be positive and strictly decreasing");
    prev = alpha_bars_[i];
  }
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps()) throw std::invalid_argument("beta: t out of range");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) throw std::invalid_argument("alpha_bar: t out of range");
  return t == 0 ? alpha_bar0_ : alpha_bars_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw std::invalid_argument("linear_schedule: T must be >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(steps), alpha_bars(steps);
  double running = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta = beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
    running *= 1.0 - beta;
    betas[t - 1] = beta;
    alpha_bars[t - 1] = running;
  }
  return NoiseSchedule(ScheduleKind::linear, std::move(betas), std::move(alpha_bars), 1.0);
}

NoiseSchedule default_linear_schedule(int steps) {
  const auto spec = ScheduleSpec::defaults(ScheduleKind::linear, steps);
  return linear_schedule(steps, spec.beta_start, spec.beta_end);
}

NoiseSchedule uniform_schedule(int steps, double beta0) {
  if (steps < 2) throw std::invalid_argument("uniform_schedule: T must be >= 2");
  if (!(beta0 > 0.0 && beta0 < 1.0)) throw std::invalid_argument("uniform_schedule: beta0 must be in (0,1)");
  const double start = 1.0 - beta0;
  if (!(start / steps > kUniformFloor))
    throw std::invalid_argument("uniform_schedule: T too large, floor would flatten the schedule");
  std::vector<double> betas(steps), alpha_bars(steps);
  double prev = start;
  for (int t = 1; t <= steps; ++t) {
    const double level = std::max(start * (1.0 - static_cast<double>(t) / steps), kUniformFloor);
    betas[t - 1] = 1.0 - level / prev;
    alpha_bars[t - 1] = level;
    prev = level;
  }
  return NoiseSchedule(ScheduleKind::uniform, std::move(betas), std::move(alpha_bars), start);
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "uniform"; }

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "uniform") return ScheduleKind::uniform;
  throw std::invalid_argument("unknown schedule kind: " + name);
}

NoiseSchedule ScheduleSpec::build() const {
  return kind == ScheduleKind::linear ? linear_schedule(steps, beta_start, beta_end) : uniform_schedule(steps, beta0);
}

ScheduleSpec ScheduleSpec::defaults(ScheduleKind kind, int steps) {
  if (steps < 1) throw std::invalid_argument("ScheduleSpec: T must be positive");
  ScheduleSpec spec;
  spec.kind = kind;
  spec.steps = steps;
  spec.beta_start = 1e-4 * 1000.0 / steps;
  spec.beta_end = 0.02 * 1000.0 / steps;
  return spec;
}

std::string ScheduleSpec::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)},
                      {"T", steps},
                      {"beta_start", beta_start},
                      {"beta_end", beta_end},
                      {"beta0", beta0}};
  return j.dump();
}

ScheduleSpec ScheduleSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ScheduleSpec spec;
  spec.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  spec.steps = j.at("T").get<int>();
  spec.beta_start = j.at("beta_start").get<double>();
  spec.beta_end = j.at("beta_end").get<double>();
  spec.beta0 = j.at("beta0").get<double>();
  return spec;
}

ContinuousSequence q_sample(const NoiseSchedule& ns, const ContinuousSequence& v0, int t,
                            const ContinuousSequence& noise) {
  if (t < 1 || t > ns.steps()) throw std::invalid_argument("q_sample: t out of range");
  if (noise.rows() != v0.rows() || noise.cols() != v0.cols())
    throw std::invalid_argument("q_sample: noise shape does not match v0");
  const double ab = ns.alpha_bar(t);
  return std::sqrt(ab) * v0 + std::sqrt(1.0 - ab) * noise;
}

std::string to_string(ReverseMode mode) { return mode == ReverseMode::posterior ? "posterior" : "renoise"; }

ReverseMode reverse_mode_from_string(const std::string& name) {
  if (name == "posterior") return ReverseMode::posterior;
  if (name == "renoise") return ReverseMode::renoise;
  throw std::invalid_argument("unknown reverse mode: " + name);
}

ContinuousSequence posterior_sample(const NoiseSchedule& ns, const ContinuousSequence& v_t,
                                    const ContinuousSequence& v0_hat, int t, int t_prev,
                                    const ContinuousSequence& noise, ReverseMode mode) {
  if (t < 1 || t > ns.steps()) throw std::invalid_argument("posterior_sample: t out of range");
  if (t_prev < 0 || t_prev >= t) throw std::invalid_argument("posterior_sample: need 0 <= t_prev < t");
  if (v_t.rows() != v0_hat.rows() || v_t.cols() != v0_hat.cols())
    throw std::invalid_argument("posterior_sample: v_t and v0_hat shapes differ");
  if (t_prev == 0) return v0_hat;
  if (mode == ReverseMode::renoise) return q_sample(ns, v0_hat, t_prev, noise);

  if (noise.rows() != v_t.rows() || noise.cols() != v_t.cols())
    throw std::invalid_argument("posterior_sample: noise shape does not match v_t");
  const double ab_t = ns.alpha_bar(t);
  const double ab_prev = ns.alpha_bar(t_prev);
  const double step_alpha = ab_t / ab_prev;
  const double step_beta = 1.0 - step_alpha;
  const double coef_v0 = std::sqrt(ab_prev) * step_beta / (1.0 - ab_t);
  const double coef_vt = std::sqrt(step_alpha) * (1.0 - ab_prev) / (1.0 - ab_t);
  const double variance = step_beta * (1.0 - ab_prev) / (1.0 - ab_t);
  return coef_v0 * v0_hat + coef_vt * v_t + std::sqrt(variance) * noise;
}

std::vector<int> subset_trajectory(int steps, int count) {
  if (steps < 1) throw std::invalid_argument("subset_trajectory: T must be positive");
  if (count < 1 || count > steps) throw std::invalid_argument("subset_trajectory: need 1 <= steps <= T");
  const int stride = std::max(1, static_cast<int>(std::lround(static_cast<double>(steps) / count)));
  std::vector<int> taus(count);
  // When the rounded stride overshoots, the tail is compressed so the
  // trajectory stays strictly descending and ends at or above 1.
  for (int i = 0; i < count; ++i) taus[i] = std::max(steps - i * stride, count - i);
  return taus;
}

}  // namespace unitdiff
