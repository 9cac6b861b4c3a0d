#include "unitdiff/baselines.hpp"

#include "unitdiff/seed.hpp"

#include <cmath>
#include <stdexcept>

namespace unitdiff {

namespace {

void check_t(const NoiseSchedule& ns, int t, const char* what) {
  if (t < 1 || t > ns.steps()) throw std::invalid_argument(std::string(what) + ": t out of range");
}

void check_jump(const NoiseSchedule& ns, int t, int t_prev, const char* what) {
  check_t(ns, t, what);
  if (t_prev < 0 || t_prev >= t) throw std::invalid_argument(std::string(what) + ": need 0 <= t_prev < t");
}

}  // namespace

UnitSequence multinomial_q_sample(const NoiseSchedule& ns, const UnitSequence& x0, int t, int num_units,
                                  std::uint64_t seed) {
  check_t(ns, t, "multinomial_q_sample");
  if (num_units < 1) throw std::invalid_argument("multinomial_q_sample: K must be positive");
  const double ab = ns.alpha_bar(t);
  Rng rng(derive_seed(seed, "multinomial_q_sample"));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> unit(0, num_units - 1);
  UnitSequence out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (x0[i] < 0 || x0[i] >= num_units) throw std::invalid_argument("multinomial_q_sample: unit out of range");
    const bool resample = coin(rng) >= ab;
    const int draw = unit(rng);
    out[i] = resample ? draw : x0[i];
  }
  return out;
}

Matrix multinomial_posterior(const NoiseSchedule& ns, const UnitSequence& x_t, const Matrix& x0_probs, int t,
                             int t_prev) {
  check_jump(ns, t, t_prev, "multinomial_reverse_step");
  const int k = static_cast<int>(x0_probs.cols());
  if (x0_probs.rows() != static_cast<Eigen::Index>(x_t.size()))
    throw std::invalid_argument("multinomial_reverse_step: x0_probs rows must match x_t length");
  for (Eigen::Index i = 0; i < x0_probs.rows(); ++i) {
    if ((x0_probs.row(i).array() < 0.0).any() || std::abs(x0_probs.row(i).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("multinomial_reverse_step: x0_probs rows must be distributions");
  }

  const double ab_t = ns.alpha_bar(t);
  const double ab_prev = t_prev == 0 ? 1.0 : ns.alpha_bar(t_prev);
  const double step_alpha = ab_t / ab_prev;
  const double uniform = 1.0 / k;

  Matrix post(x0_probs.rows(), k);
  for (Eigen::Index i = 0; i < x0_probs.rows(); ++i) {
    const int xt = x_t[static_cast<std::size_t>(i)];
    if (xt < 0 || xt >= k) throw std::invalid_argument("multinomial_reverse_step: x_t unit out of range");
    // q(x_t | x0) for every x0, and the x0-independent part of the sum.
    double shared = 0.0;
    for (int x0 = 0; x0 < k; ++x0) {
      const double z = ab_t * (x0 == xt ? 1.0 : 0.0) + (1.0 - ab_t) * uniform;
      shared += x0_probs(i, x0) / z;
    }
    for (int prev = 0; prev < k; ++prev) {
      const double forward = step_alpha * (prev == xt ? 1.0 : 0.0) + (1.0 - step_alpha) * uniform;
      const double z_prev = ab_t * (prev == xt ? 1.0 : 0.0) + (1.0 - ab_t) * uniform;
      post(i, prev) = forward * (ab_prev * x0_probs(i, prev) / z_prev + (1.0 - ab_prev) * uniform * shared);
    }
    post.row(i) /= post.row(i).sum();
  }
  return post;
}

UnitSequence multinomial_reverse_step(const NoiseSchedule& ns, const UnitSequence& x_t, const Matrix& x0_probs,
                                      int t, int t_prev, std::uint64_t seed) {
  const Matrix post = multinomial_posterior(ns, x_t, x0_probs, t, t_prev);
  UnitSequence out(x_t.size());
  if (t_prev == 0) {
    for (Eigen::Index i = 0; i < x0_probs.rows(); ++i) {
      Eigen::Index best = 0;
      x0_probs.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }
  Rng rng(derive_seed(seed, "multinomial_reverse_step"));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (Eigen::Index i = 0; i < post.rows(); ++i) {
    double r = uni(rng);
    int pick = static_cast<int>(post.cols()) - 1;
    for (int u = 0; u < post.cols(); ++u) {
      r -= post(i, u);
      if (r < 0.0) {
        pick = u;
        break;
      }
    }
    out[static_cast<std::size_t>(i)] = pick;
  }
  return out;
}

UnitSequence absorbing_q_sample(const NoiseSchedule& ns, const UnitSequence& x0, int t, int mask_id,
                                std::uint64_t seed) {
  check_t(ns, t, "absorbing_q_sample");
  const double ab = ns.alpha_bar(t);
  Rng rng(derive_seed(seed, "absorbing_q_sample"));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  UnitSequence out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (x0[i] < 0 || x0[i] >= mask_id) throw std::invalid_argument("absorbing_q_sample: unit out of range");
    out[i] = coin(rng) < ab ? x0[i] : mask_id;
  }
  return out;
}

UnitSequence absorbing_reverse_step(const NoiseSchedule& ns, const UnitSequence& x_t, const UnitSequence& x0_hat,
                                    int t, int t_prev, int mask_id, std::uint64_t seed) {
  check_jump(ns, t, t_prev, "absorbing_reverse_step");
  if (x_t.size() != x0_hat.size()) throw std::invalid_argument("absorbing_reverse_step: length mismatch");
  const double ab_t = ns.alpha_bar(t);
  const double reveal = t_prev == 0 ? 1.0 : (ns.alpha_bar(t_prev) - ab_t) / (1.0 - ab_t);
  Rng rng(derive_seed(seed, "absorbing_reverse_step"));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  UnitSequence out = x_t;
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    if (x_t[i] != mask_id) continue;
    if (x0_hat[i] < 0 || x0_hat[i] >= mask_id) throw std::invalid_argument("absorbing_reverse_step: x0_hat out of range");
    if (coin(rng) < reveal) out[i] = x0_hat[i];
  }
  return out;
}

}  // namespace unitdiff
