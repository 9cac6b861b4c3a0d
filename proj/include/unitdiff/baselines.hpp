#pragma once

// Discrete corruption processes used as comparison systems: multinomial
// (uniform resampling over the K units) and absorbing (replacement by a
// dedicated mask id). Neither looks at codebook geometry.

#include "unitdiff/schedule.hpp"
#include "unitdiff/types.hpp"

#include <cstdint>

namespace unitdiff {

// Per position: with probability 1 - alpha_bar_t resample uniformly over
// [0, K), else keep. Keep probability is alpha_bar_t + (1 - alpha_bar_t)/K.
UnitSequence multinomial_q_sample(const NoiseSchedule& ns, const UnitSequence& x0, int t, int num_units,
                                  std::uint64_t seed);

// Categorical posterior over x_{t_prev}, marginalized over x0 ~ x0_probs:
//   p(x_prev = i) = sum_x0 p(x0) q(x_t | x_prev = i) q(x_prev = i | x0) / q(x_t | x0)
// with the uniform transition at step ratio alpha_bar_t / alpha_bar_{t_prev}.
// Returns argmax of x0_probs when t_prev = 0.
UnitSequence multinomial_reverse_step(const NoiseSchedule& ns, const UnitSequence& x_t, const Matrix& x0_probs,
                                      int t, int t_prev, std::uint64_t seed);

// The posterior distribution itself, one row per position.
Matrix multinomial_posterior(const NoiseSchedule& ns, const UnitSequence& x_t, const Matrix& x0_probs, int t,
                             int t_prev);

// Per position: mask_id with probability 1 - alpha_bar_t, else x0.
UnitSequence absorbing_q_sample(const NoiseSchedule& ns, const UnitSequence& x0, int t, int mask_id,
                                std::uint64_t seed);

// Unmasked positions are kept; each masked one is revealed to x0_hat with
// probability (alpha_bar_{t_prev} - alpha_bar_t) / (1 - alpha_bar_t). All
// remaining masks are revealed when t_prev = 0.
UnitSequence absorbing_reverse_step(const NoiseSchedule& ns, const UnitSequence& x_t, const UnitSequence& x0_hat,
                                    int t, int t_prev, int mask_id, std::uint64_t seed);

}  // namespace unitdiff
