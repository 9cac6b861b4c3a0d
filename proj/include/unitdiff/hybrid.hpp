#pragma once

// Gaussian corruption in codebook space, read back as units:
// x_t = quantize(q_sample(embed(x0), t, noise)).

#include "unitdiff/codebook.hpp"
#include "unitdiff/schedule.hpp"
#include "unitdiff/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace unitdiff {

UnitSequence forward_corrupt(const Codebook& cb, const NoiseSchedule& ns, const UnitSequence& x0, int t,
                             std::uint64_t seed);

struct CurvePoint {
  int t = 0;
  double value = 0.0;
};

// Fraction of positions left unchanged by forward_corrupt at each t.
std::vector<CurvePoint> knn_accuracy_curve(const Codebook& cb, const NoiseSchedule& ns,
                                           const std::vector<UnitSequence>& data, const std::vector<int>& ts,
                                           std::uint64_t seed);

}  // namespace unitdiff
