#include "unitdiff/hybrid.hpp"

#include "unitdiff/seed.hpp"

#include <stdexcept>

namespace unitdiff {

UnitSequence forward_corrupt(const Codebook& cb, const NoiseSchedule& ns, const UnitSequence& x0, int t,
                             std::uint64_t seed) {
  if (t < 1 || t > ns.steps()) throw std::invalid_argument("forward_corrupt: t out of range");
  const ContinuousSequence v0 = embed(cb, x0);
  const Matrix noise = standard_normal(static_cast<int>(v0.rows()), cb.dim(), derive_seed(seed, "forward_corrupt"));
  return quantize(cb, q_sample(ns, v0, t, noise));
}

std::vector<CurvePoint> knn_accuracy_curve(const Codebook& cb, const NoiseSchedule& ns,
                                           const std::vector<UnitSequence>& data, const std::vector<int>& ts,
                                           std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("knn_accuracy_curve: empty data");
  if (ts.empty()) throw std::invalid_argument("knn_accuracy_curve: no timesteps");
  std::vector<CurvePoint> curve;
  curve.reserve(ts.size());
  for (int t : ts) {
    if (t < 1 || t > ns.steps()) throw std::invalid_argument("knn_accuracy_curve: t out of range");
    std::size_t same = 0, total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto x_t = forward_corrupt(cb, ns, data[i], t, derive_seed(derive_seed(seed, static_cast<std::uint64_t>(t)), i));
      for (std::size_t p = 0; p < x_t.size(); ++p) same += x_t[p] == data[i][p];
      total += x_t.size();
    }
    if (total == 0) throw std::invalid_argument("knn_accuracy_curve: data has no positions");
    curve.push_back({t, static_cast<double>(same) / static_cast<double>(total)});
  }
  return curve;
}

}  // namespace unitdiff
