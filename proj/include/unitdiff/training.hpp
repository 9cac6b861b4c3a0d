#pragma once

#include "unitdiff/denoiser.hpp"
#include "unitdiff/process.hpp"
#include "unitdiff/synthbench.hpp"
#include "unitdiff/transformer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace unitdiff {

struct TrainConfig {
  double lr = 3e-4;
  int warmup_steps = 500;
  int total_steps = 5000;
  int batch_size = 32;
  double label_smoothing = 0.2;
  double length_weight = 0.1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Linear warmup to lr, then lr * sqrt(warmup / step). step is 1-based.
double learning_rate(const TrainConfig& tc, int step);

struct LossOptions {
  double label_smoothing = 0.0;
  double length_weight = 0.1;
};

struct LossBreakdown {
  double token = 0.0;   // mean label-smoothed cross-entropy per target position
  double length = 0.0;  // mean length cross-entropy per example
  double total = 0.0;   // token + length_weight * length
};

struct CorruptedBatch {
  std::vector<int> t;
  std::vector<UnitSequence> x_t;
};

// Per example i: t ~ U{1..T} and x_t = proc.corrupt(target, t), both from
// sub-seeds of `seed` and i.
CorruptedBatch corrupt_batch(const DiffusionProcess& proc, const std::vector<SynthPair>& batch, std::uint64_t seed);

// Smoothed cross-entropy over the first K logit columns against
// q = (1 - eps) onehot + eps / K. Mask and pad columns get no gradient.
// Writes d(sum of row losses)/d(logits) when dlogits is non-null.
double smoothed_cross_entropy(const Matrix& logits, const UnitSequence& target, int num_units, double smoothing,
                              Matrix* dlogits = nullptr);

// Any denoiser; no gradients.
LossBreakdown training_loss(const Denoiser& d, const DiffusionProcess& proc, const std::vector<SynthPair>& batch,
                            std::uint64_t seed, const LossOptions& opt);

// Batched transformer loss. Adds d(total)/d(params) into *grad when given.
// Dropout is applied iff dropout_rng is non-null.
LossBreakdown training_loss(const TransformerDenoiser& model, const DiffusionProcess& proc,
                            const std::vector<SynthPair>& batch, std::uint64_t seed, const LossOptions& opt,
                            Vector* grad, Rng* dropout_rng = nullptr);

struct LossRecord {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

class Adam {
 public:
  Adam(Eigen::Index size, double beta1, double beta2, double eps);
  void step(Vector& params, const Vector& grad, double lr);

 private:
  Vector m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// Adam on shuffled mini-batches. Throws std::runtime_error on a non-finite
// loss. `progress` is called after every step.
std::vector<LossRecord> train(TransformerDenoiser& model, const std::vector<SynthPair>& data,
                              const DiffusionProcess& proc, const TrainConfig& tc,
                              const std::function<void(const LossRecord&)>& progress = {});

std::string loss_history_csv(const std::vector<LossRecord>& history);

struct GradcheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst_parameter;
};

// Central differences on `count` random parameters, dropout off.
// Relative error |a - n| / max(|a|, |n|, floor).
GradcheckResult gradcheck(TransformerDenoiser& model, const DiffusionProcess& proc,
                          const std::vector<SynthPair>& batch, double eps, int count, std::uint64_t seed,
                          const LossOptions& opt, double floor = 1e-6);

}  // namespace unitdiff
