#pragma once

#include "unitdiff/types.hpp"

#include <map>
#include <memory>
#include <vector>

namespace unitdiff {

// A denoiser bound to one source sequence: p(x0 | x_t, t, source) for any
// number of candidate x_t. Inputs are always discrete units, never vectors.
class ConditionedDenoiser {
 public:
  virtual ~ConditionedDenoiser() = default;

  // One n_i x vocab logits matrix per candidate (x_t[i], t[i]).
  virtual std::vector<Matrix> logits(const std::vector<UnitSequence>& x_t, const std::vector<int>& t) const = 0;

  Matrix logits(const UnitSequence& x_t, int t) const { return logits(std::vector<UnitSequence>{x_t}, std::vector<int>{t}).front(); }
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  // Codebook vocabulary K; logits have K + 2 columns (units, mask, pad).
  virtual int num_units() const = 0;
  virtual int max_len() const = 0;

  virtual std::unique_ptr<ConditionedDenoiser> condition(const SourceSequence& source) const = 0;

  // max_len scores; entry j is for target length j + 1.
  virtual RowVector length_logits(const SourceSequence& source) const = 0;

  // Top-`beam` target lengths by length-logit, best first; equal logits
  // rank the shorter length first.
  std::vector<int> predict_length(const SourceSequence& source, int beam) const;
};

// Argmax over the first num_units columns per row (mask and pad excluded);
// ties go to the lowest unit.
UnitSequence argmax_units(const Matrix& logits, int num_units);

// Mean over positions of -log softmax(row)[candidate_i], softmax taken over
// all columns of `logits`.
double sequence_nll(const UnitSequence& candidate, const Matrix& logits);

// Knows the reference target for every source it is asked about. Emits
// sharply peaked logits on the reference when the candidate length matches
// it and flat logits otherwise. Length logits fall off linearly with the
// distance from the reference length.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(int num_units, int max_len, std::map<SourceSequence, UnitSequence> references);

  void add(const SourceSequence& source, const UnitSequence& target);

  int num_units() const override { return num_units_; }
  int max_len() const override { return max_len_; }
  std::unique_ptr<ConditionedDenoiser> condition(const SourceSequence& source) const override;
  RowVector length_logits(const SourceSequence& source) const override;

  static constexpr double kPeak = 50.0;

 private:
  const UnitSequence& reference(const SourceSequence& source) const;

  int num_units_;
  int max_len_;
  std::map<SourceSequence, UnitSequence> references_;
};

}  // namespace unitdiff
