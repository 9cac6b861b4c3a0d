#pragma once

#include "unitdiff/codebook.hpp"
#include "unitdiff/schedule.hpp"
#include "unitdiff/types.hpp"

#include <cstdint>
#include <string>

namespace unitdiff {

enum class SystemKind { hybrid, multinomial, absorbing };

std::string to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

// A complete diffusion system: how targets are corrupted for training and
// how a reverse trajectory is initialized and advanced at sampling time.
//
// hybrid corrupts in codebook space (embed -> Gaussian -> quantize) and
// carries a continuous state through the reverse pass. With the K-means
// mapping disabled it runs the multinomial kernels unchanged, which is the
// "without K-means mapping" ablation.
class DiffusionProcess {
 public:
  enum class Kernel { codebook_gaussian, multinomial, absorbing };

  struct State {
    UnitSequence units;
    ContinuousSequence vectors;  // codebook_gaussian only
  };

  DiffusionProcess(SystemKind kind, const Codebook& cb, const NoiseSchedule& ns, bool kmeans_mapping = true);

  SystemKind kind() const { return kind_; }
  Kernel kernel() const { return kernel_; }
  bool kmeans_mapping() const { return kernel_ == Kernel::codebook_gaussian; }
  const Codebook& codebook() const { return cb_; }
  const NoiseSchedule& schedule() const { return ns_; }
  int num_units() const { return cb_.size(); }

  UnitSequence corrupt(const UnitSequence& x0, int t, std::uint64_t seed) const;

  // x_T for a sequence of `length` positions.
  State init(int length, std::uint64_t seed) const;

  // Advance t -> t_prev given the denoiser's logits (n x vocab) and their
  // unit argmax x0_hat.
  void step(State& state, const Matrix& logits, const UnitSequence& x0_hat, int t, int t_prev, ReverseMode mode,
            std::uint64_t seed) const;

 private:
  SystemKind kind_;
  Kernel kernel_;
  Codebook cb_;
  NoiseSchedule ns_;
};

}  // namespace unitdiff
