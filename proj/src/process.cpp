#include "unitdiff/process.hpp"

#include "unitdiff/baselines.hpp"
#include "unitdiff/hybrid.hpp"
#include "unitdiff/nn.hpp"
#include "unitdiff/seed.hpp"

#include <stdexcept>

namespace unitdiff {

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::hybrid: return "hybrid";
    case SystemKind::multinomial: return "multinomial";
    case SystemKind::absorbing: return "absorbing";
  }
  return "?";
}

SystemKind system_kind_from_string(const std::string& name) {
  if (name == "hybrid") return SystemKind::hybrid;
  if (name == "multinomial") return SystemKind::multinomial;
  if (name == "absorbing") return SystemKind::absorbing;
  throw std::invalid_argument("unknown system: " + name);
}

DiffusionProcess::DiffusionProcess(SystemKind kind, const Codebook& cb, const NoiseSchedule& ns, bool kmeans_mapping)
    : kind_(kind), cb_(cb), ns_(ns) {
  switch (kind) {
    case SystemKind::hybrid: kernel_ = kmeans_mapping ? Kernel::codebook_gaussian : Kernel::multinomial; break;
    case SystemKind::multinomial: kernel_ = Kernel::multinomial; break;
    case SystemKind::absorbing: kernel_ = Kernel::absorbing; break;
  }
}

UnitSequence DiffusionProcess::corrupt(const UnitSequence& x0, int t, std::uint64_t seed) const {
  switch (kernel_) {
    case Kernel::codebook_gaussian: return forward_corrupt(cb_, ns_, x0, t, seed);
    case Kernel::multinomial: return multinomial_q_sample(ns_, x0, t, cb_.size(), seed);
    case Kernel::absorbing: return absorbing_q_sample(ns_, x0, t, mask_id(cb_.size()), seed);
  }
  throw std::logic_error("corrupt: unknown kernel");
}

DiffusionProcess::State DiffusionProcess::init(int length, std::uint64_t seed) const {
  if (length < 1) throw std::invalid_argument("init: length must be positive");
  State state;
  const std::uint64_t s = derive_seed(seed, "init");
  switch (kernel_) {
    case Kernel::codebook_gaussian:
      state.vectors = standard_normal(length, cb_.dim(), s);
      state.units = quantize(cb_, state.vectors);
      break;
    case Kernel::multinomial: {
      Rng rng(s);
      std::uniform_int_distribution<int> unit(0, cb_.size() - 1);
      state.units.resize(static_cast<std::size_t>(length));
      for (auto& u : state.units) u = unit(rng);
      break;
    }
    case Kernel::absorbing: state.units.assign(static_cast<std::size_t>(length), mask_id(cb_.size())); break;
  }
  return state;
}

void DiffusionProcess::step(State& state, const Matrix& logits, const UnitSequence& x0_hat, int t, int t_prev,
                            ReverseMode mode, std::uint64_t seed) const {
  switch (kernel_) {
    case Kernel::codebook_gaussian: {
      const ContinuousSequence v0_hat = embed(cb_, x0_hat);
      const Matrix noise = t_prev == 0 ? Matrix::Zero(v0_hat.rows(), v0_hat.cols())
                                       : standard_normal(static_cast<int>(v0_hat.rows()), cb_.dim(), seed);
      state.vectors = posterior_sample(ns_, state.vectors, v0_hat, t, t_prev, noise, mode);
      state.units = quantize(cb_, state.vectors);
      break;
    }
    case Kernel::multinomial: {
      Matrix probs = logits.leftCols(cb_.size());
      nn::softmax_rows(probs);
      state.units = multinomial_reverse_step(ns_, state.units, probs, t, t_prev, seed);
      break;
    }
    case Kernel::absorbing:
      state.units = absorbing_reverse_step(ns_, state.units, x0_hat, t, t_prev, mask_id(cb_.size()), seed);
      break;
  }
}

}  // namespace unitdiff
