#pragma once

// Layer primitives with hand-written backward passes. Activations are
// ragged batches: all sequences of a batch are stacked row-wise and a
// Segments table records where each one starts.

#include "unitdiff/seed.hpp"
#include "unitdiff/types.hpp"

#include <string>
#include <vector>

namespace unitdiff::nn {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct ParamSlot {
  std::string name;
  Eigen::Index offset = 0;
  int rows = 0;
  int cols = 0;
};

// Named rows x cols blocks laid out back to back in one flat vector, so
// optimizers, checkpoints and finite-difference checks see a single array.
class ParameterLayout {
 public:
  int add(std::string name, int rows, int cols);
  Eigen::Index size() const { return size_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }

  ConstMap view(const Vector& flat, int slot) const;
  MutMap view(Vector& flat, int slot) const;

 private:
  std::vector<ParamSlot> slots_;
  Eigen::Index size_ = 0;
};

struct Segments {
  std::vector<int> offsets{0};

  static Segments from_lengths(const std::vector<int>& lengths);
  int count() const { return static_cast<int>(offsets.size()) - 1; }
  int begin(int s) const { return offsets[s]; }
  int length(int s) const { return offsets[s + 1] - offsets[s]; }
  int total() const { return offsets.back(); }
};

struct LinearSlots {
  int weight = -1;
  int bias = -1;
};

struct NormSlots {
  int gain = -1;
  int bias = -1;
};

struct AttentionSlots {
  LinearSlots query, key, value, output;
};

struct FeedForwardSlots {
  LinearSlots in, out;
};

LinearSlots add_linear(ParameterLayout& layout, const std::string& name, int in, int out);
NormSlots add_norm(ParameterLayout& layout, const std::string& name, int dim);
AttentionSlots add_attention(ParameterLayout& layout, const std::string& name, int dim);
FeedForwardSlots add_feed_forward(ParameterLayout& layout, const std::string& name, int dim, int hidden);

// y = x W + b.
void linear(const Matrix& x, const Vector& params, const ParameterLayout& layout, LinearSlots s, Matrix& y);
// Accumulates dW, db into grad; writes dx when requested.
void linear_backward(const Matrix& x, const Matrix& dy, const Vector& params, const ParameterLayout& layout,
                     LinearSlots s, Vector& grad, Matrix* dx);

struct NormCache {
  Matrix normalized;
  Vector inv_std;
};

inline constexpr double kNormEps = 1e-5;

void layer_norm(const Matrix& x, const Vector& params, const ParameterLayout& layout, NormSlots s, Matrix& y,
                NormCache& cache);
void layer_norm_backward(const NormCache& cache, const Matrix& dy, const Vector& params,
                         const ParameterLayout& layout, NormSlots s, Vector& grad, Matrix& dx);

// tanh-approximated GELU.
void gelu(const Matrix& x, Matrix& y);
void gelu_backward(const Matrix& x, const Matrix& dy, Matrix& dx);

// Inverted dropout mask: 0 or 1/(1-rate). Empty when rate == 0.
Matrix dropout_mask(int rows, int cols, double rate, Rng& rng);
// x *= mask, a no-op for an empty mask.
void apply_mask(Matrix& x, const Matrix& mask);

void softmax_rows(Matrix& x);
// log-softmax over the leading `cols` columns of each row.
Matrix log_softmax_rows(const Matrix& logits, int cols);

struct AttentionCache {
  Matrix query, key, value;  // projected inputs
  Matrix context;            // heads concatenated, before the output projection
  std::vector<Matrix> probs;  // one per (query segment, head)
};

// Multi-head attention of each query segment over its paired key/value
// segment (kv_of_query[s]). No causal mask: every query attends to every
// key of its pair.
void attention(const Matrix& query_in, const Matrix& kv_in, const Segments& query_segs, const Segments& kv_segs,
               const std::vector<int>& kv_of_query, int heads, const Vector& params, const ParameterLayout& layout,
               const AttentionSlots& s, Matrix& out, AttentionCache& cache);

// Gradients w.r.t. both inputs. For self-attention the caller adds them.
void attention_backward(const Matrix& query_in, const Matrix& kv_in, const Segments& query_segs,
                        const Segments& kv_segs, const std::vector<int>& kv_of_query, int heads,
                        const AttentionCache& cache, const Matrix& dout, const Vector& params,
                        const ParameterLayout& layout, const AttentionSlots& s, Vector& grad, Matrix& dquery_in,
                        Matrix& dkv_in);

// Standard sinusoidal encoding of a scalar position / timestep.
RowVector sinusoid(double position, int dim);

}  // namespace unitdiff::nn
