#pragma once

#include "unitdiff/denoiser.hpp"
#include "unitdiff/nn.hpp"
#include "unitdiff/seed.hpp"
#include "unitdiff/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace unitdiff {

struct DenoiserConfig {
  int num_units = 100;     // K; the output vocabulary is K + 2 (mask, pad)
  int source_vocab = 10;   // C
  int embed_dim = 64;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_dim = 128;
  int max_len = 64;
  double dropout = 0.1;

  int vocab_size() const { return denoiser_vocab(num_units); }
  void validate() const;

  static DenoiserConfig desk(int num_units, int source_vocab);
  // 12-layer encoder, 6-layer decoder, width 512, 8 heads. Documented
  // reference only; nothing in this project trains it.
  static DenoiserConfig reference_scale(int num_units, int source_vocab);

  std::string to_json() const;
  static DenoiserConfig from_json(const std::string& text);
};

// Encoder-decoder transformer p(x0 | x_t, t, source) with a bidirectional
// (non-causal) decoder and a length head on the mean-pooled encoder states.
// Pre-norm blocks, GELU feed-forward, double precision throughout.
class TransformerDenoiser final : public Denoiser {
 public:
  struct DecoderInput {
    const UnitSequence* units = nullptr;
    int t = 1;
    int encoder = 0;                              // index into the encoded sources
    const std::vector<int>* positions = nullptr;  // defaults to 0..n-1
  };

  struct EncoderLayerCache {
    nn::NormCache norm1;
    Matrix normed1;
    nn::AttentionCache attn;
    Matrix attn_mask;
    nn::NormCache norm2;
    Matrix normed2, ffn_pre, ffn_act, ffn_mask;
  };

  struct DecoderLayerCache {
    nn::NormCache norm1;
    Matrix normed1;
    nn::AttentionCache self_attn;
    Matrix self_mask;
    nn::NormCache norm2;
    Matrix normed2;
    nn::AttentionCache cross_attn;
    Matrix cross_mask;
    nn::NormCache norm3;
    Matrix normed3, ffn_pre, ffn_act, ffn_mask;
  };

  struct EncoderPass {
    nn::Segments segs;
    std::vector<int> tokens;
    std::vector<EncoderLayerCache> layers;
    nn::NormCache final_norm;
    Matrix output;  // m x E, after the final norm
    Matrix pooled;  // B x E
  };

  struct DecoderPass {
    nn::Segments segs;
    std::vector<int> tokens;
    std::vector<int> kv_of_query;
    std::vector<DecoderLayerCache> layers;
    nn::NormCache final_norm;
    Matrix hidden;  // n x E, after the final norm
    Matrix logits;  // n x vocab
  };

  TransformerDenoiser(DenoiserConfig config, std::uint64_t init_seed);

  const DenoiserConfig& config() const { return config_; }
  const nn::ParameterLayout& layout() const { return layout_; }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  // Dropout is active iff dropout_rng is non-null and the configured rate > 0.
  EncoderPass encode(const std::vector<const SourceSequence*>& sources, Rng* dropout_rng = nullptr) const;
  DecoderPass decode(const EncoderPass& enc, const std::vector<DecoderInput>& inputs, Rng* dropout_rng = nullptr) const;
  Matrix length_logits(const EncoderPass& enc) const;  // B x max_len, column j is length j+1

  // Accumulates d(loss)/d(params) into grad given upstream gradients of the
  // decoder logits and the length logits.
  void backward(const EncoderPass& enc, const DecoderPass& dec, const Matrix& dlogits, const Matrix& dlength_logits,
                Vector& grad) const;

  // n x vocab logits for one example, dropout off.
  Matrix forward(const UnitSequence& x_t, int t, const SourceSequence& source) const;

  int num_units() const override { return config_.num_units; }
  int max_len() const override { return config_.max_len; }
  std::unique_ptr<ConditionedDenoiser> condition(const SourceSequence& source) const override;
  RowVector length_logits(const SourceSequence& source) const override;

 private:
  struct EncoderLayerSlots {
    nn::NormSlots norm1;
    nn::AttentionSlots attn;
    nn::NormSlots norm2;
    nn::FeedForwardSlots ffn;
  };
  struct DecoderLayerSlots {
    nn::NormSlots norm1;
    nn::AttentionSlots self_attn;
    nn::NormSlots norm2;
    nn::AttentionSlots cross_attn;
    nn::NormSlots norm3;
    nn::FeedForwardSlots ffn;
  };

  void feed_forward(const Matrix& normed, const nn::FeedForwardSlots& s, Matrix& pre, Matrix& act, Matrix& out) const;

  DenoiserConfig config_;
  nn::ParameterLayout layout_;
  int source_embed_ = -1;
  int target_embed_ = -1;
  std::vector<EncoderLayerSlots> enc_slots_;
  nn::NormSlots enc_norm_;
  std::vector<DecoderLayerSlots> dec_slots_;
  nn::NormSlots dec_norm_;
  nn::LinearSlots output_head_;
  nn::LinearSlots length_head_;
  Vector params_;
};

// Checkpoint: a JSON manifest at `path` ({"version","config","step","seed",
// "metadata","parameters":[{"name","offset","rows","cols"}],"blob"}) plus a
// flat little-endian float64 blob at `path` + ".bin" in declared order.
void save_checkpoint(const TransformerDenoiser& model, const std::filesystem::path& path, int step,
                     std::uint64_t seed, const std::string& metadata_json = "{}");

struct LoadedCheckpoint {
  TransformerDenoiser model;
  int step = 0;
  std::uint64_t seed = 0;
  std::string metadata_json;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unitdiff
