#include "unitdiff/transformer.hpp"

#include "unitdiff/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace unitdiff {

void DenoiserConfig::validate() const {
  if (num_units < 1 || source_vocab < 1) throw std::invalid_argument("DenoiserConfig: vocabularies must be non-empty");
  if (embed_dim < 2 || heads < 1 || embed_dim % heads != 0)
    throw std::invalid_argument("DenoiserConfig: embed_dim must be divisible by heads");
  if (enc_layers < 0 || dec_layers < 0 || ffn_dim < 1 || max_len < 1)
    throw std::invalid_argument("DenoiserConfig: bad layer sizes");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("DenoiserConfig: dropout must be in [0,1)");
}

DenoiserConfig DenoiserConfig::desk(int num_units, int source_vocab) {
  DenoiserConfig c;
  c.num_units = num_units;
  c.source_vocab = source_vocab;
  return c;
}

DenoiserConfig DenoiserConfig::reference_scale(int num_units, int source_vocab) {
  DenoiserConfig c;
  c.num_units = num_units;
  c.source_vocab = source_vocab;
  c.embed_dim = 512;
  c.heads = 8;
  c.enc_layers = 12;
  c.dec_layers = 6;
  c.ffn_dim = 2048;
  c.max_len = 1024;
  return c;
}

std::string DenoiserConfig::to_json() const {
  nlohmann::json j = {{"num_units", num_units}, {"source_vocab", source_vocab}, {"embed_dim", embed_dim},
                      {"heads", heads},         {"enc_layers", enc_layers},     {"dec_layers", dec_layers},
                      {"ffn_dim", ffn_dim},     {"max_len", max_len},           {"dropout", dropout}};
  return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DenoiserConfig c;
  c.num_units = j.at("num_units").get<int>();
  c.source_vocab = j.at("source_vocab").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

TransformerDenoiser::TransformerDenoiser(DenoiserConfig config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const int e = config_.embed_dim;
  source_embed_ = layout_.add("encoder.embed", config_.source_vocab, e);
  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    EncoderLayerSlots s;
    s.norm1 = nn::add_norm(layout_, p + ".norm1", e);
    s.attn = nn::add_attention(layout_, p + ".self_attn", e);
    s.norm2 = nn::add_norm(layout_, p + ".norm2", e);
    s.ffn = nn::add_feed_forward(layout_, p + ".ffn", e, config_.ffn_dim);
    enc_slots_.push_back(s);
  }
  enc_norm_ = nn::add_norm(layout_, "encoder.norm", e);
  target_embed_ = layout_.add("decoder.embed", config_.vocab_size(), e);
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    DecoderLayerSlots s;
    s.norm1 = nn::add_norm(layout_, p + ".norm1", e);
    s.self_attn = nn::add_attention(layout_, p + ".self_attn", e);
    s.norm2 = nn::add_norm(layout_, p + ".norm2", e);
    s.cross_attn = nn::add_attention(layout_, p + ".cross_attn", e);
    s.norm3 = nn::add_norm(layout_, p + ".norm3", e);
    s.ffn = nn::add_feed_forward(layout_, p + ".ffn", e, config_.ffn_dim);
    dec_slots_.push_back(s);
  }
  dec_norm_ = nn::add_norm(layout_, "decoder.norm", e);
  output_head_ = nn::add_linear(layout_, "output", e, config_.vocab_size());
  length_head_ = nn::add_linear(layout_, "length", e, config_.max_len);

  params_ = Vector::Zero(layout_.size());
  Rng rng(derive_seed(init_seed, "init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < layout_.slots().size(); ++i) {
    const auto& slot = layout_.slots()[i];
    auto view = layout_.view(params_, static_cast<int>(i));
    const bool is_embed = slot.name.ends_with(".embed");
    const bool is_weight = slot.name.ends_with(".weight");
    const bool is_gain = slot.name.ends_with(".gain");
    if (is_embed) {
      for (Eigen::Index k = 0; k < view.size(); ++k) view.data()[k] = normal(rng);
    } else if (is_weight) {
      const double a = std::sqrt(6.0 / (slot.rows + slot.cols));
      std::uniform_real_distribution<double> uni(-a, a);
      for (Eigen::Index k = 0; k < view.size(); ++k) view.data()[k] = uni(rng);
    } else if (is_gain) {
      view.setOnes();
    }
  }
}

void TransformerDenoiser::feed_forward(const Matrix& normed, const nn::FeedForwardSlots& s, Matrix& pre, Matrix& act,
                                       Matrix& out) const {
  nn::linear(normed, params_, layout_, s.in, pre);
  nn::gelu(pre, act);
  nn::linear(act, params_, layout_, s.out, out);
}

TransformerDenoiser::EncoderPass TransformerDenoiser::encode(const std::vector<const SourceSequence*>& sources,
                                                             Rng* dropout_rng) const {
  const int e = config_.embed_dim;
  const double rate = dropout_rng ? config_.dropout : 0.0;
  EncoderPass pass;
  std::vector<int> lengths;
  for (const auto* src : sources) {
    if (src->empty() || static_cast<int>(src->size()) > config_.max_len)
      throw std::invalid_argument("encode: source length must be in [1, max_len]");
    lengths.push_back(static_cast<int>(src->size()));
    for (int tok : *src) {
      if (tok < 0 || tok >= config_.source_vocab) throw std::invalid_argument("encode: source symbol out of range");
      pass.tokens.push_back(tok);
    }
  }
  pass.segs = nn::Segments::from_lengths(lengths);
  const int rows = pass.segs.total();

  const auto embed = layout_.view(params_, source_embed_);
  Matrix x(rows, e);
  for (int s = 0; s < pass.segs.count(); ++s)
    for (int p = 0; p < pass.segs.length(s); ++p) {
      const int r = pass.segs.begin(s) + p;
      x.row(r) = embed.row(pass.tokens[static_cast<std::size_t>(r)]) + nn::sinusoid(p, e);
    }

  std::vector<int> identity(static_cast<std::size_t>(pass.segs.count()));
  std::iota(identity.begin(), identity.end(), 0);
  pass.layers.resize(enc_slots_.size());
  Matrix sub;
  for (std::size_t l = 0; l < enc_slots_.size(); ++l) {
    auto& c = pass.layers[l];
    const auto& s = enc_slots_[l];
    nn::layer_norm(x, params_, layout_, s.norm1, c.normed1, c.norm1);
    nn::attention(c.normed1, c.normed1, pass.segs, pass.segs, identity, config_.heads, params_, layout_, s.attn, sub,
                  c.attn);
    if (rate > 0.0) c.attn_mask = nn::dropout_mask(rows, e, rate, *dropout_rng);
    nn::apply_mask(sub, c.attn_mask);
    x += sub;
    nn::layer_norm(x, params_, layout_, s.norm2, c.normed2, c.norm2);
    feed_forward(c.normed2, s.ffn, c.ffn_pre, c.ffn_act, sub);
    if (rate > 0.0) c.ffn_mask = nn::dropout_mask(rows, e, rate, *dropout_rng);
    nn::apply_mask(sub, c.ffn_mask);
    x += sub;
  }
  nn::layer_norm(x, params_, layout_, enc_norm_, pass.output, pass.final_norm);

  pass.pooled.resize(pass.segs.count(), e);
  for (int s = 0; s < pass.segs.count(); ++s)
    pass.pooled.row(s) = pass.output.middleRows(pass.segs.begin(s), pass.segs.length(s)).colwise().mean();
  return pass;
}

TransformerDenoiser::DecoderPass TransformerDenoiser::decode(const EncoderPass& enc,
                                                             const std::vector<DecoderInput>& inputs,
                                                             Rng* dropout_rng) const {
  const int e = config_.embed_dim;
  const double rate = dropout_rng ? config_.dropout : 0.0;
  DecoderPass pass;
  std::vector<int> lengths;
  for (const auto& in : inputs) {
    const auto& units = *in.units;
    if (units.empty() || static_cast<int>(units.size()) > config_.max_len)
      throw std::invalid_argument("decode: target length must be in [1, max_len]");
    if (in.encoder < 0 || in.encoder >= enc.segs.count()) throw std::invalid_argument("decode: bad encoder index");
    if (in.t < 0) throw std::invalid_argument("decode: negative timestep");
    if (in.positions && in.positions->size() != units.size())
      throw std::invalid_argument("decode: positions length differs from units");
    lengths.push_back(static_cast<int>(units.size()));
    pass.kv_of_query.push_back(in.encoder);
    for (int u : units) {
      if (u < 0 || u >= config_.vocab_size()) throw std::invalid_argument("decode: unit id out of vocabulary");
      pass.tokens.push_back(u);
    }
  }
  pass.segs = nn::Segments::from_lengths(lengths);
  const int rows = pass.segs.total();

  const auto embed = layout_.view(params_, target_embed_);
  Matrix y(rows, e);
  for (int s = 0; s < pass.segs.count(); ++s) {
    const auto& in = inputs[static_cast<std::size_t>(s)];
    const RowVector time = nn::sinusoid(in.t, e);
    for (int p = 0; p < pass.segs.length(s); ++p) {
      const int r = pass.segs.begin(s) + p;
      const int pos = in.positions ? (*in.positions)[static_cast<std::size_t>(p)] : p;
      y.row(r) = embed.row(pass.tokens[static_cast<std::size_t>(r)]) + nn::sinusoid(pos, e) + time;
    }
  }

  std::vector<int> identity(static_cast<std::size_t>(pass.segs.count()));
  std::iota(identity.begin(), identity.end(), 0);
  pass.layers.resize(dec_slots_.size());
  Matrix sub;
  for (std::size_t l = 0; l < dec_slots_.size(); ++l) {
    auto& c = pass.layers[l];
    const auto& s = dec_slots_[l];
    nn::layer_norm(y, params_, layout_, s.norm1, c.normed1, c.norm1);
    nn::attention(c.normed1, c.normed1, pass.segs, pass.segs, identity, config_.heads, params_, layout_, s.self_attn,
                  sub, c.self_attn);
    if (rate > 0.0) c.self_mask = nn::dropout_mask(rows, e, rate, *dropout_rng);
    nn::apply_mask(sub, c.self_mask);
    y += sub;
    nn::layer_norm(y, params_, layout_, s.norm2, c.normed2, c.norm2);
    nn::attention(c.normed2, enc.output, pass.segs, enc.segs, pass.kv_of_query, config_.heads, params_, layout_,
                  s.cross_attn, sub, c.cross_attn);
    if (rate > 0.0) c.cross_mask = nn::dropout_mask(rows, e, rate, *dropout_rng);
    nn::apply_mask(sub, c.cross_mask);
    y += sub;
    nn::layer_norm(y, params_, layout_, s.norm3, c.normed3, c.norm3);
    feed_forward(c.normed3, s.ffn, c.ffn_pre, c.ffn_act, sub);
    if (rate > 0.0) c.ffn_mask = nn::dropout_mask(rows, e, rate, *dropout_rng);
    nn::apply_mask(sub, c.ffn_mask);
    y += sub;
  }
  nn::layer_norm(y, params_, layout_, dec_norm_, pass.hidden, pass.final_norm);
  nn::linear(pass.hidden, params_, layout_, output_head_, pass.logits);
  return pass;
}

Matrix TransformerDenoiser::length_logits(const EncoderPass& enc) const {
  Matrix out;
  nn::linear(enc.pooled, params_, layout_, length_head_, out);
  return out;
}

void TransformerDenoiser::backward(const EncoderPass& enc, const DecoderPass& dec, const Matrix& dlogits,
                                   const Matrix& dlength_logits, Vector& grad) const {
  if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
  const int e = config_.embed_dim;

  // Decoder.
  Matrix d_hidden, dy, tmp, d_sub, d_q, d_kv;
  nn::linear_backward(dec.hidden, dlogits, params_, layout_, output_head_, grad, &d_hidden);
  nn::layer_norm_backward(dec.final_norm, d_hidden, params_, layout_, dec_norm_, grad, dy);
  Matrix d_enc_out = Matrix::Zero(enc.output.rows(), e);
  std::vector<int> identity(static_cast<std::size_t>(dec.segs.count()));
  std::iota(identity.begin(), identity.end(), 0);

  for (std::size_t li = dec_slots_.size(); li-- > 0;) {
    const auto& c = dec.layers[li];
    const auto& s = dec_slots_[li];

    d_sub = dy;
    nn::apply_mask(d_sub, c.ffn_mask);
    Matrix d_act, d_pre, d_normed;
    nn::linear_backward(c.ffn_act, d_sub, params_, layout_, s.ffn.out, grad, &d_act);
    nn::gelu_backward(c.ffn_pre, d_act, d_pre);
    nn::linear_backward(c.normed3, d_pre, params_, layout_, s.ffn.in, grad, &d_normed);
    nn::layer_norm_backward(c.norm3, d_normed, params_, layout_, s.norm3, grad, tmp);
    dy += tmp;

    d_sub = dy;
    nn::apply_mask(d_sub, c.cross_mask);
    nn::attention_backward(c.normed2, enc.output, dec.segs, enc.segs, dec.kv_of_query, config_.heads, c.cross_attn,
                           d_sub, params_, layout_, s.cross_attn, grad, d_q, d_kv);
    d_enc_out += d_kv;
    nn::layer_norm_backward(c.norm2, d_q, params_, layout_, s.norm2, grad, tmp);
    dy += tmp;

    d_sub = dy;
    nn::apply_mask(d_sub, c.self_mask);
    nn::attention_backward(c.normed1, c.normed1, dec.segs, dec.segs, identity, config_.heads, c.self_attn, d_sub,
                           params_, layout_, s.self_attn, grad, d_q, d_kv);
    d_q += d_kv;
    nn::layer_norm_backward(c.norm1, d_q, params_, layout_, s.norm1, grad, tmp);
    dy += tmp;
  }
  auto d_target_embed = layout_.view(grad, target_embed_);
  for (int r = 0; r < dec.segs.total(); ++r) d_target_embed.row(dec.tokens[static_cast<std::size_t>(r)]) += dy.row(r);

  // Length head through the mean pool.
  if (dlength_logits.size() > 0) {
    Matrix d_pooled;
    nn::linear_backward(enc.pooled, dlength_logits, params_, layout_, length_head_, grad, &d_pooled);
    for (int s = 0; s < enc.segs.count(); ++s) {
      const double inv = 1.0 / enc.segs.length(s);
      for (int p = 0; p < enc.segs.length(s); ++p) d_enc_out.row(enc.segs.begin(s) + p) += inv * d_pooled.row(s);
    }
  }

  // Encoder.
  Matrix dx;
  nn::layer_norm_backward(enc.final_norm, d_enc_out, params_, layout_, enc_norm_, grad, dx);
  std::vector<int> enc_identity(static_cast<std::size_t>(enc.segs.count()));
  std::iota(enc_identity.begin(), enc_identity.end(), 0);
  for (std::size_t li = enc_slots_.size(); li-- > 0;) {
    const auto& c = enc.layers[li];
    const auto& s = enc_slots_[li];

    d_sub = dx;
    nn::apply_mask(d_sub, c.ffn_mask);
    Matrix d_act, d_pre, d_normed;
    nn::linear_backward(c.ffn_act, d_sub, params_, layout_, s.ffn.out, grad, &d_act);
    nn::gelu_backward(c.ffn_pre, d_act, d_pre);
    nn::linear_backward(c.normed2, d_pre, params_, layout_, s.ffn.in, grad, &d_normed);
    nn::layer_norm_backward(c.norm2, d_normed, params_, layout_, s.norm2, grad, tmp);
    dx += tmp;

    d_sub = dx;
    nn::apply_mask(d_sub, c.attn_mask);
    nn::attention_backward(c.normed1, c.normed1, enc.segs, enc.segs, enc_identity, config_.heads, c.attn, d_sub,
                           params_, layout_, s.attn, grad, d_q, d_kv);
    d_q += d_kv;
    nn::layer_norm_backward(c.norm1, d_q, params_, layout_, s.norm1, grad, tmp);
    dx += tmp;
  }
  auto d_source_embed = layout_.view(grad, source_embed_);
  for (int r = 0; r < enc.segs.total(); ++r) d_source_embed.row(enc.tokens[static_cast<std::size_t>(r)]) += dx.row(r);
}

Matrix TransformerDenoiser::forward(const UnitSequence& x_t, int t, const SourceSequence& source) const {
  const auto enc = encode({&source});
  return decode(enc, {DecoderInput{&x_t, t, 0, nullptr}}).logits;
}

namespace {

class TransformerConditioned final : public ConditionedDenoiser {
 public:
  TransformerConditioned(const TransformerDenoiser& model, TransformerDenoiser::EncoderPass enc)
      : model_(model), enc_(std::move(enc)) {}

  std::vector<Matrix> logits(const std::vector<UnitSequence>& x_t, const std::vector<int>& t) const override {
    if (x_t.size() != t.size()) throw std::invalid_argument("logits: x_t and t sizes differ");
    std::vector<TransformerDenoiser::DecoderInput> inputs;
    inputs.reserve(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) inputs.push_back({&x_t[i], t[i], 0, nullptr});
    const auto pass = model_.decode(enc_, inputs);
    std::vector<Matrix> out;
    out.reserve(x_t.size());
    for (int s = 0; s < pass.segs.count(); ++s) out.push_back(pass.logits.middleRows(pass.segs.begin(s), pass.segs.length(s)));
    return out;
  }

 private:
  const TransformerDenoiser& model_;
  TransformerDenoiser::EncoderPass enc_;
};

}  // namespace

std::unique_ptr<ConditionedDenoiser> TransformerDenoiser::condition(const SourceSequence& source) const {
  return std::make_unique<TransformerConditioned>(*this, encode({&source}));
}

RowVector TransformerDenoiser::length_logits(const SourceSequence& source) const {
  return length_logits(encode({&source})).row(0);
}

namespace {

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".bin";
  return p;
}

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
  return out;
}

}  // namespace

void save_checkpoint(const TransformerDenoiser& model, const std::filesystem::path& path, int step,
                     std::uint64_t seed, const std::string& metadata_json) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& slot : model.layout().slots())
    params.push_back({{"name", slot.name}, {"offset", slot.offset}, {"rows", slot.rows}, {"cols", slot.cols}});
  nlohmann::json manifest = {{"version", 1},
                             {"config", nlohmann::json::parse(model.config().to_json())},
                             {"step", step},
                             {"seed", seed},
                             {"metadata", nlohmann::json::parse(metadata_json)},
                             {"parameters", params},
                             {"blob", blob_path(path).filename().string()},
                             {"count", model.parameters().size()}};

  const Vector& values = model.parameters();
  std::string blob(static_cast<std::size_t>(values.size()) * 8, '\0');
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(values(i)));
    std::memcpy(blob.data() + i * 8, &bits, 8);
  }
  io::write_file(blob_path(path), blob);
  io::write_file(path, manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto manifest = nlohmann::json::parse(io::read_file(path));
  if (manifest.at("version").get<int>() != 1) throw std::invalid_argument("checkpoint: unsupported version");
  const auto config = DenoiserConfig::from_json(manifest.at("config").dump());
  TransformerDenoiser model(config, 0);

  const auto& declared = manifest.at("parameters");
  const auto& slots = model.layout().slots();
  if (declared.size() != slots.size()) throw std::invalid_argument("checkpoint: parameter table mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (declared[i].at("name").get<std::string>() != slots[i].name ||
        declared[i].at("offset").get<Eigen::Index>() != slots[i].offset ||
        declared[i].at("rows").get<int>() != slots[i].rows || declared[i].at("cols").get<int>() != slots[i].cols)
      throw std::invalid_argument("checkpoint: parameter layout mismatch at " + slots[i].name);
  }

  const std::string blob = io::read_file(path.parent_path() / manifest.at("blob").get<std::string>());
  Vector& values = model.parameters();
  if (blob.size() != static_cast<std::size_t>(values.size()) * 8)
    throw std::invalid_argument("checkpoint: blob size does not match parameter count");
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, blob.data() + i * 8, 8);
    values(i) = std::bit_cast<double>(to_little_endian(bits));
  }
  return LoadedCheckpoint{std::move(model), manifest.at("step").get<int>(), manifest.at("seed").get<std::uint64_t>(),
                          manifest.at("metadata").dump()};
}

}  // namespace unitdiff
