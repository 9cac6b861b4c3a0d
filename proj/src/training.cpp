#include "unitdiff/training.hpp"

#include "unitdiff/io.hpp"
#include "unitdiff/nn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace unitdiff {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (warmup_steps < 0 || total_steps < 0 || warmup_steps > total_steps)
    throw std::invalid_argument("TrainConfig: need 0 <= warmup_steps <= total_steps");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw std::invalid_argument("TrainConfig: label_smoothing must be in [0,1)");
  if (!(length_weight >= 0.0)) throw std::invalid_argument("TrainConfig: length_weight must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0))
    throw std::invalid_argument("TrainConfig: bad Adam settings");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j = {{"lr", lr},
                      {"warmup_steps", warmup_steps},
                      {"total_steps", total_steps},
                      {"batch_size", batch_size},
                      {"label_smoothing", label_smoothing},
                      {"length_weight", length_weight},
                      {"seed", seed},
                      {"beta1", beta1},
                      {"beta2", beta2},
                      {"adam_eps", adam_eps}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.length_weight = j.value("length_weight", c.length_weight);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& tc, int step) {
  if (step < 1) throw std::invalid_argument("learning_rate: step is 1-based");
  if (tc.warmup_steps == 0) return tc.lr / std::sqrt(static_cast<double>(step));
  const double s = step, w = tc.warmup_steps;
  return tc.lr * std::min(s / w, std::sqrt(w / s));
}

CorruptedBatch corrupt_batch(const DiffusionProcess& proc, const std::vector<SynthPair>& batch, std::uint64_t seed) {
  const int steps = proc.schedule().steps();
  Rng rng(derive_seed(seed, "timesteps"));
  std::uniform_int_distribution<int> pick(1, steps);
  const std::uint64_t corrupt_seed = derive_seed(seed, "corrupt");
  CorruptedBatch out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int t = pick(rng);
    out.t.push_back(t);
    out.x_t.push_back(proc.corrupt(batch[i].target, t, derive_seed(corrupt_seed, i)));
  }
  return out;
}

double smoothed_cross_entropy(const Matrix& logits, const UnitSequence& target, int num_units, double smoothing,
                              Matrix* dlogits) {
  if (logits.rows() != static_cast<Eigen::Index>(target.size()))
    throw std::invalid_argument("smoothed_cross_entropy: rows differ from target length");
  if (num_units < 1 || num_units > logits.cols()) throw std::invalid_argument("smoothed_cross_entropy: bad K");
  const Matrix logp = nn::log_softmax_rows(logits, num_units);
  const double off = smoothing / num_units;
  const double on = 1.0 - smoothing + off;
  if (dlogits) *dlogits = Matrix::Zero(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = target[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_units) throw std::invalid_argument("smoothed_cross_entropy: target outside units");
    double row = smoothing > 0.0 ? -off * logp.row(i).sum() : 0.0;
    row -= (on - off) * logp(i, y);
    total += row;
    if (dlogits) {
      auto d = dlogits->row(i).head(num_units);
      d = logp.row(i).array().exp().matrix();
      d.array() -= off;
      d(y) -= on - off;
    }
  }
  return total;
}

namespace {

double length_cross_entropy(const RowVector& logits, int length, RowVector* dlogits) {
  if (length < 1 || length > logits.size()) throw std::invalid_argument("training_loss: target longer than max_len");
  const double mx = logits.maxCoeff();
  const RowVector shifted = logits.array() - mx;
  const double lse = std::log(shifted.array().exp().sum());
  if (dlogits) {
    *dlogits = (shifted.array() - lse).exp().matrix();
    (*dlogits)(length - 1) -= 1.0;
  }
  return lse - shifted(length - 1);
}

void check_batch(const std::vector<SynthPair>& batch) {
  if (batch.empty()) throw std::invalid_argument("training_loss: empty batch");
}

}  // namespace

LossBreakdown training_loss(const Denoiser& d, const DiffusionProcess& proc, const std::vector<SynthPair>& batch,
                            std::uint64_t seed, const LossOptions& opt) {
  check_batch(batch);
  const auto cb = corrupt_batch(proc, batch, seed);
  double token = 0.0, length = 0.0;
  std::size_t positions = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto cond = d.condition(batch[i].source);
    token += smoothed_cross_entropy(cond->logits(cb.x_t[i], cb.t[i]), batch[i].target, d.num_units(),
                                    opt.label_smoothing);
    positions += batch[i].target.size();
    length += length_cross_entropy(d.length_logits(batch[i].source), static_cast<int>(batch[i].target.size()), nullptr);
  }
  LossBreakdown out;
  out.token = token / static_cast<double>(positions);
  out.length = length / static_cast<double>(batch.size());
  out.total = out.token + opt.length_weight * out.length;
  return out;
}

LossBreakdown training_loss(const TransformerDenoiser& model, const DiffusionProcess& proc,
                            const std::vector<SynthPair>& batch, std::uint64_t seed, const LossOptions& opt,
                            Vector* grad, Rng* dropout_rng) {
  check_batch(batch);
  const auto cb = corrupt_batch(proc, batch, seed);
  const int k = model.num_units();

  std::vector<const SourceSequence*> sources;
  std::vector<TransformerDenoiser::DecoderInput> inputs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sources.push_back(&batch[i].source);
    inputs.push_back({&cb.x_t[i], cb.t[i], static_cast<int>(i), nullptr});
  }
  const auto enc = model.encode(sources, dropout_rng);
  const auto dec = model.decode(enc, inputs, dropout_rng);
  const Matrix len_logits = model.length_logits(enc);

  const int positions = dec.segs.total();
  const double batch_n = static_cast<double>(batch.size());
  Matrix dlogits(grad ? positions : 0, model.config().vocab_size());
  Matrix dlen(grad ? len_logits.rows() : 0, len_logits.cols());
  double token = 0.0, length = 0.0;
  Matrix d_seg;
  RowVector d_len;
  for (int s = 0; s < dec.segs.count(); ++s) {
    const auto& target = batch[static_cast<std::size_t>(s)].target;
    token += smoothed_cross_entropy(dec.logits.middleRows(dec.segs.begin(s), dec.segs.length(s)), target, k,
                                    opt.label_smoothing, grad ? &d_seg : nullptr);
    length += length_cross_entropy(len_logits.row(s), static_cast<int>(target.size()), grad ? &d_len : nullptr);
    if (grad) {
      dlogits.middleRows(dec.segs.begin(s), dec.segs.length(s)) = d_seg / positions;
      dlen.row(s) = d_len * (opt.length_weight / batch_n);
    }
  }
  if (grad) model.backward(enc, dec, dlogits, dlen, *grad);

  LossBreakdown out;
  out.token = token / positions;
  out.length = length / batch_n;
  out.total = out.token + opt.length_weight * out.length;
  return out;
}

Adam::Adam(Eigen::Index size, double beta1, double beta2, double eps)
    : m_(Vector::Zero(size)), v_(Vector::Zero(size)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Vector& params, const Vector& grad, double lr) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

std::vector<LossRecord> train(TransformerDenoiser& model, const std::vector<SynthPair>& data,
                              const DiffusionProcess& proc, const TrainConfig& tc,
                              const std::function<void(const LossRecord&)>& progress) {
  tc.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (proc.num_units() != model.num_units()) throw std::invalid_argument("train: codebook and model disagree on K");
  if (longest_target(data) > model.max_len()) throw std::invalid_argument("train: targets longer than max_len");

  Adam adam(model.parameters().size(), tc.beta1, tc.beta2, tc.adam_eps);
  const LossOptions opt{tc.label_smoothing, tc.length_weight};
  Rng order_rng(derive_seed(tc.seed, "batches"));
  const std::uint64_t step_root = derive_seed(tc.seed, "step");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<LossRecord> history;
  history.reserve(static_cast<std::size_t>(tc.total_steps));
  std::vector<SynthPair> batch;
  Vector grad;
  for (int step = 1; step <= tc.total_steps; ++step) {
    batch.clear();
    for (int b = 0; b < tc.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(data[order[cursor++]]);
    }
    const std::uint64_t step_seed = derive_seed(step_root, static_cast<std::uint64_t>(step));
    Rng dropout_rng(derive_seed(step_seed, "dropout"));
    grad = Vector::Zero(model.parameters().size());
    const auto loss = training_loss(model, proc, batch, step_seed, opt, &grad, &dropout_rng);
    if (!std::isfinite(loss.total) || !grad.allFinite()) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << step << " (token " << loss.token << ", length " << loss.length
          << ")";
      throw std::runtime_error(msg.str());
    }
    const double lr = learning_rate(tc, step);
    adam.step(model.parameters(), grad, lr);
    history.push_back({step, loss.total, lr});
    if (progress) progress(history.back());
  }
  return history;
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,loss,lr\n";
  for (const auto& r : history)
    out += std::to_string(r.step) + "," + io::format_double(r.loss) + "," + io::format_double(r.lr) + "\n";
  return out;
}

GradcheckResult gradcheck(TransformerDenoiser& model, const DiffusionProcess& proc,
                          const std::vector<SynthPair>& batch, double eps, int count, std::uint64_t seed,
                          const LossOptions& opt, double floor) {
  if (!(eps > 0.0) || count < 1) throw std::invalid_argument("gradcheck: need eps > 0 and count >= 1");
  const std::uint64_t loss_seed = derive_seed(seed, "loss");
  Vector grad = Vector::Zero(model.parameters().size());
  training_loss(model, proc, batch, loss_seed, opt, &grad);

  const Eigen::Index n = model.parameters().size();
  std::vector<Eigen::Index> picks(static_cast<std::size_t>(n));
  std::iota(picks.begin(), picks.end(), 0);
  Rng rng(derive_seed(seed, "picks"));
  std::shuffle(picks.begin(), picks.end(), rng);
  picks.resize(std::min<std::size_t>(picks.size(), static_cast<std::size_t>(count)));

  GradcheckResult out;
  Vector& params = model.parameters();
  for (Eigen::Index i : picks) {
    const double saved = params(i);
    params(i) = saved + eps;
    const double up = training_loss(model, proc, batch, loss_seed, opt, nullptr).total;
    params(i) = saved - eps;
    const double down = training_loss(model, proc, batch, loss_seed, opt, nullptr).total;
    params(i) = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = grad(i);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    ++out.checked;
    if (rel > out.max_rel_error || out.worst_parameter.empty()) {
      out.max_rel_error = std::max(out.max_rel_error, rel);
      for (const auto& slot : model.layout().slots())
        if (i >= slot.offset && i < slot.offset + static_cast<Eigen::Index>(slot.rows) * slot.cols)
          out.worst_parameter = slot.name + "[" + std::to_string(i - slot.offset) + "]";
    }
  }
  return out;
}

}  // namespace unitdiff
