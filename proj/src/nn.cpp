#include "unitdiff/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace unitdiff::nn {

int ParameterLayout::add(std::string name, int rows, int cols) {
  slots_.push_back(ParamSlot{std::move(name), size_, rows, cols});
  size_ += static_cast<Eigen::Index>(rows) * cols;
  return static_cast<int>(slots_.size()) - 1;
}

ConstMap ParameterLayout::view(const Vector& flat, int slot) const {
  const auto& s = slots_[static_cast<std::size_t>(slot)];
  return ConstMap(flat.data() + s.offset, s.rows, s.cols);
}

MutMap ParameterLayout::view(Vector& flat, int slot) const {
  const auto& s = slots_[static_cast<std::size_t>(slot)];
  return MutMap(flat.data() + s.offset, s.rows, s.cols);
}

Segments Segments::from_lengths(const std::vector<int>& lengths) {
  Segments segs;
  segs.offsets.reserve(lengths.size() + 1);
  for (int n : lengths) {
    if (n < 0) throw std::invalid_argument("Segments: negative length");
    segs.offsets.push_back(segs.offsets.back() + n);
  }
  return segs;
}

LinearSlots add_linear(ParameterLayout& layout, const std::string& name, int in, int out) {
  return {layout.add(name + ".weight", in, out), layout.add(name + ".bias", 1, out)};
}

NormSlots add_norm(ParameterLayout& layout, const std::string& name, int dim) {
  return {layout.add(name + ".gain", 1, dim), layout.add(name + ".bias", 1, dim)};
}

AttentionSlots add_attention(ParameterLayout& layout, const std::string& name, int dim) {
  return {add_linear(layout, name + ".query", dim, dim), add_linear(layout, name + ".key", dim, dim),
          add_linear(layout, name + ".value", dim, dim), add_linear(layout, name + ".output", dim, dim)};
}

FeedForwardSlots add_feed_forward(ParameterLayout& layout, const std::string& name, int dim, int hidden) {
  return {add_linear(layout, name + ".in", dim, hidden), add_linear(layout, name + ".out", hidden, dim)};
}

void linear(const Matrix& x, const Vector& params, const ParameterLayout& layout, LinearSlots s, Matrix& y) {
  const auto w = layout.view(params, s.weight);
  const auto b = layout.view(params, s.bias);
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
}

void linear_backward(const Matrix& x, const Matrix& dy, const Vector& params, const ParameterLayout& layout,
                     LinearSlots s, Vector& grad, Matrix* dx) {
  auto dw = layout.view(grad, s.weight);
  auto db = layout.view(grad, s.bias);
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  if (dx) dx->noalias() = dy * layout.view(params, s.weight).transpose();
}

void layer_norm(const Matrix& x, const Vector& params, const ParameterLayout& layout, NormSlots s, Matrix& y,
                NormCache& cache) {
  const auto gain = layout.view(params, s.gain);
  const auto bias = layout.view(params, s.bias);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  cache.normalized.resize(n, d);
  cache.inv_std.resize(n);
  y.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    cache.inv_std(i) = inv;
    cache.normalized.row(i) = (x.row(i).array() - mean) * inv;
  }
  y.array() = cache.normalized.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
}

void layer_norm_backward(const NormCache& cache, const Matrix& dy, const Vector& params,
                         const ParameterLayout& layout, NormSlots s, Vector& grad, Matrix& dx) {
  const auto gain = layout.view(params, s.gain);
  auto dgain = layout.view(grad, s.gain);
  auto dbias = layout.view(grad, s.bias);
  dgain.row(0) += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Eigen::Index n = dy.rows();
  const double d = static_cast<double>(dy.cols());
  dx.resize(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVector dnorm = (dy.row(i).array() * gain.row(0).array()).matrix();
    const double mean_d = dnorm.sum() / d;
    const double mean_dx = dnorm.dot(cache.normalized.row(i)) / d;
    dx.row(i) = cache.inv_std(i) * (dnorm.array() - mean_d - cache.normalized.row(i).array() * mean_dx).matrix();
  }
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

void gelu(const Matrix& x, Matrix& y) {
  y.resize(x.rows(), x.cols());
  const double* in = x.data();
  double* out = y.data();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = in[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
}

void gelu_backward(const Matrix& x, const Matrix& dy, Matrix& dx) {
  dx.resize(x.rows(), x.cols());
  const double* in = x.data();
  const double* g = dy.data();
  double* out = dx.data();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = in[i];
    const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double deriv = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    out[i] = g[i] * deriv;
  }
}

Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
  if (rate <= 0.0) return Matrix();
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
  return mask;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.size() == 0) return;
  x.array() *= mask.array();
}

void softmax_rows(Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    const double mx = row.maxCoeff();
    row.array() = (row.array() - mx).exp();
    row /= row.sum();
  }
}

Matrix log_softmax_rows(const Matrix& logits, int cols) {
  if (cols < 1 || cols > logits.cols()) throw std::invalid_argument("log_softmax_rows: bad column count");
  Matrix out(logits.rows(), cols);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i).head(cols);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    out.row(i) = row.array() - lse;
  }
  return out;
}

void attention(const Matrix& query_in, const Matrix& kv_in, const Segments& query_segs, const Segments& kv_segs,
               const std::vector<int>& kv_of_query, int heads, const Vector& params, const ParameterLayout& layout,
               const AttentionSlots& s, Matrix& out, AttentionCache& cache) {
  linear(query_in, params, layout, s.query, cache.query);
  linear(kv_in, params, layout, s.key, cache.key);
  linear(kv_in, params, layout, s.value, cache.value);

  const int dim = static_cast<int>(cache.query.cols());
  const int head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  cache.context.setZero(query_in.rows(), dim);
  cache.probs.assign(static_cast<std::size_t>(query_segs.count()) * heads, Matrix());

  for (int seg = 0; seg < query_segs.count(); ++seg) {
    const int qb = query_segs.begin(seg), n = query_segs.length(seg);
    const int kv = kv_of_query[static_cast<std::size_t>(seg)];
    const int kb = kv_segs.begin(kv), m = kv_segs.length(kv);
    for (int h = 0; h < heads; ++h) {
      Matrix& p = cache.probs[static_cast<std::size_t>(seg) * heads + h];
      p.noalias() = scale * cache.query.block(qb, h * head_dim, n, head_dim) *
                    cache.key.block(kb, h * head_dim, m, head_dim).transpose();
      softmax_rows(p);
      cache.context.block(qb, h * head_dim, n, head_dim).noalias() = p * cache.value.block(kb, h * head_dim, m, head_dim);
    }
  }
  linear(cache.context, params, layout, s.output, out);
}

void attention_backward(const Matrix& query_in, const Matrix& kv_in, const Segments& query_segs,
                        const Segments& kv_segs, const std::vector<int>& kv_of_query, int heads,
                        const AttentionCache& cache, const Matrix& dout, const Vector& params,
                        const ParameterLayout& layout, const AttentionSlots& s, Vector& grad, Matrix& dquery_in,
                        Matrix& dkv_in) {
  Matrix dcontext;
  linear_backward(cache.context, dout, params, layout, s.output, grad, &dcontext);

  const int dim = static_cast<int>(cache.query.cols());
  const int head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix dq = Matrix::Zero(cache.query.rows(), dim);
  Matrix dk = Matrix::Zero(cache.key.rows(), dim);
  Matrix dv = Matrix::Zero(cache.value.rows(), dim);

  Matrix dp, ds;
  for (int seg = 0; seg < query_segs.count(); ++seg) {
    const int qb = query_segs.begin(seg), n = query_segs.length(seg);
    const int kv = kv_of_query[static_cast<std::size_t>(seg)];
    const int kb = kv_segs.begin(kv), m = kv_segs.length(kv);
    for (int h = 0; h < heads; ++h) {
      const Matrix& p = cache.probs[static_cast<std::size_t>(seg) * heads + h];
      const auto dctx = dcontext.block(qb, h * head_dim, n, head_dim);
      dp.noalias() = dctx * cache.value.block(kb, h * head_dim, m, head_dim).transpose();
      dv.block(kb, h * head_dim, m, head_dim).noalias() += p.transpose() * dctx;
      const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      ds = (p.array() * (dp.array().colwise() - row_dot.array())) * scale;
      dq.block(qb, h * head_dim, n, head_dim).noalias() += ds * cache.key.block(kb, h * head_dim, m, head_dim);
      dk.block(kb, h * head_dim, m, head_dim).noalias() += ds.transpose() * cache.query.block(qb, h * head_dim, n, head_dim);
    }
  }

  linear_backward(query_in, dq, params, layout, s.query, grad, &dquery_in);
  Matrix dkv_value;
  linear_backward(kv_in, dk, params, layout, s.key, grad, &dkv_in);
  linear_backward(kv_in, dv, params, layout, s.value, grad, &dkv_value);
  dkv_in += dkv_value;
}

RowVector sinusoid(double position, int dim) {
  RowVector e(dim);
  for (int i = 0; i < dim; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
    e(i) = std::sin(position * freq);
    if (i + 1 < dim) e(i + 1) = std::cos(position * freq);
  }
  return e;
}

}  // namespace unitdiff::nn
