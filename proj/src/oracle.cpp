#include "unitdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

namespace unitdiff {

UnitSequence argmax_units(const Matrix& logits, int num_units) {
  if (num_units < 1 || num_units > logits.cols()) throw std::invalid_argument("argmax_units: bad unit count");
  UnitSequence out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int u = 1; u < num_units; ++u)
      if (logits(i, u) > logits(i, best)) best = u;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double sequence_nll(const UnitSequence& candidate, const Matrix& logits) {
  if (static_cast<Eigen::Index>(candidate.size()) != logits.rows())
    throw std::invalid_argument("sequence_nll: candidate length differs from logits rows");
  if (candidate.empty()) throw std::invalid_argument("sequence_nll: empty candidate");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int c = candidate[static_cast<std::size_t>(i)];
    if (c < 0 || c >= logits.cols()) throw std::invalid_argument("sequence_nll: token outside logits width");
    const auto row = logits.row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(c);
  }
  return total / static_cast<double>(logits.rows());
}

namespace {

class OracleConditioned final : public ConditionedDenoiser {
 public:
  OracleConditioned(const UnitSequence& reference, int vocab) : reference_(reference), vocab_(vocab) {}

  std::vector<Matrix> logits(const std::vector<UnitSequence>& x_t, const std::vector<int>& t) const override {
    if (x_t.size() != t.size()) throw std::invalid_argument("oracle: x_t and t sizes differ");
    std::vector<Matrix> out;
    out.reserve(x_t.size());
    for (const auto& x : x_t) {
      Matrix m = Matrix::Zero(static_cast<Eigen::Index>(x.size()), vocab_);
      if (x.size() == reference_.size())
        for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), reference_[i]) = OracleDenoiser::kPeak;
      out.push_back(std::move(m));
    }
    return out;
  }

 private:
  UnitSequence reference_;
  int vocab_;
};

}  // namespace

OracleDenoiser::OracleDenoiser(int num_units, int max_len, std::map<SourceSequence, UnitSequence> references)
    : num_units_(num_units), max_len_(max_len), references_(std::move(references)) {
  if (num_units < 1 || max_len < 1) throw std::invalid_argument("OracleDenoiser: bad sizes");
}

void OracleDenoiser::add(const SourceSequence& source, const UnitSequence& target) { references_[source] = target; }

const UnitSequence& OracleDenoiser::reference(const SourceSequence& source) const {
  auto it = references_.find(source);
  if (it == references_.end()) throw std::invalid_argument("OracleDenoiser: unknown source");
  return it->second;
}

std::unique_ptr<ConditionedDenoiser> OracleDenoiser::condition(const SourceSequence& source) const {
  return std::make_unique<OracleConditioned>(reference(source), denoiser_vocab(num_units_));
}

RowVector OracleDenoiser::length_logits(const SourceSequence& source) const {
  const int target = static_cast<int>(reference(source).size());
  RowVector out(max_len_);
  for (int j = 0; j < max_len_; ++j) out(j) = -kPeak * std::abs(j + 1 - target);
  return out;
}

std::vector<int> Denoiser::predict_length(const SourceSequence& source, int beam) const {
  if (beam < 1 || beam > max_len()) throw std::invalid_argument("predict_length: beam must be in [1, max_len]");
  const RowVector scores = length_logits(source);
  if (scores.size() != max_len()) throw std::logic_error("predict_length: length_logits has wrong width");
  std::vector<int> order(static_cast<std::size_t>(max_len()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  std::vector<int> lengths;
  for (int i = 0; i < beam; ++i) lengths.push_back(order[static_cast<std::size_t>(i)] + 1);
  return lengths;
}

}  // namespace unitdiff
