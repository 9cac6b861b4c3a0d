#include "unitdiff/synthbench.hpp"

#include "unitdiff/io.hpp"
#include "unitdiff/seed.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace unitdiff {

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

namespace {

void check_range(std::pair<int, int> r, const char* what) {
  if (r.first < 1 || r.second < r.first) throw std::invalid_argument(std::string("generate_dataset: bad ") + what);
}

std::vector<std::vector<int>> class_members(const Codebook& cb) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(cb.num_classes()));
  for (int u = 0; u < cb.size(); ++u) members[static_cast<std::size_t>(cb.meta_label(u))].push_back(u);
  return members;
}

SynthPair draw_pair(const std::vector<std::vector<int>>& members, std::pair<int, int> src_len,
                    std::pair<int, int> repeats, Rng& rng) {
  const int classes = static_cast<int>(members.size());
  SynthPair pair;
  const int n = std::uniform_int_distribution<int>(src_len.first, src_len.second)(rng);
  for (int i = 0; i < n; ++i) {
    int symbol;
    if (i == 0) {
      symbol = std::uniform_int_distribution<int>(0, classes - 1)(rng);
    } else {
      // Uniform over the other classes.
      symbol = std::uniform_int_distribution<int>(0, classes - 2)(rng);
      if (symbol >= pair.source.back()) ++symbol;
    }
    pair.source.push_back(symbol);
    const auto& pool = members[static_cast<std::size_t>(symbol)];
    const int r = std::uniform_int_distribution<int>(repeats.first, repeats.second)(rng);
    for (int k = 0; k < r; ++k) {
      pair.target.push_back(pool[static_cast<std::size_t>(
          std::uniform_int_distribution<int>(0, static_cast<int>(pool.size()) - 1)(rng))]);
      pair.meta_target.push_back(symbol);
    }
  }
  return pair;
}

}  // namespace

Dataset generate_dataset(const Codebook& cb, int n_pairs, std::pair<int, int> src_len_range,
                         std::pair<int, int> repeat_range, std::uint64_t seed, Split split) {
  if (!cb.has_meta_labels()) throw std::invalid_argument("generate_dataset: codebook has no meta labels");
  if (n_pairs < 1) throw std::invalid_argument("generate_dataset: n_pairs must be positive");
  check_range(src_len_range, "src_len_range");
  check_range(repeat_range, "repeat_range");
  if (cb.num_classes() < 2 && src_len_range.second > 1)
    throw std::invalid_argument("generate_dataset: need two classes for sources longer than 1");
  const auto members = class_members(cb);
  Rng rng(seed);
  Dataset data;
  data.split = split;
  data.seed = seed;
  data.pairs.reserve(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) data.pairs.push_back(draw_pair(members, src_len_range, repeat_range, rng));
  return data;
}

Benchmark generate_benchmark(const Codebook& cb, const BenchmarkSpec& spec, std::uint64_t seed) {
  Benchmark b;
  b.train = generate_dataset(cb, spec.train_pairs, spec.src_len, spec.repeats, derive_seed(seed, "train"), Split::train);
  b.test = generate_dataset(cb, spec.test_pairs, spec.src_len, spec.repeats, derive_seed(seed, "test"), Split::test);

  std::set<std::pair<SourceSequence, UnitSequence>> seen;
  for (const auto& p : b.train.pairs) seen.emplace(p.source, p.target);
  const auto members = class_members(cb);
  Rng redraw(derive_seed(seed, "test_redraw"));
  for (auto& p : b.test.pairs) {
    int attempts = 0;
    while (seen.count({p.source, p.target})) {
      if (++attempts > 1000) throw std::runtime_error("generate_benchmark: cannot separate test from train");
      p = draw_pair(members, spec.src_len, spec.repeats, redraw);
    }
  }
  return b;
}

std::string dataset_to_jsonl(const Dataset& data) {
  std::ostringstream out;
  for (const auto& p : data.pairs) {
    out << "{\"source\":[";
    for (std::size_t i = 0; i < p.source.size(); ++i) out << (i ? "," : "") << p.source[i];
    out << "],\"target\":[";
    for (std::size_t i = 0; i < p.target.size(); ++i) out << (i ? "," : "") << p.target[i];
    out << "]}\n";
  }
  return out.str();
}

Dataset dataset_from_jsonl(const Codebook& cb, const std::string& text, Split split) {
  if (!cb.has_meta_labels()) throw std::invalid_argument("dataset_from_jsonl: codebook has no meta labels");
  Dataset data;
  data.split = split;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SynthPair p;
    try {
      const auto j = nlohmann::json::parse(line);
      p.source = j.at("source").get<SourceSequence>();
      p.target = j.at("target").get<UnitSequence>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    if (p.source.empty() || p.target.empty())
      throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": empty sequence");
    for (int s : p.source)
      if (s < 0 || s >= cb.num_classes())
        throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": source symbol out of range");
    for (int u : p.target) {
      if (u < 0 || u >= cb.size())
        throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": unit out of range");
      p.meta_target.push_back(cb.meta_label(u));
    }
    data.pairs.push_back(std::move(p));
  }
  if (data.pairs.empty()) throw std::invalid_argument("dataset is empty");
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) { io::write_file(path, dataset_to_jsonl(data)); }

Dataset load_dataset(const Codebook& cb, const std::filesystem::path& path, Split split) {
  return dataset_from_jsonl(cb, io::read_file(path), split);
}

int longest_target(const std::vector<SynthPair>& pairs) {
  int n = 0;
  for (const auto& p : pairs) n = std::max(n, static_cast<int>(p.target.size()));
  return n;
}

}  // namespace unitdiff
