#pragma once

// Synthetic stand-in for speech-unit translation. A source is a sequence of
// class symbols; each symbol is spoken as a run of 2-4 units drawn from that
// class in a structured codebook.

#include "unitdiff/codebook.hpp"
#include "unitdiff/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace unitdiff {

struct SynthPair {
  SourceSequence source;
  UnitSequence target;
  std::vector<int> meta_target;  // meta_label of every target unit
};

enum class Split { train, test };

std::string to_string(Split split);

struct Dataset {
  std::vector<SynthPair> pairs;
  Split split = Split::train;
  std::uint64_t seed = 0;
};

struct BenchmarkSpec {
  int train_pairs = 2000;
  int test_pairs = 200;
  std::pair<int, int> src_len{8, 16};
  std::pair<int, int> repeats{2, 4};
};

Dataset generate_dataset(const Codebook& cb, int n_pairs, std::pair<int, int> src_len_range,
                         std::pair<int, int> repeat_range, std::uint64_t seed, Split split = Split::train);

struct Benchmark {
  Dataset train;
  Dataset test;
};

// Train and test use derive_seed(seed, "train") / derive_seed(seed, "test").
// Test pairs that duplicate a training pair are redrawn.
Benchmark generate_benchmark(const Codebook& cb, const BenchmarkSpec& spec, std::uint64_t seed);

// One {"source":[..],"target":[..]} object per line.
std::string dataset_to_jsonl(const Dataset& data);
// meta_target is rebuilt from the codebook.
Dataset dataset_from_jsonl(const Codebook& cb, const std::string& text, Split split = Split::train);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const Codebook& cb, const std::filesystem::path& path, Split split = Split::train);

int longest_target(const std::vector<SynthPair>& pairs);

}  // namespace unitdiff
