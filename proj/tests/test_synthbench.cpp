#include "doctest.h"

#include "unitdiff/evaluate.hpp"
#include "unitdiff/seed.hpp"
#include "unitdiff/synthbench.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

using namespace unitdiff;

TEST_SUITE("synthbench") {

TEST_CASE("generated pairs follow the class structure") {
  const auto cb = make_structured_codebook(10, 10, 16, kDefaultMetaScale, kDefaultIntraScale, 0);
  const auto data = generate_dataset(cb, 300, {8, 16}, {2, 4}, 5);
  REQUIRE(data.pairs.size() == 300);
  for (const auto& p : data.pairs) {
    CHECK(p.source.size() >= 8);
    CHECK(p.source.size() <= 16);
    for (std::size_t i = 1; i < p.source.size(); ++i) CHECK(p.source[i] != p.source[i - 1]);
    CHECK(p.target.size() >= 2 * p.source.size());
    CHECK(p.target.size() <= 4 * p.source.size());
    CHECK(meta_collapse(cb, p.target) == std::vector<int>(p.source.begin(), p.source.end()));
    for (std::size_t i = 0; i < p.target.size(); ++i) CHECK(p.meta_target[i] == cb.meta_label(p.target[i]));
  }
  CHECK(longest_target(data.pairs) <= 64);
  CHECK_THROWS_AS(generate_dataset(cb, 0, {8, 16}, {2, 4}, 5), std::invalid_argument);
  CHECK_THROWS_AS(generate_dataset(cb, 3, {8, 4}, {2, 4}, 5), std::invalid_argument);
}

TEST_CASE("benchmark splits are disjoint and reproducible") {
  const auto cb = make_structured_codebook(10, 10, 16, kDefaultMetaScale, kDefaultIntraScale, 0);
  BenchmarkSpec spec;
  spec.train_pairs = 300;
  spec.test_pairs = 50;
  const auto a = generate_benchmark(cb, spec, 2);
  const auto b = generate_benchmark(cb, spec, 2);
  CHECK(dataset_to_jsonl(a.train) == dataset_to_jsonl(b.train));
  CHECK(dataset_to_jsonl(a.test) == dataset_to_jsonl(b.test));
  std::set<std::pair<SourceSequence, UnitSequence>> seen;
  for (const auto& p : a.train.pairs) seen.insert({p.source, p.target});
  for (const auto& p : a.test.pairs) CHECK(seen.count({p.source, p.target}) == 0);
}

TEST_CASE("jsonl round trip") {
  const auto cb = make_structured_codebook(3, 4, 5, 2.0, 0.5, 1);
  const auto data = generate_dataset(cb, 20, {2, 5}, {1, 3}, 9, Split::test);
  const auto path = std::filesystem::temp_directory_path() / "unitdiff_pairs.jsonl";
  save_dataset(data, path);
  const auto back = load_dataset(cb, path, Split::test);
  CHECK(dataset_to_jsonl(back) == dataset_to_jsonl(data));
  for (std::size_t i = 0; i < data.pairs.size(); ++i) CHECK(back.pairs[i].meta_target == data.pairs[i].meta_target);
  std::filesystem::remove(path);
  CHECK_THROWS(dataset_from_jsonl(cb, "{\"source\":[0],\"target\":[99]}\n"));
  CHECK_THROWS(dataset_from_jsonl(cb, "not json\n"));
}

TEST_CASE("levenshtein") {
  const std::string kitten = "kitten", sitting = "sitting";
  CHECK(levenshtein({kitten.begin(), kitten.end()}, {sitting.begin(), sitting.end()}) == 3);
  CHECK(levenshtein({}, {1, 2, 3}) == 3);
  CHECK(levenshtein({1, 2}, {1, 2}) == 0);
  Rng rng(4);
  std::uniform_int_distribution<int> len(0, 8), sym(0, 3);
  auto draw = [&] {
    std::vector<int> v(len(rng));
    for (auto& x : v) x = sym(rng);
    return v;
  };
  for (int i = 0; i < 200; ++i) {
    const auto a = draw(), b = draw(), c = draw();
    CHECK(levenshtein(a, b) == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
  }
}

TEST_CASE("unit_accuracy") {
  CHECK(unit_accuracy({1, 2, 3, 4}, {1, 2, 0, 4}) == 0.75);
  CHECK_THROWS_AS(unit_accuracy({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("corpus_bleu") {
  CHECK(corpus_bleu({{1, 2, 3, 4, 5}}, {{1, 2, 3, 4, 5}}) == doctest::Approx(100.0));
  CHECK(corpus_bleu({{1, 2, 3, 4, 6}}, {{1, 2, 3, 4, 5}}) == doctest::Approx(66.8740304976422).epsilon(1e-12));
  CHECK(corpus_bleu({{}}, {{1, 2}}) == 0.0);
  CHECK_THROWS_AS(corpus_bleu({{1}}, {}), std::invalid_argument);

  std::vector<std::vector<int>> hyps, refs;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> h, r;
    for (int j = 0; j < 30; ++j) {
      h.push_back(j % 5);
      r.push_back(5 + (j * 7 + i) % 5);
    }
    hyps.push_back(h);
    refs.push_back(r);
  }
  CHECK(corpus_bleu(hyps, refs) < 5.0);

  // Order of sentence pairs does not matter.
  const auto cb = make_structured_codebook(10, 10, 16, kDefaultMetaScale, kDefaultIntraScale, 0);
  const auto data = generate_dataset(cb, 30, {8, 16}, {2, 4}, 3);
  std::vector<std::vector<int>> h, r;
  for (const auto& p : data.pairs) {
    UnitSequence noisy = p.target;
    noisy.erase(noisy.begin());
    h.push_back(noisy);
    r.push_back(p.target);
  }
  const double before = corpus_bleu(h, r);
  std::reverse(h.begin(), h.end());
  std::reverse(r.begin(), r.end());
  CHECK(corpus_bleu(h, r) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("meta_bleu ignores units within a class") {
  const auto cb = make_structured_codebook(3, 4, 5, 2.0, 0.5, 1);
  std::vector<int> same_class;
  for (int u = 0; u < cb.size(); ++u)
    if (cb.meta_label(u) == cb.meta_label(0)) same_class.push_back(u);
  REQUIRE(same_class.size() >= 2);
  int other = 0;
  while (cb.meta_label(other) == cb.meta_label(0)) ++other;
  const UnitSequence ref{0, 0, other, 0, other, other, 0, other, 0, other};
  UnitSequence hyp = ref;
  for (auto& u : hyp)
    if (u == 0) u = same_class[1];
  CHECK(meta_bleu(cb, {hyp}, {ref}) == doctest::Approx(100.0));
}

}
