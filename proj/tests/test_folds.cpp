#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mednorm/folds.hpp"
#include "mednorm/util.hpp"
#include "support/synthetic.hpp"

using namespace mednorm;

namespace {

using CorpusRows = std::vector<std::array<std::string, 4>>;

// Independent leakage count: per split, collect train keys into a set and
// scan the test fold. Used to cross-check the library's number.
double brute_leakage(const FoldPlan& plan, const Corpus& corpus) {
  double total = 0.0;
  int counted = 0;
  for (int j = 0; j < plan.k; ++j) {
    const auto& test = plan.folds[static_cast<std::size_t>(j)];
    if (test.empty()) continue;
    std::set<std::string> train_keys;
    for (int o = 0; o < plan.k; ++o) {
      if (o == j) continue;
      for (const auto& id : plan.folds[static_cast<std::size_t>(o)])
        train_keys.insert(dedup_key(corpus.record_by_id(id)));
    }
    int leaked = 0;
    for (const auto& id : test)
      if (train_keys.count(dedup_key(corpus.record_by_id(id)))) ++leaked;
    total += static_cast<double>(leaked) / static_cast<double>(test.size());
    ++counted;
  }
  return counted == 0 ? 0.0 : total / counted;
}

}  // namespace

TEST_SUITE("folds") {

TEST_CASE("per-code groups split near-equally") {
  const Corpus corpus = build_corpus(CorpusRows{
      {"m1", "d1", "a one", "A"},
      {"m2", "d1", "a two", "A"},
      {"m3", "d1", "a three", "A"},
      {"m4", "d1", "a four", "A"},
      {"m5", "d1", "b one", "B"},
      {"m6", "d1", "b two", "B"},
  });
  const FoldPlan plan = make_folds(corpus, 2, 5);
  for (const auto& fold : plan.folds) {
    int a = 0, b = 0;
    for (const auto& id : fold) {
      (corpus.record_by_id(id).code == "A" ? a : b) += 1;
    }
    CHECK(a == 2);
    CHECK(b == 1);
  }
}

TEST_CASE("a phrase duplicated five times survives once, in one fold") {
  CorpusRows rows;
  for (int i = 0; i < 5; ++i)
    rows.push_back({"m" + std::to_string(i), "d", "sore arm", "C1"});
  rows.push_back({"m9", "d", "other thing", "C2"});
  const Corpus corpus = build_corpus(rows);
  const FoldPlan plan = make_folds(corpus, 2, 1);
  int appearances = 0;
  for (const auto& fold : plan.folds) {
    for (const auto& id : fold) {
      if (corpus.record_by_id(id).tokens ==
          std::vector<std::string>{"sore", "arm"})
        ++appearances;
    }
  }
  CHECK(appearances == 1);
}

TEST_CASE("groups divisible by k give exactly equal folds") {
  CorpusRows rows;
  // 3 codes x 10 unique phrases = 30 mentions; every group divisible by 5.
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 10; ++i) {
      rows.push_back({"m" + std::to_string(c * 10 + i), "d",
                      "p" + std::to_string(c) + " q" + std::to_string(i),
                      "C" + std::to_string(c)});
    }
  }
  const Corpus corpus = build_corpus(rows);
  for (std::uint64_t seed : {1, 2, 3}) {
    const FoldPlan plan = make_folds(corpus, 5, seed);
    for (const auto& fold : plan.folds) CHECK(fold.size() == 6);
  }
}

TEST_CASE("k below 2 is rejected") {
  const Corpus corpus =
      build_corpus(CorpusRows{{"m1", "d1", "sore arm", "C1"}});
  CHECK_THROWS_AS(make_folds(corpus, 1, 0), Error);
  CHECK_THROWS_AS(make_folds(corpus, 0, 0), Error);
}

TEST_CASE("identical inputs give identical plans, new seeds move records") {
  const Corpus corpus = synth::random_corpus(404, 150, 10, 0.2);
  const FoldPlan a = make_folds(corpus, 5, 99);
  const FoldPlan b = make_folds(corpus, 5, 99);
  CHECK(fold_plan_to_json(a).dump() == fold_plan_to_json(b).dump());
  const FoldPlan c = make_folds(corpus, 5, 100);
  CHECK(fold_plan_to_json(a).dump() != fold_plan_to_json(c).dump());
}

TEST_CASE("every surviving mention lands in exactly one fold") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Corpus corpus =
        synth::random_corpus(seed, 80 + 17 * static_cast<int>(seed), 6, 0.3);
    const FoldPlan plan = make_folds(corpus, 4, seed);
    std::set<std::string> seen;
    std::set<std::string> expected;
    for (const auto& rec : corpus.records)
      expected.insert(dedup_key(rec));  // unique keys = survivors
    std::size_t covered = 0;
    for (const auto& fold : plan.folds) {
      for (const auto& id : fold) {
        CHECK(seen.insert(id).second);  // no id twice
        ++covered;
      }
    }
    CHECK(covered == expected.size());
  }
}

TEST_CASE("grouped construction never leaks, any corpus or seed") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int n = 10 + static_cast<int>((seed * 37) % 300);
    const Corpus corpus = synth::random_corpus(
        seed * 13 + 1, n, 2 + static_cast<int>(seed % 20),
        0.02 * static_cast<double>(seed % 30));
    const int k = seed % 2 == 0 ? 2 : 5;
    const FoldPlan plan = make_folds(corpus, k, seed);
    CHECK(leakage_rate(plan, corpus) == 0.0);
    CHECK(brute_leakage(plan, corpus) == 0.0);
  }
}

TEST_CASE("naive splitting of a fully duplicated corpus leaks everywhere") {
  // Three phrases x 20 copies; every test fold (size 12) is outnumbered
  // by each copy group, so every test record has a train twin.
  CorpusRows rows;
  for (int p = 0; p < 3; ++p) {
    for (int i = 0; i < 20; ++i) {
      rows.push_back({"m" + std::to_string(p * 20 + i), "d",
                      "phrase number " + std::to_string(p),
                      "C" + std::to_string(p)});
    }
  }
  const Corpus corpus = build_corpus(rows);
  const FoldPlan plan = make_naive_folds(corpus, 5, 3);
  CHECK(leakage_rate(plan, corpus) == 1.0);
}

TEST_CASE("naive splitting of the duplicate-heavy corpus leaks about 40%") {
  double total = 0.0;
  const int trials = 8;
  for (int t = 0; t < trials; ++t) {
    const Corpus corpus =
        synth::duplicate_heavy_corpus(7000 + static_cast<std::uint64_t>(t));
    const FoldPlan plan =
        make_naive_folds(corpus, 5, static_cast<std::uint64_t>(t));
    const double rate = leakage_rate(plan, corpus);
    CHECK(rate == doctest::Approx(brute_leakage(plan, corpus)).epsilon(1e-12));
    total += rate;
  }
  const double mean = total / trials;
  CHECK(mean > 0.35);
  CHECK(mean < 0.45);
}

TEST_CASE("naive folds cover all records and stay disjoint") {
  const Corpus corpus = synth::random_corpus(11, 100, 5, 0.4);
  const FoldPlan plan = make_naive_folds(corpus, 5, 2);
  CHECK_NOTHROW(validate_fold_plan(plan, corpus));
  std::size_t covered = 0;
  for (const auto& fold : plan.folds) covered += fold.size();
  CHECK(covered == corpus.records.size());
}

TEST_CASE("overlapping folds fail validation") {
  const Corpus corpus = build_corpus(CorpusRows{
      {"m1", "d1", "sore arm", "C1"},
      {"m2", "d1", "bad rash", "C1"},
  });
  FoldPlan plan = make_folds(corpus, 2, 0);
  plan.folds[0] = plan.folds[1];
  CHECK_THROWS_AS(validate_fold_plan(plan, corpus), Error);
}

TEST_CASE("unknown mention ids fail validation") {
  const Corpus corpus = build_corpus(CorpusRows{
      {"m1", "d1", "sore arm", "C1"},
      {"m2", "d1", "bad rash", "C1"},
  });
  FoldPlan plan = make_folds(corpus, 2, 0);
  plan.folds[0].push_back("ghost");
  CHECK_THROWS_AS(validate_fold_plan(plan, corpus), Error);
}

TEST_CASE("fold plan json round-trips exactly") {
  const Corpus corpus = synth::random_corpus(21, 60, 4, 0.1);
  const FoldPlan a = make_folds(corpus, 3, 17);
  const FoldPlan b = fold_plan_from_json(fold_plan_to_json(a));
  CHECK(fold_plan_to_json(a).dump() == fold_plan_to_json(b).dump());
  CHECK(b.k == 3);
  CHECK(b.seed == 17);
}

}  // TEST_SUITE
