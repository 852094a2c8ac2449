#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mednorm/corpus.hpp"

namespace mednorm {

// k disjoint mention_id sets whose union is the (deduplicated) mention
// population. Each (k-1 folds train, 1 fold test) pair is one CV split.
struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;
};

// Leakage-free fold construction: drop exact duplicates (same normalized
// phrase and code, first occurrence kept), group the survivors by code,
// shuffle each group with the seeded RNG and split it independently into
// k near-equal parts, then merge part j of every group into fold j.
// Because all copies of a phrase+code key collapse to one record before
// splitting, no key can appear on both sides of any train/test split.
// Groups smaller than k fill the lowest-index folds.
FoldPlan make_folds(const Corpus& corpus, int k, std::uint64_t seed);

// Baseline record-level shuffle split with none of the above precautions.
// Exists so the overlap a naive split introduces can be measured.
FoldPlan make_naive_folds(const Corpus& corpus, int k, std::uint64_t seed);

// Fraction of test records whose dedup_key also occurs in the
// corresponding train split, averaged over the k splits (splits with an
// empty test fold are excluded from the average). Defined for any plan
// over the corpus, so it can score both construction styles.
double leakage_rate(const FoldPlan& plan, const Corpus& corpus);

// Throws unless the folds are pairwise disjoint and every id resolves in
// the corpus.
void validate_fold_plan(const FoldPlan& plan, const Corpus& corpus);

nlohmann::ordered_json fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& j);
void save_fold_plan(const FoldPlan& plan, const std::string& path);
FoldPlan load_fold_plan(const std::string& path);

}  // namespace mednorm
