#include "mednorm/folds.hpp"

#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace mednorm {

FoldPlan make_folds(const Corpus& corpus, int k, std::uint64_t seed) {
  if (k < 2) throw Error("make_folds: k must be >= 2, got " + std::to_string(k));
  if (corpus.records.empty()) throw Error("make_folds: corpus is empty");

  // 1) Deduplicate, keeping the first occurrence in corpus order.
  std::unordered_set<std::string> seen_keys;
  std::vector<const MentionRecord*> survivors;
  survivors.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) {
    if (seen_keys.insert(dedup_key(rec)).second) survivors.push_back(&rec);
  }
  if (survivors.empty()) throw Error("make_folds: corpus empty after dedup");

  // 2) Group by code, groups ordered by first occurrence of the code.
  std::vector<std::vector<const MentionRecord*>> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  for (const auto* rec : survivors) {
    auto [it, inserted] = group_of.try_emplace(rec->code, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(rec);
  }

  // 3) Shuffle each group and split it into k near-equal parts; part j of
  //    every group lands in fold j. One RNG stream, consumed in the
  //    deterministic group order above.
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.assign(static_cast<std::size_t>(k), {});
  Rng rng(seed);
  for (auto& group : groups) {
    rng.shuffle(group);
    const std::size_t n = group.size();
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t extra = n % static_cast<std::size_t>(k);
    std::size_t offset = 0;
    for (int j = 0; j < k; ++j) {
      const std::size_t part =
          base + (static_cast<std::size_t>(j) < extra ? 1 : 0);
      for (std::size_t t = 0; t < part; ++t) {
        plan.folds[static_cast<std::size_t>(j)].push_back(
            group[offset + t]->mention_id);
      }
      offset += part;
    }
  }
  return plan;
}

FoldPlan make_naive_folds(const Corpus& corpus, int k, std::uint64_t seed) {
  if (k < 2)
    throw Error("make_naive_folds: k must be >= 2, got " + std::to_string(k));
  if (corpus.records.empty()) throw Error("make_naive_folds: corpus is empty");
  std::vector<const MentionRecord*> all;
  all.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) all.push_back(&rec);
  Rng rng(seed);
  rng.shuffle(all);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.assign(static_cast<std::size_t>(k), {});
  const std::size_t n = all.size();
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t offset = 0;
  for (int j = 0; j < k; ++j) {
    const std::size_t part =
        base + (static_cast<std::size_t>(j) < extra ? 1 : 0);
    for (std::size_t t = 0; t < part; ++t) {
      plan.folds[static_cast<std::size_t>(j)].push_back(
          all[offset + t]->mention_id);
    }
    offset += part;
  }
  return plan;
}

double leakage_rate(const FoldPlan& plan, const Corpus& corpus) {
  double sum = 0.0;
  int counted_splits = 0;
  for (std::size_t test_fold = 0; test_fold < plan.folds.size(); ++test_fold) {
    if (plan.folds[test_fold].empty()) continue;
    std::unordered_set<std::string> train_keys;
    for (std::size_t j = 0; j < plan.folds.size(); ++j) {
      if (j == test_fold) continue;
      for (const auto& id : plan.folds[j]) {
        train_keys.insert(dedup_key(corpus.record_by_id(id)));
      }
    }
    std::size_t leaked = 0;
    for (const auto& id : plan.folds[test_fold]) {
      if (train_keys.count(dedup_key(corpus.record_by_id(id)))) ++leaked;
    }
    sum += static_cast<double>(leaked) /
           static_cast<double>(plan.folds[test_fold].size());
    ++counted_splits;
  }
  return counted_splits == 0 ? 0.0 : sum / counted_splits;
}

void validate_fold_plan(const FoldPlan& plan, const Corpus& corpus) {
  if (plan.k < 2) throw Error("fold plan: k must be >= 2");
  if (plan.folds.size() != static_cast<std::size_t>(plan.k))
    throw Error("fold plan: fold count does not match k");
  std::set<std::string> seen;
  for (const auto& fold : plan.folds) {
    for (const auto& id : fold) {
      if (!corpus.has_record(id))
        throw Error("fold plan: unknown mention_id '" + id + "'");
      if (!seen.insert(id).second)
        throw Error("fold plan: mention_id '" + id +
                    "' appears in more than one fold");
    }
  }
}

nlohmann::ordered_json fold_plan_to_json(const FoldPlan& plan) {
  nlohmann::ordered_json j;
  j["schema"] = "mednorm-folds-v1";
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["folds"] = plan.folds;
  return j;
}

FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  plan.k = j.at("k").get<int>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
  if (plan.k < 2) throw Error("fold plan json: k must be >= 2");
  if (plan.folds.size() != static_cast<std::size_t>(plan.k))
    throw Error("fold plan json: fold count does not match k");
  return plan;
}

void save_fold_plan(const FoldPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write fold file: " + path);
  out << fold_plan_to_json(plan).dump(2) << '\n';
}

FoldPlan load_fold_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fold file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  try {
    return fold_plan_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace mednorm
