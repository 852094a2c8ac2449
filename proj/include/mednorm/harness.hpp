#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mednorm/corpus.hpp"
#include "mednorm/dictionary.hpp"
#include "mednorm/folds.hpp"
#include "mednorm/simfeatures.hpp"
#include "mednorm/train.hpp"

namespace mednorm {

// One scored test mention from a cross-validation run.
struct CvPrediction {
  std::string mention_id;
  int fold = -1;
  std::string gold_code;
  std::string predicted_code;
  double probability = 0.0;  // model's probability for the predicted code
  int length = 0;            // phrase length in tokens (before truncation)
};

struct LengthBin {
  long count = 0;
  std::optional<double> accuracy;  // empty bin → no accuracy (null in JSON)
};

struct EvalReport {
  std::vector<double> per_fold_accuracy;  // folds with a non-empty test set
  double mean_accuracy = 0.0;    // arithmetic mean of per_fold_accuracy
  double pooled_accuracy = 0.0;  // hits / evaluated mentions across folds
  std::map<std::string, LengthBin> by_length;  // keys "1".."5", "6+"
  // Mismatches as (mention text, predicted code, gold code), corpus order.
  std::vector<std::array<std::string, 3>> errors;
};

struct CvResult {
  EvalReport report;
  std::vector<CvPrediction> predictions;  // corpus order
};

// Full k-fold cross-validation: for each fold, fits TF-IDF (when the
// config takes a tf-idf strategy) on that fold's train mentions only,
// trains a fresh model on the other k-1 folds, and scores the held-out
// fold by exact code match. Each fold trains with a seed derived from
// cfg.seed and the fold id, so runs are reproducible end to end.
CvResult evaluate_cv(const ModelConfig& cfg, const Corpus& corpus,
                     const ConceptDictionary& dict, const FoldPlan& plan,
                     const EmbeddingStore& store);

// Accuracy by phrase length, binned 1..5 tokens and "6+". All six bins
// are always present; empty ones carry count 0 and no accuracy.
std::map<std::string, LengthBin> report_by_length(
    const std::vector<CvPrediction>& predictions);

// One mismatch enriched with each code's first synonym term, for review.
struct ErrorEntry {
  std::string mention_id;
  std::string mention_text;
  std::string predicted_code;
  std::string predicted_term;
  std::string gold_code;
  std::string gold_term;
};

// Mismatched predictions in corpus order, truncated to limit.
std::vector<ErrorEntry> dump_errors(
    const std::vector<CvPrediction>& predictions, const Corpus& corpus,
    const ConceptDictionary& dict, std::size_t limit);

// Persisted evaluation run: the resolved request plus everything needed
// to recompute the report without retraining.
struct ReportFile {
  ModelConfig config;
  int k = 0;
  std::uint64_t seed = 0;  // fold-plan seed
  CvResult cv;
};

nlohmann::ordered_json report_file_to_json(const ReportFile& rf);
ReportFile report_file_from_json(const nlohmann::json& j);
void save_report(const ReportFile& rf, const std::string& path);
ReportFile load_report(const std::string& path);

// Recomputes the aggregate report from the per-mention predictions alone;
// used to cross-check persisted reports against their own prediction
// lists.
EvalReport recount_report(const std::vector<CvPrediction>& predictions,
                          const Corpus& corpus);

// One grid row of a sweep: the config that ran and its accuracies.
struct SweepRowResult {
  ModelConfig config;
  double mean_accuracy = 0.0;
  double pooled_accuracy = 0.0;
};

// Runs every row of a grid file {"base": config, "rows": [overrides...]}
// through evaluate_cv with the shared corpus/dictionary/plan/store.
std::vector<SweepRowResult> run_sweep(const nlohmann::json& grid,
                                      const Corpus& corpus,
                                      const ConceptDictionary& dict,
                                      const FoldPlan& plan,
                                      const EmbeddingStore& store);

// Markdown table over sweep rows: encoder / units / attention / features
// against mean and pooled accuracy (percent).
std::string render_table1(const std::vector<SweepRowResult>& rows);
// Markdown table of the length-binned counts and accuracies.
std::string render_by_length(const EvalReport& report);
// Tab-separated mismatch dump with a header row.
std::string render_errors_tsv(const std::vector<ErrorEntry>& errors);

}  // namespace mednorm
