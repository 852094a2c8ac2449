#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mednorm/dictionary.hpp"
#include "mednorm/embeddings.hpp"
#include "mednorm/util.hpp"

namespace mednorm {

enum class FeatureStrategy { TfidfAll, TfidfMax, W2vAll };

std::string to_string(FeatureStrategy s);
FeatureStrategy feature_strategy_from_string(const std::string& s);

// Sparse tf-idf vector: (column, weight) pairs sorted by column,
// L2-normalized unless empty.
using SparseVector = std::vector<std::pair<int, double>>;

// Fitted tf-idf transform. tf is the raw in-document count and
// idf(t) = ln((1+N)/(1+df(t))) + 1 with N the fitted document count;
// document vectors are tf*idf, L2-normalized.
class TfidfModel {
 public:
  // Fits on the given token-list documents. Throws if empty.
  static TfidfModel fit(
      const std::vector<std::vector<std::string>>& documents);

  // Vectorizes a token list under the fitted vocabulary; unseen tokens
  // carry no weight.
  SparseVector transform(const std::vector<std::string>& tokens) const;

  double idf_of(const std::string& token) const;  // throws if unseen
  bool has_token(const std::string& token) const;
  int vocab_size() const { return static_cast<int>(idf_.size()); }
  int doc_count() const { return doc_count_; }

 private:
  std::unordered_map<std::string, int> vocabulary_;
  std::vector<double> idf_;
  int doc_count_ = 0;
};

// Builds the tf-idf fitting collection for one train split: every code's
// concatenated document, every individual synonym term, and the train
// mention phrases. Test mentions must never be passed here.
std::vector<std::vector<std::string>> tfidf_fit_documents(
    const ConceptDictionary& dict,
    const std::vector<std::vector<std::string>>& train_mentions);

// Convenience: fit on dictionary documents plus train mentions.
TfidfModel fit_tfidf(const ConceptDictionary& dict,
                     const std::vector<std::vector<std::string>>& train_mentions);

// cos(u, v); 0 when either norm is 0. Result clamped to [-1, 1].
double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v);
double cosine_sparse(const SparseVector& u, const SparseVector& v);

// Per-code similarity vector, entry c = similarity of the mention to code
// c under one strategy. All entries in [-1, 1]; [0, 1] for the tf-idf
// strategies.
// tfidf_all: mention vs the code's concatenated synonym document.
Eigen::VectorXd tfidf_all(const TfidfModel& model,
                          const ConceptDictionary& dict,
                          const std::vector<std::string>& mention);
// tfidf_max: the largest similarity over the code's individual synonyms.
Eigen::VectorXd tfidf_max(const TfidfModel& model,
                          const ConceptDictionary& dict,
                          const std::vector<std::string>& mention);
// w2v_all: cosine of averaged word embeddings of mention and concatenated
// synonyms.
Eigen::VectorXd w2v_all(const EmbeddingStore& store,
                        const ConceptDictionary& dict,
                        const std::vector<std::string>& mention);

// Precomputes the per-code document vectors once so featurizing a corpus
// does not re-vectorize the dictionary for every mention. Produces values
// identical to the free functions above.
class SimilarityFeaturizer {
 public:
  // For the tf-idf strategies; model must be fitted for this dictionary's
  // train split.
  SimilarityFeaturizer(FeatureStrategy strategy, TfidfModel model,
                       const ConceptDictionary& dict);
  // For w2v_all.
  SimilarityFeaturizer(const EmbeddingStore& store,
                       const ConceptDictionary& dict);

  Eigen::VectorXd compute(const std::vector<std::string>& mention) const;
  FeatureStrategy strategy() const { return strategy_; }
  int num_codes() const { return num_codes_; }
  const TfidfModel* tfidf_model() const {
    return tfidf_model_ ? &*tfidf_model_ : nullptr;
  }

 private:
  FeatureStrategy strategy_;
  int num_codes_;
  std::optional<TfidfModel> tfidf_model_;
  // tfidf_all: one vector per code; tfidf_max: one per synonym with a
  // code offset table.
  std::vector<SparseVector> code_docs_;
  std::vector<std::vector<SparseVector>> synonym_docs_;
  const EmbeddingStore* store_ = nullptr;
  Eigen::MatrixXd code_phrase_vectors_;  // num_codes x dim (w2v_all)
};

// Dense row-major float64 feature matrix with a JSON header; written by
// the featurize subcommand, one file per fold split.
struct FeatureMatrix {
  std::string strategy;
  int fold = -1;
  std::string split;  // "train" or "test"
  std::vector<std::string> mention_ids;
  Eigen::MatrixXd values;  // rows x num_codes, row i belongs to mention_ids[i]
};

void save_feature_matrix(const FeatureMatrix& m, const std::string& path);
FeatureMatrix load_feature_matrix(const std::string& path);

}  // namespace mednorm
