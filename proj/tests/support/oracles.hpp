#pragma once

// Deliberately naive reference implementations used to pin the library's
// numeric behavior. Everything here recomputes from scratch with plain
// maps and loops — no sharing of code or data structures with the
// library under test.

#include <map>
#include <string>
#include <vector>

#include "mednorm/dictionary.hpp"
#include "mednorm/embeddings.hpp"

namespace mednorm::oracle {

// tf-idf fitted on a document collection; weights recomputed per query.
class BruteTfidf {
 public:
  explicit BruteTfidf(std::vector<std::vector<std::string>> documents);

  // ln((1+N)/(1+df)) + 1, df recounted by scanning every fitted document.
  double idf(const std::string& token) const;

  // Dense-by-token tf*idf vector, L2-normalized. Tokens absent from the
  // fitted collection are dropped.
  std::map<std::string, double> vectorize(
      const std::vector<std::string>& tokens) const;

  int doc_count() const { return static_cast<int>(docs_.size()); }

 private:
  std::vector<std::vector<std::string>> docs_;
};

double cosine_of_maps(const std::map<std::string, double>& a,
                      const std::map<std::string, double>& b);

// The three similarity strategies, recomputed with the brute-force
// transform. Entry c of the result corresponds to dictionary code c.
std::vector<double> tfidf_all(const BruteTfidf& model,
                              const ConceptDictionary& dict,
                              const std::vector<std::string>& mention);
std::vector<double> tfidf_max(const BruteTfidf& model,
                              const ConceptDictionary& dict,
                              const std::vector<std::string>& mention);
std::vector<double> w2v_all(const EmbeddingStore& store,
                            const ConceptDictionary& dict,
                            const std::vector<std::string>& mention);

// Elementwise mean of per-token vectors, zeros for unknown tokens.
std::vector<double> mean_vector(const EmbeddingStore& store,
                                const std::vector<std::string>& tokens);

}  // namespace mednorm::oracle
