#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "mednorm/util.hpp"

namespace mednorm {

// Pretrained word vectors with zero-vector OOV handling. lookup never
// fails: unknown tokens map to the all-zeros vector, which keeps phrase
// averages defined even for fully out-of-vocabulary phrases.
class EmbeddingStore {
 public:
  EmbeddingStore(int dim, Eigen::MatrixXd matrix,
                 std::unordered_map<std::string, int> vocab);

  // Convenience constructor from explicit (token, vector) pairs.
  static EmbeddingStore from_pairs(
      int dim,
      const std::vector<std::pair<std::string, std::vector<double>>>& pairs);

  int dim() const { return dim_; }
  int vocab_size() const { return static_cast<int>(matrix_.rows()); }
  bool contains(const std::string& token) const;
  // Row index of token, or -1 when OOV.
  int row_of(const std::string& token) const;

  // Stored vector for token, or the zero vector when OOV.
  Eigen::VectorXd lookup(const std::string& token) const;

  // Arithmetic mean of the per-token lookups. OOV tokens contribute zeros
  // and are counted in the denominator. Throws on an empty token list.
  Eigen::VectorXd phrase_vector(const std::vector<std::string>& tokens) const;

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const std::unordered_map<std::string, int>& vocab() const { return vocab_; }

 private:
  int dim_;
  Eigen::MatrixXd matrix_;  // vocab_size x dim
  std::unordered_map<std::string, int> vocab_;
};

// Text word-vector format: header "count dim", then one "token v1 .. vdim"
// row per word.
EmbeddingStore load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingStore& store, const std::string& path);

}  // namespace mednorm
