#include "mednorm/embeddings.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mednorm {

EmbeddingStore::EmbeddingStore(int dim, Eigen::MatrixXd matrix,
                               std::unordered_map<std::string, int> vocab)
    : dim_(dim), matrix_(std::move(matrix)), vocab_(std::move(vocab)) {
  if (dim_ <= 0) throw Error("embedding dim must be positive");
  if (matrix_.cols() != dim_)
    throw Error("embedding matrix has wrong column count");
  if (!matrix_.allFinite())
    throw Error("embedding matrix contains non-finite values");
  for (const auto& [token, row] : vocab_) {
    if (row < 0 || row >= matrix_.rows())
      throw Error("embedding vocab row out of range for token '" + token +
                  "'");
  }
}

EmbeddingStore EmbeddingStore::from_pairs(
    int dim,
    const std::vector<std::pair<std::string, std::vector<double>>>& pairs) {
  Eigen::MatrixXd matrix(static_cast<Eigen::Index>(pairs.size()), dim);
  std::unordered_map<std::string, int> vocab;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [token, values] = pairs[i];
    if (static_cast<int>(values.size()) != dim)
      throw Error("embedding for '" + token + "' has wrong dimension");
    for (int d = 0; d < dim; ++d)
      matrix(static_cast<Eigen::Index>(i), d) = values[static_cast<std::size_t>(d)];
    vocab[token] = static_cast<int>(i);
  }
  return EmbeddingStore(dim, std::move(matrix), std::move(vocab));
}

bool EmbeddingStore::contains(const std::string& token) const {
  return vocab_.count(token) != 0;
}

int EmbeddingStore::row_of(const std::string& token) const {
  auto it = vocab_.find(token);
  return it == vocab_.end() ? -1 : it->second;
}

Eigen::VectorXd EmbeddingStore::lookup(const std::string& token) const {
  const int row = row_of(token);
  if (row < 0) return Eigen::VectorXd::Zero(dim_);
  return matrix_.row(row).transpose();
}

Eigen::VectorXd EmbeddingStore::phrase_vector(
    const std::vector<std::string>& tokens) const {
  if (tokens.empty())
    throw Error("phrase_vector: token list must be non-empty");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  for (const auto& token : tokens) {
    const int row = row_of(token);
    if (row >= 0) sum += matrix_.row(row).transpose();
  }
  return sum / static_cast<double>(tokens.size());
}

EmbeddingStore load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw Error(path + ": empty embeddings file");
  std::istringstream header(line);
  long long count = 0;
  int dim = 0;
  if (!(header >> count >> dim) || count <= 0 || dim <= 0)
    throw Error(path + ": line 1: expected header 'count dim'");

  Eigen::MatrixXd matrix(count, dim);
  std::unordered_map<std::string, int> vocab;
  vocab.reserve(static_cast<std::size_t>(count));
  long long rows_seen = 0;   // unique tokens stored
  long long data_lines = 0;  // vector rows in the file
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (++data_lines > count)
      throw Error(path + ": more vector rows than the header announced");
    std::istringstream row(line);
    std::string token;
    if (!(row >> token))
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": missing token");
    auto [it, inserted] = vocab.try_emplace(token, 0);
    const long long target = inserted ? rows_seen : it->second;
    for (int d = 0; d < dim; ++d) {
      double v = 0.0;
      if (!(row >> v))
        throw Error(path + ": line " + std::to_string(line_no) + ": expected " +
                    std::to_string(dim) + " components for token '" + token +
                    "'");
      if (!std::isfinite(v))
        throw Error(path + ": line " + std::to_string(line_no) +
                    ": non-finite component for token '" + token + "'");
      matrix(target, d) = v;
    }
    double extra;
    if (row >> extra)
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": too many components for token '" + token + "'");
    if (inserted) {
      it->second = static_cast<int>(rows_seen);
      ++rows_seen;
    }
    // Repeated tokens overwrite their earlier row.
  }
  if (data_lines != count)
    throw Error(path + ": header announced " + std::to_string(count) +
                " rows but the file has " + std::to_string(data_lines));
  if (rows_seen != count) {
    // Duplicate tokens collapsed onto one row each.
    matrix.conservativeResize(rows_seen, dim);
  }
  return EmbeddingStore(dim, std::move(matrix), std::move(vocab));
}

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embeddings file: " + path);
  // Order rows by index so save/load round-trips exactly.
  std::vector<const std::string*> tokens(
      static_cast<std::size_t>(store.vocab_size()), nullptr);
  for (const auto& [token, row] : store.vocab()) {
    tokens[static_cast<std::size_t>(row)] = &token;
  }
  out << store.vocab_size() << ' ' << store.dim() << '\n';
  char buf[64];
  for (int row = 0; row < store.vocab_size(); ++row) {
    out << *tokens[static_cast<std::size_t>(row)];
    for (int d = 0; d < store.dim(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", store.matrix()(row, d));
      out << ' ' << buf;
    }
    out << '\n';
  }
}

}  // namespace mednorm
