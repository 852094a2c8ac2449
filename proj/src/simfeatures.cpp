#include "mednorm/simfeatures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace mednorm {

std::string to_string(FeatureStrategy s) {
  switch (s) {
    case FeatureStrategy::TfidfAll: return "tfidf_all";
    case FeatureStrategy::TfidfMax: return "tfidf_max";
    case FeatureStrategy::W2vAll: return "w2v_all";
  }
  throw Error("unknown feature strategy");
}

FeatureStrategy feature_strategy_from_string(const std::string& s) {
  if (s == "tfidf_all") return FeatureStrategy::TfidfAll;
  if (s == "tfidf_max") return FeatureStrategy::TfidfMax;
  if (s == "w2v_all") return FeatureStrategy::W2vAll;
  throw Error("unknown feature strategy '" + s +
              "' (expected tfidf_all, tfidf_max or w2v_all)");
}

TfidfModel TfidfModel::fit(
    const std::vector<std::vector<std::string>>& documents) {
  if (documents.empty())
    throw Error("fit_tfidf: document collection is empty");
  TfidfModel model;
  model.doc_count_ = static_cast<int>(documents.size());

  // Document frequencies, vocabulary columns in first-seen order.
  std::vector<int> df;
  for (const auto& doc : documents) {
    std::vector<int> cols;
    for (const auto& token : doc) {
      auto [it, inserted] = model.vocabulary_.try_emplace(
          token, static_cast<int>(model.vocabulary_.size()));
      if (inserted) df.push_back(0);
      cols.push_back(it->second);
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (int c : cols) ++df[static_cast<std::size_t>(c)];
  }

  model.idf_.resize(df.size());
  const double n = 1.0 + model.doc_count_;
  for (std::size_t c = 0; c < df.size(); ++c) {
    model.idf_[c] = std::log(n / (1.0 + df[c])) + 1.0;
  }
  return model;
}

SparseVector TfidfModel::transform(
    const std::vector<std::string>& tokens) const {
  std::map<int, double> counts;
  for (const auto& token : tokens) {
    auto it = vocabulary_.find(token);
    if (it != vocabulary_.end()) counts[it->second] += 1.0;
  }
  SparseVector vec;
  vec.reserve(counts.size());
  double norm_sq = 0.0;
  for (const auto& [col, count] : counts) {
    const double w = count * idf_[static_cast<std::size_t>(col)];
    vec.emplace_back(col, w);
    norm_sq += w * w;
  }
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& [col, w] : vec) w *= inv;
  }
  return vec;
}

double TfidfModel::idf_of(const std::string& token) const {
  auto it = vocabulary_.find(token);
  if (it == vocabulary_.end())
    throw Error("token '" + token + "' not in fitted vocabulary");
  return idf_[static_cast<std::size_t>(it->second)];
}

bool TfidfModel::has_token(const std::string& token) const {
  return vocabulary_.count(token) != 0;
}

std::vector<std::vector<std::string>> tfidf_fit_documents(
    const ConceptDictionary& dict,
    const std::vector<std::vector<std::string>>& train_mentions) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(dict.concat_docs.size() + train_mentions.size());
  for (const auto& doc : dict.concat_docs) docs.push_back(doc);
  for (const auto& terms : dict.synonyms) {
    for (const auto& term : terms) docs.push_back(term);
  }
  for (const auto& mention : train_mentions) docs.push_back(mention);
  return docs;
}

TfidfModel fit_tfidf(
    const ConceptDictionary& dict,
    const std::vector<std::vector<std::string>>& train_mentions) {
  return TfidfModel::fit(tfidf_fit_documents(dict, train_mentions));
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size())
    throw Error("cosine: vector length mismatch (" + std::to_string(u.size()) +
                " vs " + std::to_string(v.size()) + ")");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

double cosine_sparse(const SparseVector& u, const SparseVector& v) {
  // Inputs are already L2-normalized (or empty).
  if (u.empty() || v.empty()) return 0.0;
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < u.size() && j < v.size()) {
    if (u[i].first == v[j].first) {
      dot += u[i].second * v[j].second;
      ++i;
      ++j;
    } else if (u[i].first < v[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return std::clamp(dot, -1.0, 1.0);
}

Eigen::VectorXd tfidf_all(const TfidfModel& model,
                          const ConceptDictionary& dict,
                          const std::vector<std::string>& mention) {
  const SparseVector m = model.transform(mention);
  Eigen::VectorXd out(dict.num_codes());
  for (int c = 0; c < dict.num_codes(); ++c) {
    out(c) = cosine_sparse(
        m, model.transform(dict.concat_docs[static_cast<std::size_t>(c)]));
  }
  return out;
}

Eigen::VectorXd tfidf_max(const TfidfModel& model,
                          const ConceptDictionary& dict,
                          const std::vector<std::string>& mention) {
  const SparseVector m = model.transform(mention);
  Eigen::VectorXd out(dict.num_codes());
  for (int c = 0; c < dict.num_codes(); ++c) {
    double best = 0.0;
    for (const auto& term : dict.synonyms[static_cast<std::size_t>(c)]) {
      best = std::max(best, cosine_sparse(m, model.transform(term)));
    }
    out(c) = best;
  }
  return out;
}

Eigen::VectorXd w2v_all(const EmbeddingStore& store,
                        const ConceptDictionary& dict,
                        const std::vector<std::string>& mention) {
  const Eigen::VectorXd m = store.phrase_vector(mention);
  Eigen::VectorXd out(dict.num_codes());
  for (int c = 0; c < dict.num_codes(); ++c) {
    out(c) = cosine(
        m, store.phrase_vector(dict.concat_docs[static_cast<std::size_t>(c)]));
  }
  return out;
}

SimilarityFeaturizer::SimilarityFeaturizer(FeatureStrategy strategy,
                                           TfidfModel model,
                                           const ConceptDictionary& dict)
    : strategy_(strategy),
      num_codes_(dict.num_codes()),
      tfidf_model_(std::move(model)) {
  if (strategy == FeatureStrategy::W2vAll)
    throw Error("w2v_all featurizer needs an embedding store");
  if (strategy == FeatureStrategy::TfidfAll) {
    code_docs_.reserve(dict.concat_docs.size());
    for (const auto& doc : dict.concat_docs) {
      code_docs_.push_back(tfidf_model_->transform(doc));
    }
  } else {
    synonym_docs_.resize(dict.synonyms.size());
    for (std::size_t c = 0; c < dict.synonyms.size(); ++c) {
      for (const auto& term : dict.synonyms[c]) {
        synonym_docs_[c].push_back(tfidf_model_->transform(term));
      }
    }
  }
}

SimilarityFeaturizer::SimilarityFeaturizer(const EmbeddingStore& store,
                                           const ConceptDictionary& dict)
    : strategy_(FeatureStrategy::W2vAll),
      num_codes_(dict.num_codes()),
      store_(&store) {
  code_phrase_vectors_.resize(num_codes_, store.dim());
  for (int c = 0; c < num_codes_; ++c) {
    code_phrase_vectors_.row(c) =
        store.phrase_vector(dict.concat_docs[static_cast<std::size_t>(c)])
            .transpose();
  }
}

Eigen::VectorXd SimilarityFeaturizer::compute(
    const std::vector<std::string>& mention) const {
  Eigen::VectorXd out(num_codes_);
  switch (strategy_) {
    case FeatureStrategy::TfidfAll: {
      const SparseVector m = tfidf_model_->transform(mention);
      for (int c = 0; c < num_codes_; ++c) {
        out(c) = cosine_sparse(m, code_docs_[static_cast<std::size_t>(c)]);
      }
      return out;
    }
    case FeatureStrategy::TfidfMax: {
      const SparseVector m = tfidf_model_->transform(mention);
      for (int c = 0; c < num_codes_; ++c) {
        double best = 0.0;
        for (const auto& doc : synonym_docs_[static_cast<std::size_t>(c)]) {
          best = std::max(best, cosine_sparse(m, doc));
        }
        out(c) = best;
      }
      return out;
    }
    case FeatureStrategy::W2vAll: {
      const Eigen::VectorXd m = store_->phrase_vector(mention);
      for (int c = 0; c < num_codes_; ++c) {
        out(c) = cosine(m, code_phrase_vectors_.row(c).transpose());
      }
      return out;
    }
  }
  throw Error("unknown feature strategy");
}

namespace {
constexpr char kFeatMagic[8] = {'M', 'N', 'F', 'E', 'A', 'T', '0', '1'};
}

void save_feature_matrix(const FeatureMatrix& m, const std::string& path) {
  if (m.values.rows() != static_cast<Eigen::Index>(m.mention_ids.size()))
    throw Error("feature matrix row/id count mismatch");
  nlohmann::ordered_json header;
  header["rows"] = m.values.rows();
  header["cols"] = m.values.cols();
  header["strategy"] = m.strategy;
  header["fold"] = m.fold;
  header["split"] = m.split;
  header["mention_ids"] = m.mention_ids;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature matrix: " + path);
  out.write(kFeatMagic, sizeof(kFeatMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  // Row-major float64.
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      const double v = m.values(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw Error("short write to feature matrix: " + path);
}

FeatureMatrix load_feature_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature matrix: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kFeatMagic, sizeof(magic)) != 0)
    throw Error(path + ": not a feature matrix file");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), len);
  if (!in) throw Error(path + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid header JSON: " + e.what());
  }
  FeatureMatrix m;
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  m.strategy = header.at("strategy").get<std::string>();
  m.fold = header.at("fold").get<int>();
  m.split = header.at("split").get<std::string>();
  m.mention_ids = header.at("mention_ids").get<std::vector<std::string>>();
  if (static_cast<Eigen::Index>(m.mention_ids.size()) != rows)
    throw Error(path + ": mention_ids/rows mismatch");
  m.values.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m.values(r, c) = v;
    }
  }
  if (!in) throw Error(path + ": truncated matrix data");
  return m;
}

}  // namespace mednorm
