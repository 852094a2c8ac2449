#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mednorm/corpus.hpp"
#include "mednorm/dictionary.hpp"
#include "mednorm/simfeatures.hpp"
#include "mednorm/util.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace mednorm;

namespace {

// Three single-synonym codes; labels C1=0, C2=1, C3=2.
struct ToyData {
  Corpus corpus;
  ConceptDictionary dict;
};

ToyData toy_dictionary() {
  ToyData d;
  d.corpus = build_corpus({{{"m1", "d1", "toe pain", "C1"}},
                           {{"m2", "d1", "headache", "C2"}},
                           {{"m3", "d2", "sore arm", "C3"}}});
  d.dict = build_dictionary(
      {{"C1", "toe pain"}, {"C2", "head ache pain"}, {"C3", "arm soreness"}},
      d.corpus);
  return d;
}

int argmax_entry(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

// Random dictionary + queries for oracle-equivalence sweeps. Vocabulary
// overlaps between codes and queries include tokens outside the fitted
// collection and outside the embedding store.
struct RandomInstance {
  Corpus corpus;
  ConceptDictionary dict;
  EmbeddingStore store;
  std::vector<std::vector<std::string>> train_mentions;
  std::vector<std::vector<std::string>> queries;
};

RandomInstance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const int n_codes = 2 + static_cast<int>(rng.uniform_below(19));

  auto phrase = [&](int min_len, int max_len, int vocab) {
    const int len =
        min_len + static_cast<int>(rng.uniform_below(
                      static_cast<std::uint64_t>(max_len - min_len + 1)));
    std::string text;
    for (int i = 0; i < len; ++i) {
      if (i) text += ' ';
      text += "t" + std::to_string(rng.uniform_below(
                        static_cast<std::uint64_t>(vocab)));
    }
    return text;
  };

  RandomInstance inst{Corpus{}, ConceptDictionary{},
                      EmbeddingStore(1, Eigen::MatrixXd::Zero(0, 1), {}),
                      {}, {}};

  std::vector<std::array<std::string, 4>> rows;
  std::vector<std::pair<std::string, std::string>> dict_rows;
  for (int c = 0; c < n_codes; ++c) {
    const std::string code = "R" + std::to_string(c);
    rows.push_back({{"m" + std::to_string(c), "d0", phrase(1, 3, 60), code}});
    const int n_syn = 1 + static_cast<int>(rng.uniform_below(5));
    for (int s = 0; s < n_syn; ++s) {
      dict_rows.emplace_back(code, phrase(1, 4, 60));
    }
  }
  inst.corpus = build_corpus(rows);
  inst.dict = build_dictionary(dict_rows, inst.corpus);

  std::vector<std::string> known_tokens;
  for (int t = 0; t < 45; ++t) known_tokens.push_back("t" + std::to_string(t));
  inst.store = synth::random_embeddings(mix_seed(seed, 3), known_tokens, 6);

  for (int i = 0; i < 4; ++i) {
    inst.train_mentions.push_back(normalize_text(phrase(1, 5, 60)));
  }
  for (int i = 0; i < 5; ++i) {
    inst.queries.push_back(normalize_text(phrase(1, 8, 70)));
  }
  return inst;
}

std::vector<std::vector<std::string>> oracle_fit_collection(
    const ConceptDictionary& dict,
    const std::vector<std::vector<std::string>>& train_mentions) {
  // Assembled by hand so the oracle does not reuse the library's helper:
  // concatenated docs, then every individual synonym, then train mentions.
  std::vector<std::vector<std::string>> docs;
  for (const auto& doc : dict.concat_docs) docs.push_back(doc);
  for (const auto& terms : dict.synonyms) {
    for (const auto& term : terms) docs.push_back(term);
  }
  for (const auto& m : train_mentions) docs.push_back(m);
  return docs;
}

}  // namespace

TEST_SUITE("simfeatures") {

TEST_CASE("strategy names round-trip") {
  for (FeatureStrategy s : {FeatureStrategy::TfidfAll, FeatureStrategy::TfidfMax,
                            FeatureStrategy::W2vAll}) {
    CHECK(feature_strategy_from_string(to_string(s)) == s);
  }
  CHECK(to_string(FeatureStrategy::TfidfMax) == "tfidf_max");
  CHECK_THROWS_AS(feature_strategy_from_string("tfidf"), Error);
}

TEST_CASE("idf of a token present in every document is exactly 1") {
  const TfidfModel model =
      TfidfModel::fit({{"a", "b"}, {"a"}, {"a", "c"}});
  CHECK(model.idf_of("a") == 1.0);
}

TEST_CASE("idf of a token in one of three documents is ln(2)+1") {
  const TfidfModel model =
      TfidfModel::fit({{"sore", "arm"}, {"arm", "ache"}, {"head", "ache"}});
  CHECK(model.idf_of("sore") == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("full idf table on a three-document collection") {
  // df: sore=1, arm=2, ache=2 (repeats inside one document count once),
  // head=1; idf = ln(4/(1+df)) + 1.
  const std::vector<std::vector<std::string>> docs = {
      {"sore", "arm"}, {"arm", "ache"}, {"head", "ache", "ache"}};
  const TfidfModel model = TfidfModel::fit(docs);
  CHECK(model.doc_count() == 3);
  CHECK(model.vocab_size() == 4);
  CHECK(model.idf_of("sore") == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));
  CHECK(model.idf_of("arm") ==
        doctest::Approx(std::log(4.0 / 3.0) + 1.0).epsilon(1e-12));
  CHECK(model.idf_of("ache") ==
        doctest::Approx(std::log(4.0 / 3.0) + 1.0).epsilon(1e-12));
  CHECK(model.idf_of("head") == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));

  const oracle::BruteTfidf brute(docs);
  for (const std::string t : {"sore", "arm", "ache", "head"}) {
    CHECK(model.idf_of(t) == doctest::Approx(brute.idf(t)).epsilon(1e-12));
  }
}

TEST_CASE("fitting on an empty collection fails") {
  CHECK_THROWS_AS(TfidfModel::fit({}), Error);
}

TEST_CASE("unseen tokens have no idf and no transform weight") {
  const TfidfModel model = TfidfModel::fit({{"a", "b"}});
  CHECK_FALSE(model.has_token("z"));
  CHECK_THROWS_AS(model.idf_of("z"), Error);
  CHECK(model.transform({"z", "q"}).empty());
}

TEST_CASE("non-empty transforms are unit length") {
  const TfidfModel model = TfidfModel::fit({{"a", "b"}, {"b", "c"}});
  const SparseVector v = model.transform({"a", "b", "b", "z"});
  double norm_sq = 0.0;
  for (const auto& [col, w] : v) norm_sq += w * w;
  CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit collection is dictionary docs plus train mentions only") {
  const ToyData toy = toy_dictionary();
  const std::vector<std::vector<std::string>> train = {{"stubbed", "toe"}};
  const TfidfModel model = fit_tfidf(toy.dict, train);
  // 3 concatenated docs + 3 individual synonyms + 1 train mention.
  CHECK(model.doc_count() == 7);
  CHECK(model.has_token("stubbed"));
  // A token seen only at query time must stay out of the vocabulary.
  CHECK_FALSE(model.has_token("unseen"));
}

TEST_CASE("cosine matches hand values") {
  Eigen::VectorXd e1(2), e2(2);
  e1 << 1, 0;
  e2 << 0, 1;
  CHECK(cosine(e1, e1) == 1.0);
  CHECK(cosine(e1, e2) == 0.0);

  Eigen::VectorXd u(3), v(3);
  u << 1, 2, 3;
  v << 4, 5, 6;
  CHECK(cosine(u, v) ==
        doctest::Approx(32.0 / (std::sqrt(14.0) * std::sqrt(77.0)))
            .epsilon(1e-12));
}

TEST_CASE("cosine of a zero vector is 0") {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd u(3);
  u << 1, 2, 3;
  CHECK(cosine(z, u) == 0.0);
  CHECK(cosine(z, z) == 0.0);
}

TEST_CASE("cosine rejects mismatched lengths") {
  CHECK_THROWS_AS(cosine(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)),
                  Error);
}

TEST_CASE("sparse cosine agrees with the dense formula") {
  const TfidfModel model = TfidfModel::fit({{"a", "b", "c"}, {"b", "c", "d"}});
  const SparseVector u = model.transform({"a", "b"});
  const SparseVector v = model.transform({"b", "c", "d"});
  // Densify by column and compare.
  Eigen::VectorXd du = Eigen::VectorXd::Zero(model.vocab_size());
  Eigen::VectorXd dv = Eigen::VectorXd::Zero(model.vocab_size());
  for (const auto& [col, w] : u) du(col) = w;
  for (const auto& [col, w] : v) dv(col) = w;
  CHECK(cosine_sparse(u, v) == doctest::Approx(cosine(du, dv)).epsilon(1e-12));
  CHECK(cosine_sparse({}, v) == 0.0);
}

TEST_CASE("tfidf_all: exact synonym match scores 1, disjoint code scores 0") {
  const ToyData toy = toy_dictionary();
  const TfidfModel model = fit_tfidf(toy.dict, {});
  const Eigen::VectorXd f = tfidf_all(model, toy.dict, {"toe", "pain"});
  REQUIRE(f.size() == 3);
  CHECK(f(0) == doctest::Approx(1.0).epsilon(1e-12));  // C1 == "toe pain"
  CHECK(f(1) > 0.0);   // C2 shares "pain"
  CHECK(f(2) == 0.0);  // C3 shares nothing
}

TEST_CASE("tfidf_all full vector matches the brute-force oracle") {
  const ToyData toy = toy_dictionary();
  const TfidfModel model = fit_tfidf(toy.dict, {});
  const oracle::BruteTfidf brute(oracle_fit_collection(toy.dict, {}));
  const std::vector<std::string> mention = {"toe", "pain"};
  const Eigen::VectorXd f = tfidf_all(model, toy.dict, mention);
  const std::vector<double> g = oracle::tfidf_all(brute, toy.dict, mention);
  REQUIRE(static_cast<std::size_t>(f.size()) == g.size());
  for (int c = 0; c < f.size(); ++c) {
    CHECK(f(c) == doctest::Approx(g[static_cast<std::size_t>(c)]).epsilon(1e-12));
  }
}

TEST_CASE("tfidf_max: exact match among several synonyms scores 1") {
  Corpus corpus = build_corpus({{{"m1", "d1", "toe pain", "C1"}},
                                {{"m2", "d1", "rash", "C2"}}});
  const ConceptDictionary dict = build_dictionary({{"C1", "toe pain"},
                                                   {"C1", "digital pain"},
                                                   {"C2", "skin rash"}},
                                                  corpus);
  const TfidfModel model = fit_tfidf(dict, {});
  const Eigen::VectorXd f = tfidf_max(model, dict, {"toe", "pain"});
  CHECK(f(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tfidf_max dominates every per-synonym similarity") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const RandomInstance inst = random_instance(seed);
    const TfidfModel model = fit_tfidf(inst.dict, inst.train_mentions);
    for (const auto& mention : inst.queries) {
      const Eigen::VectorXd f = tfidf_max(model, inst.dict, mention);
      const SparseVector mv = model.transform(mention);
      for (int c = 0; c < inst.dict.num_codes(); ++c) {
        for (const auto& syn : inst.dict.synonyms[static_cast<std::size_t>(c)]) {
          CHECK(f(c) >= cosine_sparse(mv, model.transform(syn)) - 1e-12);
        }
      }
    }
  }
}

TEST_CASE("concatenation dilutes a match that tfidf_max preserves") {
  // C1's second synonym drags the concatenated document away from the
  // mention, so the max strategy must strictly beat the all strategy.
  Corpus corpus = build_corpus({{{"m1", "d1", "toe pain", "C1"}},
                                {{"m2", "d1", "rash", "C2"}}});
  const ConceptDictionary dict =
      build_dictionary({{"C1", "toe pain"},
                        {"C1", "completely different words here"},
                        {"C2", "skin rash"}},
                       corpus);
  const TfidfModel model = fit_tfidf(dict, {});
  const std::vector<std::string> mention = {"toe", "pain"};
  const Eigen::VectorXd all = tfidf_all(model, dict, mention);
  const Eigen::VectorXd mx = tfidf_max(model, dict, mention);
  CHECK(mx(0) > all(0));
  CHECK(mx(0) == doctest::Approx(1.0).epsilon(1e-12));

  // Both sides of the inequality confirmed against the oracle.
  const oracle::BruteTfidf brute(oracle_fit_collection(dict, {}));
  CHECK(all(0) ==
        doctest::Approx(oracle::tfidf_all(brute, dict, mention)[0]).epsilon(1e-12));
  CHECK(mx(0) ==
        doctest::Approx(oracle::tfidf_max(brute, dict, mention)[0]).epsilon(1e-12));
}

TEST_CASE("w2v_all matches hand arithmetic on a 2-d toy") {
  Corpus corpus = build_corpus({{{"m1", "d1", "toe pain", "C1"}},
                                {{"m2", "d1", "head ache", "C2"}}});
  const ConceptDictionary dict =
      build_dictionary({{"C1", "toe pain"}, {"C2", "head ache"}}, corpus);
  const EmbeddingStore store = EmbeddingStore::from_pairs(
      2, {{"toe", {1.0, 0.0}},
          {"pain", {0.0, 1.0}},
          {"head", {-1.0, 0.0}},
          {"ache", {0.0, 1.0}}});

  const Eigen::VectorXd f1 = w2v_all(store, dict, {"toe", "pain"});
  CHECK(f1(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f1(1) == doctest::Approx(0.0).epsilon(1e-12));

  // mention (0,1) vs code averages (.5,.5) and (-.5,.5): both 1/sqrt(2).
  const Eigen::VectorXd f2 = w2v_all(store, dict, {"pain", "ache"});
  CHECK(f2(0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(f2(1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("w2v_all of an all-OOV mention is the zero vector") {
  Corpus corpus = build_corpus({{{"m1", "d1", "toe pain", "C1"}}});
  const ConceptDictionary dict = build_dictionary({{"C1", "toe pain"}}, corpus);
  const EmbeddingStore store = EmbeddingStore::from_pairs(
      2, {{"toe", {1.0, 0.0}}, {"pain", {0.0, 1.0}}});
  CHECK(w2v_all(store, dict, {"zzz", "qqq"}).isZero());
}

TEST_CASE("all three strategies match their oracles on random instances") {
  for (std::uint64_t seed = 400; seed < 430; ++seed) {
    const RandomInstance inst = random_instance(seed);
    const TfidfModel model = fit_tfidf(inst.dict, inst.train_mentions);
    const oracle::BruteTfidf brute(
        oracle_fit_collection(inst.dict, inst.train_mentions));
    for (const auto& mention : inst.queries) {
      const Eigen::VectorXd a = tfidf_all(model, inst.dict, mention);
      const Eigen::VectorXd m = tfidf_max(model, inst.dict, mention);
      const Eigen::VectorXd w = w2v_all(inst.store, inst.dict, mention);
      const std::vector<double> oa = oracle::tfidf_all(brute, inst.dict, mention);
      const std::vector<double> om = oracle::tfidf_max(brute, inst.dict, mention);
      const std::vector<double> ow =
          oracle::w2v_all(inst.store, inst.dict, mention);
      REQUIRE(a.size() == inst.dict.num_codes());
      for (int c = 0; c < a.size(); ++c) {
        const auto cc = static_cast<std::size_t>(c);
        CHECK(std::abs(a(c) - oa[cc]) <= 1e-9);
        CHECK(std::abs(m(c) - om[cc]) <= 1e-9);
        CHECK(std::abs(w(c) - ow[cc]) <= 1e-9);
        // Declared bounds.
        CHECK(a(c) >= 0.0); CHECK(a(c) <= 1.0);
        CHECK(m(c) >= 0.0); CHECK(m(c) <= 1.0);
        CHECK(w(c) >= -1.0); CHECK(w(c) <= 1.0);
      }
    }
  }
}

TEST_CASE("featurizer reproduces the free functions") {
  const RandomInstance inst = random_instance(77);
  const TfidfModel model = fit_tfidf(inst.dict, inst.train_mentions);

  const SimilarityFeaturizer f_all(FeatureStrategy::TfidfAll, model, inst.dict);
  const SimilarityFeaturizer f_max(FeatureStrategy::TfidfMax, model, inst.dict);
  const SimilarityFeaturizer f_w2v(inst.store, inst.dict);
  CHECK(f_all.num_codes() == inst.dict.num_codes());
  CHECK(f_w2v.strategy() == FeatureStrategy::W2vAll);

  for (const auto& mention : inst.queries) {
    CHECK((f_all.compute(mention) - tfidf_all(model, inst.dict, mention))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((f_max.compute(mention) - tfidf_max(model, inst.dict, mention))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((f_w2v.compute(mention) - w2v_all(inst.store, inst.dict, mention))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
}

TEST_CASE("tfidf_max argmax recovers the gold code on corrupted synonyms") {
  const synth::CorruptedSynonymData data = synth::corrupted_synonym_data(42);
  const TfidfModel model = fit_tfidf(data.dict, {});
  int hits = 0;
  for (const auto& rec : data.corpus.records) {
    const Eigen::VectorXd f = tfidf_max(model, data.dict, rec.tokens);
    if (data.dict.codes[static_cast<std::size_t>(argmax_entry(f))] == rec.code)
      ++hits;
  }
  const auto n = static_cast<double>(data.corpus.records.size());
  CHECK(static_cast<double>(hits) / n > 0.8);
}

TEST_CASE("feature matrix files round-trip bitwise") {
  FeatureMatrix m;
  m.strategy = "tfidf_max";
  m.fold = 2;
  m.split = "train";
  m.mention_ids = {"a", "b", "c"};
  Rng rng(9);
  m.values.resize(3, 4);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) m.values(r, c) = rng.normal();
  }
  const std::string path = "/tmp/mednorm_test_featmat.bin";
  save_feature_matrix(m, path);
  const FeatureMatrix back = load_feature_matrix(path);
  CHECK(back.strategy == m.strategy);
  CHECK(back.fold == m.fold);
  CHECK(back.split == m.split);
  CHECK(back.mention_ids == m.mention_ids);
  CHECK(back.values == m.values);  // bitwise
  std::remove(path.c_str());
}

TEST_CASE("feature matrix loader rejects corrupt files") {
  FeatureMatrix m;
  m.strategy = "w2v_all";
  m.fold = 0;
  m.split = "test";
  m.mention_ids = {"x"};
  m.values = Eigen::MatrixXd::Ones(1, 2);
  const std::string path = "/tmp/mednorm_test_featmat_bad.bin";
  save_feature_matrix(m, path);

  SUBCASE("flipped magic byte") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(load_feature_matrix(path), Error);
  }
  SUBCASE("truncated payload") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    out.close();
    CHECK_THROWS_AS(load_feature_matrix(path), Error);
  }
  std::remove(path.c_str());
}

}  // TEST_SUITE
