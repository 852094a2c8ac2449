#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mednorm/dictionary.hpp"
#include "support/synthetic.hpp"

using namespace mednorm;

namespace {

using CorpusRows = std::vector<std::array<std::string, 4>>;
using DictRows = std::vector<std::pair<std::string, std::string>>;

}  // namespace

TEST_SUITE("dictionary") {

TEST_CASE("source codes outside the corpus are dropped") {
  const Corpus corpus = build_corpus(CorpusRows{
      {"m1", "d1", "toe pain", "A"},
      {"m2", "d1", "dizzy", "B"},
  });
  const ConceptDictionary dict = build_dictionary(
      DictRows{{"A", "pain in toe"}, {"B", "dizziness"}, {"C", "unrelated"}},
      corpus);
  CHECK(dict.codes == std::vector<std::string>{"A", "B"});
}

TEST_CASE("concatenated document preserves source term order") {
  const Corpus corpus =
      build_corpus(CorpusRows{{"m1", "d1", "toe pain", "A"}});
  const ConceptDictionary dict = build_dictionary(
      DictRows{{"A", "pain in toe"}, {"A", "toe pain"}}, corpus);
  CHECK(dict.concat_docs[0] ==
        std::vector<std::string>{"pain", "in", "toe", "toe", "pain"});
  CHECK(dict.synonyms[0].size() == 2);
}

TEST_CASE("codes missing from the source fall back to corpus phrases") {
  const Corpus corpus = build_corpus(CorpusRows{
      {"m1", "d1", "dizzy", "B"},
      {"m2", "d1", "dizzy", "B"},
      {"m3", "d1", "dizzy", "B"},
      {"m4", "d1", "spinning head", "B"},
  });
  const ConceptDictionary dict = build_dictionary(DictRows{}, corpus);
  REQUIRE(dict.synonyms[0].size() == 1);
  CHECK(dict.synonyms[0][0] == std::vector<std::string>{"dizzy"});
}

TEST_CASE("fallback prefers the most frequent phrase, earliest on ties") {
  const Corpus corpus = build_corpus(CorpusRows{
      {"m1", "d1", "sore arm", "B"},
      {"m2", "d1", "arm ache", "B"},
  });
  const ConceptDictionary dict = build_dictionary(DictRows{}, corpus);
  CHECK(dict.synonyms[0][0] == std::vector<std::string>{"sore", "arm"});
}

TEST_CASE("terms normalizing to nothing are dropped") {
  const Corpus corpus =
      build_corpus(CorpusRows{{"m1", "d1", "toe pain", "A"}});
  const ConceptDictionary dict =
      build_dictionary(DictRows{{"A", "!!!"}, {"A", "toe pain"}}, corpus);
  CHECK(dict.synonyms[0].size() == 1);
}

TEST_CASE("dictionary aligns with the corpus label order") {
  const auto data = synth::corrupted_synonym_data(31);
  CHECK_NOTHROW(validate_dictionary(data.dict, data.corpus));
  for (std::size_t i = 0; i < data.dict.codes.size(); ++i) {
    CHECK(data.corpus.label_index.label_of(data.dict.codes[i]) ==
          static_cast<int>(i));
  }
}

TEST_CASE("concat length equals the sum of term lengths") {
  const auto data = synth::corrupted_synonym_data(32);
  for (std::size_t c = 0; c < data.dict.codes.size(); ++c) {
    std::size_t total = 0;
    for (const auto& term : data.dict.synonyms[c]) total += term.size();
    CHECK(data.dict.concat_docs[c].size() == total);
  }
}

TEST_CASE("rebuilding from the same inputs is identical") {
  const auto data = synth::corrupted_synonym_data(33);
  const ConceptDictionary again =
      build_dictionary(data.dict_rows, data.corpus);
  CHECK(dictionary_to_json(again).dump() ==
        dictionary_to_json(data.dict).dump());
}

TEST_CASE("tsv rows with the wrong field count name their line") {
  const Corpus corpus =
      build_corpus(CorpusRows{{"m1", "d1", "toe pain", "A"}});
  const std::string path = "/tmp/mednorm_test_dict_bad.tsv";
  {
    std::ofstream out(path, std::ios::binary);
    out << "code\tterm\nA\ttoe pain\nA\n";
  }
  try {
    build_dictionary_tsv(path, corpus);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("dictionary json round-trips exactly") {
  const auto data = synth::corrupted_synonym_data(34);
  const ConceptDictionary back =
      dictionary_from_json(dictionary_to_json(data.dict));
  CHECK(dictionary_to_json(back).dump() ==
        dictionary_to_json(data.dict).dump());
}

}  // TEST_SUITE
