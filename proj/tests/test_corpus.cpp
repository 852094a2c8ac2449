#include <array>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mednorm/corpus.hpp"
#include "support/synthetic.hpp"

using namespace mednorm;

namespace {

using Rows = std::vector<std::array<std::string, 4>>;

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/mednorm_test_" + name;
  std::ofstream out(path, std::ios::binary);
  out << body;
  return path;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("unmapped sentinel rows are dropped") {
  const Corpus c = build_corpus(Rows{
      {"m1", "d1", "sore arm", "C1"},
      {"m2", "d1", "vague thing", "CONCEPT_LESS"},
      {"m3", "d2", "bad rash", "C2"},
  });
  CHECK(c.records.size() == 2);
  CHECK(c.stats.total_mentions == 2);
  CHECK(c.stats.dropped_conceptless == 1);
}

TEST_CASE("multi-code rows are dropped, not exploded") {
  const Corpus c = build_corpus(Rows{
      {"m1", "d1", "sore arm", "C1"},
      {"m2", "d1", "both things", "C1+C2"},
  });
  CHECK(c.records.size() == 1);
  CHECK(c.stats.dropped_ambiguous == 1);
  CHECK(c.label_index.size() == 1);
}

TEST_CASE("duplicate mention ids are rejected") {
  CHECK_THROWS_AS(build_corpus(Rows{
                      {"m1", "d1", "sore arm", "C1"},
                      {"m1", "d2", "bad rash", "C2"},
                  }),
                  Error);
}

TEST_CASE("rows normalizing to zero tokens are rejected") {
  CHECK_THROWS_AS(build_corpus(Rows{{"m1", "d1", "...!!!", "C1"}}), Error);
}

TEST_CASE("dedup key is phrase tokens joined, pipe, code") {
  const Corpus c = build_corpus(Rows{{"m1", "d1", "Sore  ARM", "C1"}});
  CHECK(dedup_key(c.records[0]) == "sore arm|C1");
}

TEST_CASE("same phrase under different codes keys differently") {
  const Corpus c = build_corpus(Rows{
      {"m1", "d1", "sore arm", "C1"},
      {"m2", "d1", "sore arm", "C2"},
  });
  CHECK(dedup_key(c.records[0]) != dedup_key(c.records[1]));
}

TEST_CASE("casing differences key identically") {
  const Corpus c = build_corpus(Rows{
      {"m1", "d1", "Sore Arm", "C1"},
      {"m2", "d1", "sore arm!", "C1"},
  });
  CHECK(dedup_key(c.records[0]) == dedup_key(c.records[1]));
}

TEST_CASE("label index assigns dense labels in first-occurrence order") {
  const Corpus c = build_corpus(Rows{
      {"m1", "d1", "one", "B"},
      {"m2", "d1", "two", "A"},
      {"m3", "d1", "three", "B"},
  });
  CHECK(c.label_index.size() == 2);
  CHECK(c.label_index.label_of("B") == 0);
  CHECK(c.label_index.label_of("A") == 1);
  for (int i = 0; i < 2; ++i)
    CHECK(c.label_index.label_of(c.label_index.code_of(i)) == i);
}

TEST_CASE("every record's tokens equal re-normalizing its raw text") {
  const Corpus c = synth::random_corpus(99, 200, 12, 0.3);
  for (const auto& rec : c.records)
    CHECK(rec.tokens == normalize_text(rec.raw_text));
}

TEST_CASE("tsv load applies the same filtering") {
  const std::string path = write_temp(
      "corpus_ok.tsv",
      "mention_id\tdocument_id\ttext\tcode\n"
      "m1\td1\tsevere headache\tC10\n"
      "m2\td1\tvague thing\tCONCEPT_LESS\n"
      "m3\td2\tbad rash\tC20\n");
  const Corpus c = load_corpus_tsv(path);
  CHECK(c.records.size() == 2);
  CHECK(c.stats.dropped_conceptless == 1);
  std::remove(path.c_str());
}

TEST_CASE("tsv load is idempotent") {
  const std::string path = write_temp(
      "corpus_idem.tsv",
      "mention_id\tdocument_id\ttext\tcode\n"
      "m1\td1\tsevere headache\tC10\n"
      "m2\td2\tbad rash\tC20\n");
  const Corpus a = load_corpus_tsv(path);
  const Corpus b = load_corpus_tsv(path);
  CHECK(corpus_to_json(a).dump() == corpus_to_json(b).dump());
  std::remove(path.c_str());
}

TEST_CASE("malformed tsv rows report their line number") {
  const std::string path = write_temp(
      "corpus_bad.tsv",
      "mention_id\tdocument_id\ttext\tcode\n"
      "m1\td1\tsevere headache\tC10\n"
      "m2\tonly-two-fields\n");
  try {
    load_corpus_tsv(path);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("missing or wrong header is rejected") {
  const std::string path =
      write_temp("corpus_hdr.tsv", "id\tdoc\ttext\tcode\nm1\td1\tx\tC1\n");
  CHECK_THROWS_AS(load_corpus_tsv(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("corpus json round-trips exactly") {
  const Corpus a = synth::random_corpus(7, 120, 8, 0.25);
  const Corpus b = corpus_from_json(corpus_to_json(a));
  CHECK(corpus_to_json(a).dump() == corpus_to_json(b).dump());
  CHECK(b.records.size() == a.records.size());
  CHECK(b.label_index.size() == a.label_index.size());
}

TEST_CASE("tampered json is rejected on load") {
  const Corpus a = build_corpus(Rows{{"m1", "d1", "sore arm", "C1"}});
  auto j = corpus_to_json(a);
  j["records"][0]["tokens"] = std::vector<std::string>{"tampered"};
  CHECK_THROWS_AS(corpus_from_json(j), Error);
}

}  // TEST_SUITE
