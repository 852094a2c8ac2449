#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mednorm/embeddings.hpp"
#include "mednorm/util.hpp"

using namespace mednorm;

namespace {

EmbeddingStore toy_store() {
  return EmbeddingStore::from_pairs(
      3, {{"alpha", {1.0, 2.0, 3.0}},
          {"beta", {-1.0, 0.5, 0.25}},
          {"gamma", {0.0, 0.0, 7.0}}});
}

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/mednorm_test_" + name;
  std::ofstream out(path, std::ios::binary);
  out << body;
  return path;
}

}  // namespace

TEST_SUITE("embeddings") {

TEST_CASE("known tokens return their stored row") {
  const EmbeddingStore store = toy_store();
  const Eigen::VectorXd v = store.lookup("alpha");
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 2.0);
  CHECK(v(2) == 3.0);
}

TEST_CASE("unknown and empty tokens return zeros, never throw") {
  const EmbeddingStore store = toy_store();
  CHECK(store.lookup("delta").isZero());
  CHECK(store.lookup("").isZero());
  CHECK(store.row_of("delta") == -1);
}

TEST_CASE("single-token phrase vector is that token's vector") {
  const EmbeddingStore store = toy_store();
  CHECK(store.phrase_vector({"gamma"}) == store.lookup("gamma"));
}

TEST_CASE("phrase vector is the componentwise mean") {
  const EmbeddingStore store = toy_store();
  const Eigen::VectorXd v = store.phrase_vector({"alpha", "beta"});
  CHECK(v(0) == doctest::Approx(0.0));
  CHECK(v(1) == doctest::Approx(1.25));
  CHECK(v(2) == doctest::Approx(1.625));
}

TEST_CASE("out-of-vocabulary tokens count toward the denominator") {
  const EmbeddingStore store = toy_store();
  const Eigen::VectorXd v = store.phrase_vector({"alpha", "missing"});
  CHECK(v(0) == doctest::Approx(0.5));
  CHECK(v(1) == doctest::Approx(1.0));
  CHECK(v(2) == doctest::Approx(1.5));
}

TEST_CASE("fully out-of-vocabulary phrases average to zero") {
  const EmbeddingStore store = toy_store();
  CHECK(store.phrase_vector({"x", "y", "z"}).isZero());
}

TEST_CASE("empty phrases are rejected") {
  const EmbeddingStore store = toy_store();
  CHECK_THROWS_AS(store.phrase_vector({}), Error);
}

TEST_CASE("phrase vector ignores token order") {
  const EmbeddingStore store = toy_store();
  CHECK(store.phrase_vector({"alpha", "beta", "gamma"}) ==
        store.phrase_vector({"gamma", "alpha", "beta"}));
}

TEST_CASE("text format round-trips to full precision") {
  Rng rng(5);
  std::vector<std::pair<std::string, std::vector<double>>> pairs;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(7);
    for (double& x : v) x = rng.normal() / 3.0;  // non-terminating decimals
    pairs.emplace_back("tok" + std::to_string(i), v);
  }
  const EmbeddingStore a = EmbeddingStore::from_pairs(7, pairs);
  const std::string path = "/tmp/mednorm_test_emb_roundtrip.txt";
  save_embeddings(a, path);
  const EmbeddingStore b = load_embeddings(path);
  REQUIRE(b.dim() == a.dim());
  REQUIRE(b.vocab_size() == a.vocab_size());
  for (const auto& [token, v] : pairs) {
    CHECK(a.lookup(token) == b.lookup(token));  // bitwise
  }
  std::remove(path.c_str());
}

TEST_CASE("header and row mismatches are rejected with line numbers") {
  SUBCASE("wrong component count") {
    const std::string path =
        write_temp("emb_short.txt", "2 3\na 1 2 3\nb 1 2\n");
    CHECK_THROWS_AS(load_embeddings(path), Error);
    std::remove(path.c_str());
  }
  SUBCASE("row count below header") {
    const std::string path = write_temp("emb_count.txt", "3 2\na 1 2\nb 3 4\n");
    CHECK_THROWS_AS(load_embeddings(path), Error);
    std::remove(path.c_str());
  }
  SUBCASE("non-numeric component") {
    const std::string path = write_temp("emb_nan.txt", "1 2\na 1 oops\n");
    CHECK_THROWS_AS(load_embeddings(path), Error);
    std::remove(path.c_str());
  }
  SUBCASE("missing header") {
    const std::string path = write_temp("emb_hdr.txt", "a 1 2\n");
    CHECK_THROWS_AS(load_embeddings(path), Error);
    std::remove(path.c_str());
  }
}

TEST_CASE("repeated tokens keep the last row") {
  const std::string path =
      write_temp("emb_dup.txt", "2 2\na 1 1\na 9 9\n");
  const EmbeddingStore store = load_embeddings(path);
  CHECK(store.vocab_size() == 1);
  CHECK(store.lookup("a")(0) == 9.0);
  std::remove(path.c_str());
}

TEST_CASE("non-finite vectors are rejected") {
  CHECK_THROWS_AS(
      EmbeddingStore::from_pairs(
          2, {{"a", {1.0, std::numeric_limits<double>::infinity()}}}),
      Error);
}

}  // TEST_SUITE
