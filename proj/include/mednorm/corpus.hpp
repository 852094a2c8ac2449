#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mednorm/util.hpp"

namespace mednorm {

// Tokenizer used everywhere a phrase enters the pipeline (mentions and
// dictionary terms share it). Lowercases ASCII, treats punctuation as a
// token separator, keeps apostrophes and hyphens only between two
// word characters, splits on whitespace and drops empty tokens.
// "Can't fall ASLEEP!!" -> {"can't", "fall", "asleep"}.
std::vector<std::string> normalize_text(std::string_view raw);

// One annotated phrase with its gold concept code.
struct MentionRecord {
  std::string mention_id;
  std::string source_doc;
  std::string raw_text;
  std::vector<std::string> tokens;  // normalize_text(raw_text), non-empty
  std::string code;
};

// Bijection between code strings and dense labels [0, C), assigned in
// first-occurrence order.
class LabelIndex {
 public:
  // Returns the label for code, inserting a new one if unseen.
  int insert(const std::string& code);
  int label_of(const std::string& code) const;  // throws if unknown
  bool contains(const std::string& code) const;
  const std::string& code_of(int label) const;  // throws if out of range
  int size() const { return static_cast<int>(codes_.size()); }
  const std::vector<std::string>& codes() const { return codes_; }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, int> index_;
};

struct CorpusStats {
  std::size_t total_mentions = 0;
  std::size_t unique_codes = 0;
  std::size_t unique_normalized_mentions = 0;
  // Rows removed on load; not part of the surviving corpus but useful
  // when auditing a new export.
  std::size_t dropped_conceptless = 0;
  std::size_t dropped_ambiguous = 0;
};

struct Corpus {
  std::vector<MentionRecord> records;
  LabelIndex label_index;
  CorpusStats stats;

  const MentionRecord& record_by_id(const std::string& mention_id) const;
  bool has_record(const std::string& mention_id) const;
  // Position of mention_id in records (corpus order).
  std::size_t position_of(const std::string& mention_id) const;

  void rebuild_lookup();  // call after mutating records

 private:
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Reads the corpus TSV (header: mention_id, document_id, text, code).
// Rows annotated "CONCEPT_LESS" or with a composite "A+B" code are
// dropped; everything else must parse cleanly or the load fails with the
// offending line number.
Corpus load_corpus_tsv(const std::string& path);

// Builds a corpus from in-memory rows (mention_id, source_doc, text, code).
// Same filtering and validation as the TSV path; used by tests and
// synthetic generators.
Corpus build_corpus(
    const std::vector<std::array<std::string, 4>>& rows);

// Normalized-phrase + code key used for duplicate removal and leakage
// accounting: "sore arm|C1".
std::string dedup_key(const MentionRecord& record);

nlohmann::ordered_json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus_json(const std::string& path);

}  // namespace mednorm
