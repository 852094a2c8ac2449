#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mednorm/corpus.hpp"

namespace mednorm {

// Terminology dictionary restricted to the codes of one corpus. codes[i]
// is the code for dense label i, so feature vectors indexed by label line
// up with dictionary entries without translation.
struct ConceptDictionary {
  std::vector<std::string> codes;
  // synonyms[i]: the token lists of every term attached to codes[i].
  std::vector<std::vector<std::vector<std::string>>> synonyms;
  // concat_docs[i]: all of codes[i]'s synonym token lists concatenated in
  // source order, forming the code's single-document representation.
  std::vector<std::vector<std::string>> concat_docs;

  int num_codes() const { return static_cast<int>(codes.size()); }
};

// Builds the dictionary from (code, term) rows. Rows whose code is not in
// the corpus are skipped; terms are run through normalize_text; terms that
// normalize to nothing are dropped. A corpus code left without any term
// falls back to its most frequent corpus mention phrase, so every code is
// guaranteed at least one synonym.
ConceptDictionary build_dictionary(
    const std::vector<std::pair<std::string, std::string>>& rows,
    const Corpus& corpus);

// TSV front end (header: code, term). Malformed rows fail with their line
// number.
ConceptDictionary build_dictionary_tsv(const std::string& path,
                                       const Corpus& corpus);

nlohmann::ordered_json dictionary_to_json(const ConceptDictionary& dict);
ConceptDictionary dictionary_from_json(const nlohmann::json& j);
void save_dictionary(const ConceptDictionary& dict, const std::string& path);
ConceptDictionary load_dictionary_json(const std::string& path);

// Checks the mutual invariants between a dictionary and its corpus
// (code/label alignment, non-empty synonym lists, concat_doc lengths).
// Throws on violation.
void validate_dictionary(const ConceptDictionary& dict, const Corpus& corpus);

}  // namespace mednorm
