#include "mednorm/dictionary.hpp"

#include <fstream>
#include <map>
#include <numeric>

namespace mednorm {

ConceptDictionary build_dictionary(
    const std::vector<std::pair<std::string, std::string>>& rows,
    const Corpus& corpus) {
  const int num_codes = corpus.label_index.size();
  ConceptDictionary dict;
  dict.codes = corpus.label_index.codes();
  dict.synonyms.resize(static_cast<std::size_t>(num_codes));
  dict.concat_docs.resize(static_cast<std::size_t>(num_codes));

  for (const auto& [code, term] : rows) {
    if (!corpus.label_index.contains(code)) continue;
    auto tokens = normalize_text(term);
    if (tokens.empty()) continue;  // symbol-only term, nothing to match on
    const auto label =
        static_cast<std::size_t>(corpus.label_index.label_of(code));
    dict.synonyms[label].push_back(std::move(tokens));
  }

  // Fallback for codes the source export does not cover: the code's most
  // frequent normalized corpus phrase (earliest first occurrence wins ties).
  for (std::size_t label = 0; label < dict.synonyms.size(); ++label) {
    if (!dict.synonyms[label].empty()) continue;
    const std::string& code = dict.codes[label];
    std::map<std::string, std::size_t> counts;
    std::map<std::string, std::size_t> first_pos;
    std::map<std::string, std::vector<std::string>> tokens_of;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
      const auto& rec = corpus.records[i];
      if (rec.code != code) continue;
      const std::string phrase = join(rec.tokens, " ");
      if (counts.emplace(phrase, 0).second) {
        first_pos[phrase] = i;
        tokens_of[phrase] = rec.tokens;
      }
      ++counts[phrase];
    }
    // Every code in label_index occurs in at least one record.
    std::string best;
    std::size_t best_count = 0;
    for (const auto& [phrase, count] : counts) {
      if (count > best_count ||
          (count == best_count && first_pos[phrase] < first_pos[best])) {
        best = phrase;
        best_count = count;
      }
    }
    dict.synonyms[label].push_back(tokens_of[best]);
  }

  for (std::size_t label = 0; label < dict.synonyms.size(); ++label) {
    auto& doc = dict.concat_docs[label];
    for (const auto& term : dict.synonyms[label]) {
      doc.insert(doc.end(), term.begin(), term.end());
    }
  }
  return dict;
}

ConceptDictionary build_dictionary_tsv(const std::string& path,
                                       const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dictionary file: " + path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (split(line, '\t') != std::vector<std::string>{"code", "term"})
        throw Error(path + ": line 1: expected header 'code\\tterm'");
      continue;
    }
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2)
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": expected 2 tab-separated fields, got " +
                  std::to_string(fields.size()));
    if (fields[0].empty())
      throw Error(path + ": line " + std::to_string(line_no) + ": empty code");
    rows.emplace_back(std::move(fields[0]), std::move(fields[1]));
  }
  return build_dictionary(rows, corpus);
}

nlohmann::ordered_json dictionary_to_json(const ConceptDictionary& dict) {
  nlohmann::ordered_json j;
  j["schema"] = "mednorm-dict-v1";
  j["codes"] = dict.codes;
  j["synonyms"] = dict.synonyms;
  return j;
}

ConceptDictionary dictionary_from_json(const nlohmann::json& j) {
  ConceptDictionary dict;
  dict.codes = j.at("codes").get<std::vector<std::string>>();
  dict.synonyms =
      j.at("synonyms")
          .get<std::vector<std::vector<std::vector<std::string>>>>();
  if (dict.codes.size() != dict.synonyms.size())
    throw Error("dictionary json: codes/synonyms size mismatch");
  dict.concat_docs.resize(dict.codes.size());
  for (std::size_t label = 0; label < dict.synonyms.size(); ++label) {
    if (dict.synonyms[label].empty())
      throw Error("dictionary json: code '" + dict.codes[label] +
                  "' has no synonyms");
    for (const auto& term : dict.synonyms[label]) {
      if (term.empty())
        throw Error("dictionary json: code '" + dict.codes[label] +
                    "' has an empty term");
      auto& doc = dict.concat_docs[label];
      doc.insert(doc.end(), term.begin(), term.end());
    }
  }
  return dict;
}

void save_dictionary(const ConceptDictionary& dict, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dictionary file: " + path);
  out << dictionary_to_json(dict).dump(2) << '\n';
}

ConceptDictionary load_dictionary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dictionary file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  try {
    return dictionary_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

void validate_dictionary(const ConceptDictionary& dict, const Corpus& corpus) {
  if (dict.num_codes() != corpus.label_index.size())
    throw Error("dictionary/corpus code count mismatch");
  for (int label = 0; label < dict.num_codes(); ++label) {
    const auto i = static_cast<std::size_t>(label);
    if (dict.codes[i] != corpus.label_index.code_of(label))
      throw Error("dictionary code order diverges from label_index at label " +
                  std::to_string(label));
    if (dict.synonyms[i].empty())
      throw Error("code '" + dict.codes[i] + "' has no synonyms");
    std::size_t total = 0;
    for (const auto& term : dict.synonyms[i]) {
      if (term.empty())
        throw Error("code '" + dict.codes[i] + "' has an empty term");
      total += term.size();
    }
    if (dict.concat_docs[i].size() != total)
      throw Error("code '" + dict.codes[i] +
                  "': concat_doc length does not match synonym lengths");
  }
}

}  // namespace mednorm
