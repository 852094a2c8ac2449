#include "mednorm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mednorm {

namespace {

// Decodes one UTF-8 codepoint starting at i; advances i. Malformed bytes
// decode to U+FFFD one byte at a time so the scan always terminates.
std::uint32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) {
    return static_cast<std::uint8_t>(s[k]);
  };
  const std::uint8_t b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  std::uint32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const std::uint8_t bk = byte(i + k);
    if ((bk & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  i += len;
  return cp;
}

void encode_utf8(std::uint32_t cp, std::string& out) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_whitespace_cp(std::uint32_t cp) {
  switch (cp) {
    case ' ':
    case '\t':
    case '\n':
    case '\r':
    case '\f':
    case '\v':
    case 0x00A0:  // no-break space
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:  // ideographic space
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Punctuation classifier covering ASCII plus the Unicode blocks that show
// up in scraped review text (general/supplemental punctuation, CJK
// punctuation, fullwidth forms, Latin-1 signs). Anything not classified
// as whitespace or punctuation is treated as a word character.
bool is_punct_cp(std::uint32_t cp) {
  if (cp < 0x80) {
    const bool alnum =
        (cp >= 'a' && cp <= 'z') || (cp >= '0' && cp <= '9');
    return !alnum;  // input is lowercased before classification
  }
  if (cp >= 0x00A1 && cp <= 0x00BF) return true;
  if (cp >= 0x2000 && cp <= 0x206F) return !is_whitespace_cp(cp);
  if (cp >= 0x2E00 && cp <= 0x2E7F) return true;
  if (cp >= 0x3001 && cp <= 0x303F) return true;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;
  return cp == 0xFFFD;
}

bool is_word_cp(std::uint32_t cp) {
  return !is_whitespace_cp(cp) && !is_punct_cp(cp) && cp != '\'' &&
         cp != '-';
}

}  // namespace

std::vector<std::string> normalize_text(std::string_view raw) {
  // Decode, lowercase ASCII, fold curly apostrophes.
  std::vector<std::uint32_t> cps;
  cps.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    std::uint32_t cp = decode_utf8(raw, i);
    if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
    if (cp == 0x2019) cp = '\'';  // right single quotation mark
    cps.push_back(cp);
  }

  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (std::size_t k = 0; k < cps.size(); ++k) {
    const std::uint32_t cp = cps[k];
    if (cp == '\'' || cp == '-') {
      // Intra-word only: both neighbours must be word characters.
      const bool prev_ok = k > 0 && is_word_cp(cps[k - 1]);
      const bool next_ok = k + 1 < cps.size() && is_word_cp(cps[k + 1]);
      if (prev_ok && next_ok) {
        encode_utf8(cp, current);
      } else {
        flush();
      }
    } else if (is_whitespace_cp(cp) || is_punct_cp(cp)) {
      flush();
    } else {
      encode_utf8(cp, current);
    }
  }
  flush();
  return tokens;
}

int LabelIndex::insert(const std::string& code) {
  auto it = index_.find(code);
  if (it != index_.end()) return it->second;
  const int label = static_cast<int>(codes_.size());
  codes_.push_back(code);
  index_.emplace(code, label);
  return label;
}

int LabelIndex::label_of(const std::string& code) const {
  auto it = index_.find(code);
  if (it == index_.end()) throw Error("unknown code: " + code);
  return it->second;
}

bool LabelIndex::contains(const std::string& code) const {
  return index_.count(code) != 0;
}

const std::string& LabelIndex::code_of(int label) const {
  if (label < 0 || label >= size())
    throw Error("label out of range: " + std::to_string(label));
  return codes_[static_cast<std::size_t>(label)];
}

void Corpus::rebuild_lookup() {
  by_id_.clear();
  by_id_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_id_.emplace(records[i].mention_id, i);
  }
}

const MentionRecord& Corpus::record_by_id(const std::string& mention_id) const {
  auto it = by_id_.find(mention_id);
  if (it == by_id_.end()) throw Error("unknown mention_id: " + mention_id);
  return records[it->second];
}

bool Corpus::has_record(const std::string& mention_id) const {
  return by_id_.count(mention_id) != 0;
}

std::size_t Corpus::position_of(const std::string& mention_id) const {
  auto it = by_id_.find(mention_id);
  if (it == by_id_.end()) throw Error("unknown mention_id: " + mention_id);
  return it->second;
}

namespace {

constexpr const char* kConceptLess = "CONCEPT_LESS";

Corpus build_from_rows(
    const std::vector<std::array<std::string, 4>>& rows,
    const std::vector<std::size_t>* line_numbers) {
  const auto where = [&](std::size_t i) {
    if (line_numbers) return "line " + std::to_string((*line_numbers)[i]);
    return "row " + std::to_string(i);
  };

  Corpus corpus;
  std::set<std::string> phrases;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [id, doc, text, code] = rows[i];
    if (id.empty()) throw Error("empty mention_id at " + where(i));
    if (code.empty()) throw Error("empty code at " + where(i));
    if (code == kConceptLess) {
      ++corpus.stats.dropped_conceptless;
      continue;
    }
    if (code.find('+') != std::string::npos) {
      ++corpus.stats.dropped_ambiguous;
      continue;
    }
    MentionRecord rec;
    rec.mention_id = id;
    rec.source_doc = doc;
    rec.raw_text = text;
    rec.tokens = normalize_text(text);
    rec.code = code;
    if (rec.tokens.empty())
      throw Error("text normalizes to zero tokens at " + where(i));
    if (!ids.insert(rec.mention_id).second)
      throw Error("duplicate mention_id '" + rec.mention_id + "' at " +
                  where(i));
    corpus.label_index.insert(rec.code);
    phrases.insert(join(rec.tokens, " "));
    corpus.records.push_back(std::move(rec));
  }
  corpus.rebuild_lookup();
  corpus.stats.total_mentions = corpus.records.size();
  corpus.stats.unique_codes =
      static_cast<std::size_t>(corpus.label_index.size());
  corpus.stats.unique_normalized_mentions = phrases.size();
  return corpus;
}

}  // namespace

Corpus build_corpus(const std::vector<std::array<std::string, 4>>& rows) {
  return build_from_rows(rows, nullptr);
}

Corpus load_corpus_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::array<std::string, 4>> rows;
  std::vector<std::size_t> line_numbers;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      const auto header = split(line, '\t');
      const std::vector<std::string> expected = {"mention_id", "document_id",
                                                 "text", "code"};
      if (std::vector<std::string>(header.begin(), header.end()) != expected)
        throw Error(path + ": line 1: expected header "
                    "'mention_id\\tdocument_id\\ttext\\tcode'");
      continue;
    }
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4)
      throw Error(path + ": line " + std::to_string(line_no) + ": expected 4 "
                  "tab-separated fields, got " +
                  std::to_string(fields.size()));
    rows.push_back({std::move(fields[0]), std::move(fields[1]),
                    std::move(fields[2]), std::move(fields[3])});
    line_numbers.push_back(line_no);
  }
  try {
    return build_from_rows(rows, &line_numbers);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string dedup_key(const MentionRecord& record) {
  return join(record.tokens, " ") + "|" + record.code;
}

nlohmann::ordered_json corpus_to_json(const Corpus& corpus) {
  nlohmann::ordered_json j;
  j["schema"] = "mednorm-corpus-v1";
  auto& recs = j["records"];
  recs = nlohmann::ordered_json::array();
  for (const auto& r : corpus.records) {
    recs.push_back({{"mention_id", r.mention_id},
                    {"document_id", r.source_doc},
                    {"text", r.raw_text},
                    {"tokens", r.tokens},
                    {"code", r.code}});
  }
  j["label_index"] = corpus.label_index.codes();
  j["stats"] = {{"total_mentions", corpus.stats.total_mentions},
                {"unique_codes", corpus.stats.unique_codes},
                {"unique_normalized_mentions",
                 corpus.stats.unique_normalized_mentions},
                {"dropped_conceptless", corpus.stats.dropped_conceptless},
                {"dropped_ambiguous", corpus.stats.dropped_ambiguous}};
  return j;
}

Corpus corpus_from_json(const nlohmann::json& j) {
  Corpus corpus;
  std::set<std::string> phrases;
  std::set<std::string> ids;
  for (const auto& r : j.at("records")) {
    MentionRecord rec;
    rec.mention_id = r.at("mention_id").get<std::string>();
    rec.source_doc = r.at("document_id").get<std::string>();
    rec.raw_text = r.at("text").get<std::string>();
    rec.tokens = r.at("tokens").get<std::vector<std::string>>();
    rec.code = r.at("code").get<std::string>();
    if (rec.tokens.empty())
      throw Error("corpus json: record '" + rec.mention_id +
                  "' has no tokens");
    if (rec.tokens != normalize_text(rec.raw_text))
      throw Error("corpus json: tokens of '" + rec.mention_id +
                  "' do not match normalize_text(text)");
    if (!ids.insert(rec.mention_id).second)
      throw Error("corpus json: duplicate mention_id '" + rec.mention_id +
                  "'");
    phrases.insert(join(rec.tokens, " "));
    corpus.records.push_back(std::move(rec));
  }
  corpus.rebuild_lookup();
  for (const auto& code : j.at("label_index")) {
    corpus.label_index.insert(code.get<std::string>());
  }
  // label_index must cover exactly the codes present in records.
  std::set<std::string> seen;
  for (const auto& r : corpus.records) {
    if (!corpus.label_index.contains(r.code))
      throw Error("corpus json: code '" + r.code + "' missing from label_index");
    seen.insert(r.code);
  }
  if (seen.size() != static_cast<std::size_t>(corpus.label_index.size()))
    throw Error("corpus json: label_index lists codes absent from records");
  const auto& st = j.at("stats");
  corpus.stats.total_mentions = st.at("total_mentions").get<std::size_t>();
  corpus.stats.unique_codes = st.at("unique_codes").get<std::size_t>();
  corpus.stats.unique_normalized_mentions =
      st.at("unique_normalized_mentions").get<std::size_t>();
  corpus.stats.dropped_conceptless =
      st.value("dropped_conceptless", std::size_t{0});
  corpus.stats.dropped_ambiguous =
      st.value("dropped_ambiguous", std::size_t{0});
  if (corpus.stats.total_mentions != corpus.records.size())
    throw Error("corpus json: stats.total_mentions mismatch");
  if (corpus.stats.unique_codes !=
      static_cast<std::size_t>(corpus.label_index.size()))
    throw Error("corpus json: stats.unique_codes mismatch");
  if (corpus.stats.unique_normalized_mentions != phrases.size())
    throw Error("corpus json: stats.unique_normalized_mentions mismatch");
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path);
  out << corpus_to_json(corpus).dump(2) << '\n';
}

Corpus load_corpus_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  try {
    return corpus_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace mednorm
