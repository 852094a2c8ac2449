#include "mednorm/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <unordered_set>

#include "mednorm/util.hpp"

namespace mednorm {

namespace {

// Per-fold training seeds come from this stream of the config seed.
constexpr std::uint64_t kFoldSeedStream = 1000;

const std::array<const char*, 6> kLengthBins = {"1", "2", "3",
                                                "4", "5", "6+"};

std::string bin_of(int length) {
  return length >= 6 ? "6+" : std::to_string(length);
}

std::string first_term_of(const ConceptDictionary& dict, const Corpus& corpus,
                          const std::string& code) {
  const int label = corpus.label_index.label_of(code);
  const auto& terms = dict.synonyms[static_cast<std::size_t>(label)];
  if (terms.empty()) return "";
  return join(terms.front(), " ");
}

TrainSample sample_of(const MentionRecord& rec, const LabelIndex& labels) {
  TrainSample s;
  s.mention_id = rec.mention_id;
  s.tokens = rec.tokens;
  s.label = labels.label_of(rec.code);
  return s;
}

}  // namespace

std::map<std::string, LengthBin> report_by_length(
    const std::vector<CvPrediction>& predictions) {
  std::map<std::string, LengthBin> bins;
  std::map<std::string, long> hits;
  for (const char* key : kLengthBins) {
    bins[key] = LengthBin{};
    hits[key] = 0;
  }
  for (const auto& p : predictions) {
    const std::string key = bin_of(p.length);
    ++bins[key].count;
    if (p.predicted_code == p.gold_code) ++hits[key];
  }
  for (const char* key : kLengthBins) {
    LengthBin& b = bins[key];
    if (b.count > 0)
      b.accuracy = static_cast<double>(hits[key]) /
                   static_cast<double>(b.count);
  }
  return bins;
}

std::vector<ErrorEntry> dump_errors(
    const std::vector<CvPrediction>& predictions, const Corpus& corpus,
    const ConceptDictionary& dict, std::size_t limit) {
  std::vector<const CvPrediction*> misses;
  for (const auto& p : predictions) {
    if (p.predicted_code != p.gold_code) misses.push_back(&p);
  }
  std::sort(misses.begin(), misses.end(),
            [&](const CvPrediction* a, const CvPrediction* b) {
              return corpus.position_of(a->mention_id) <
                     corpus.position_of(b->mention_id);
            });
  if (misses.size() > limit) misses.resize(limit);
  std::vector<ErrorEntry> out;
  out.reserve(misses.size());
  for (const CvPrediction* p : misses) {
    ErrorEntry e;
    e.mention_id = p->mention_id;
    e.mention_text = corpus.record_by_id(p->mention_id).raw_text;
    e.predicted_code = p->predicted_code;
    e.predicted_term = first_term_of(dict, corpus, p->predicted_code);
    e.gold_code = p->gold_code;
    e.gold_term = first_term_of(dict, corpus, p->gold_code);
    out.push_back(std::move(e));
  }
  return out;
}

EvalReport recount_report(const std::vector<CvPrediction>& predictions,
                          const Corpus& corpus) {
  EvalReport report;
  std::map<int, std::pair<long, long>> fold_counts;  // fold → (hits, total)
  long hits = 0;
  for (const auto& p : predictions) {
    auto& fc = fold_counts[p.fold];
    ++fc.second;
    if (p.predicted_code == p.gold_code) {
      ++fc.first;
      ++hits;
    }
  }
  for (const auto& [fold, fc] : fold_counts) {
    report.per_fold_accuracy.push_back(static_cast<double>(fc.first) /
                                       static_cast<double>(fc.second));
  }
  if (!report.per_fold_accuracy.empty()) {
    double sum = 0.0;
    for (double a : report.per_fold_accuracy) sum += a;
    report.mean_accuracy =
        sum / static_cast<double>(report.per_fold_accuracy.size());
  }
  if (!predictions.empty())
    report.pooled_accuracy =
        static_cast<double>(hits) / static_cast<double>(predictions.size());
  report.by_length = report_by_length(predictions);
  std::vector<const CvPrediction*> ordered;
  for (const auto& p : predictions) {
    if (p.predicted_code != p.gold_code) ordered.push_back(&p);
  }
  std::sort(ordered.begin(), ordered.end(),
            [&](const CvPrediction* a, const CvPrediction* b) {
              return corpus.position_of(a->mention_id) <
                     corpus.position_of(b->mention_id);
            });
  for (const CvPrediction* p : ordered) {
    report.errors.push_back({corpus.record_by_id(p->mention_id).raw_text,
                             p->predicted_code, p->gold_code});
  }
  return report;
}

CvResult evaluate_cv(const ModelConfig& cfg, const Corpus& corpus,
                     const ConceptDictionary& dict, const FoldPlan& plan,
                     const EmbeddingStore& store) {
  // Fail on any wiring problem before the first fold trains.
  validate_fold_plan(plan, corpus);
  if (plan.k < 2) throw Error("evaluate_cv: need k >= 2 folds");
  validate_dictionary(dict, corpus);
  if (cfg.feature_strategy == FeatureStrategy::W2vAll && store.dim() < 1)
    throw Error("evaluate_cv: w2v_all needs a non-empty embedding store");
  {
    ModelConfig probe = cfg;  // surfaces config errors (cnn+attention, ...)
    probe.num_classes = 0;
    probe.max_len = std::max(probe.max_len, 0);
    probe.validate();
  }

  const int num_classes = static_cast<int>(corpus.label_index.size());
  CvResult result;

  for (int fold = 0; fold < plan.k; ++fold) {
    const auto& test_ids = plan.folds[static_cast<std::size_t>(fold)];
    if (test_ids.empty()) continue;
    std::unordered_set<std::string> test_set(test_ids.begin(),
                                             test_ids.end());
    std::unordered_set<std::string> in_plan = test_set;
    for (int other = 0; other < plan.k; ++other) {
      if (other == fold) continue;
      for (const auto& id : plan.folds[static_cast<std::size_t>(other)])
        in_plan.insert(id);
    }

    // Corpus order keeps training deterministic whatever order the fold
    // file lists ids in.
    std::vector<TrainSample> train_samples;
    std::vector<TrainSample> test_samples;
    for (const auto& rec : corpus.records) {
      if (!in_plan.count(rec.mention_id)) continue;  // dropped duplicate
      if (test_set.count(rec.mention_id)) {
        test_samples.push_back(sample_of(rec, corpus.label_index));
      } else {
        train_samples.push_back(sample_of(rec, corpus.label_index));
      }
    }
    if (train_samples.empty())
      throw Error("evaluate_cv: fold " + std::to_string(fold) +
                  " has an empty train split");

    // Similarity features; the tf-idf transform sees only train phrases.
    if (cfg.feature_strategy) {
      std::unique_ptr<SimilarityFeaturizer> featurizer;
      if (*cfg.feature_strategy == FeatureStrategy::W2vAll) {
        featurizer = std::make_unique<SimilarityFeaturizer>(store, dict);
      } else {
        std::vector<std::vector<std::string>> train_phrases;
        train_phrases.reserve(train_samples.size());
        for (const auto& s : train_samples) train_phrases.push_back(s.tokens);
        featurizer = std::make_unique<SimilarityFeaturizer>(
            *cfg.feature_strategy, fit_tfidf(dict, train_phrases), dict);
      }
      for (auto& s : train_samples) s.features = featurizer->compute(s.tokens);
      for (auto& s : test_samples) s.features = featurizer->compute(s.tokens);
    }

    ModelConfig fold_cfg = cfg;
    fold_cfg.seed =
        mix_seed(cfg.seed, kFoldSeedStream + static_cast<std::uint64_t>(fold));
    TrainResult trained =
        train_model(fold_cfg, train_samples, store, num_classes);

    const std::vector<Prediction> preds =
        predict(*trained.model, store, test_samples);
    long hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const TrainSample& s = test_samples[i];
      CvPrediction cp;
      cp.mention_id = s.mention_id;
      cp.fold = fold;
      cp.gold_code = corpus.label_index.code_of(s.label);
      cp.predicted_code = corpus.label_index.code_of(preds[i].label);
      cp.probability = preds[i].probability;
      cp.length = static_cast<int>(s.tokens.size());
      if (cp.predicted_code == cp.gold_code) ++hits;
      result.predictions.push_back(std::move(cp));
    }
    result.report.per_fold_accuracy.push_back(
        static_cast<double>(hits) / static_cast<double>(preds.size()));
  }

  if (result.predictions.empty())
    throw Error("evaluate_cv: fold plan yields no test mentions");

  std::sort(result.predictions.begin(), result.predictions.end(),
            [&](const CvPrediction& a, const CvPrediction& b) {
              return corpus.position_of(a.mention_id) <
                     corpus.position_of(b.mention_id);
            });

  double sum = 0.0;
  for (double a : result.report.per_fold_accuracy) sum += a;
  result.report.mean_accuracy =
      sum / static_cast<double>(result.report.per_fold_accuracy.size());
  long hits = 0;
  for (const auto& p : result.predictions) {
    if (p.predicted_code == p.gold_code) ++hits;
  }
  result.report.pooled_accuracy = static_cast<double>(hits) /
                                  static_cast<double>(result.predictions.size());
  result.report.by_length = report_by_length(result.predictions);
  for (const auto& p : result.predictions) {
    if (p.predicted_code != p.gold_code) {
      result.report.errors.push_back(
          {corpus.record_by_id(p.mention_id).raw_text, p.predicted_code,
           p.gold_code});
    }
  }
  return result;
}

nlohmann::ordered_json report_file_to_json(const ReportFile& rf) {
  nlohmann::ordered_json j;
  j["schema"] = "mednorm-report-v1";
  j["config"] = config_to_json(rf.config);
  j["k"] = rf.k;
  j["seed"] = rf.seed;
  j["per_fold_accuracy"] = rf.cv.report.per_fold_accuracy;
  j["mean_accuracy"] = rf.cv.report.mean_accuracy;
  j["pooled_accuracy"] = rf.cv.report.pooled_accuracy;
  nlohmann::ordered_json by_length;
  for (const auto& [key, bin] : rf.cv.report.by_length) {
    nlohmann::ordered_json b;
    b["count"] = bin.count;
    b["accuracy"] = bin.accuracy ? nlohmann::ordered_json(*bin.accuracy)
                                 : nlohmann::ordered_json(nullptr);
    by_length[key] = b;
  }
  j["by_length"] = by_length;
  j["errors"] = rf.cv.report.errors;
  nlohmann::ordered_json preds = nlohmann::ordered_json::array();
  for (const auto& p : rf.cv.predictions) {
    preds.push_back({{"mention_id", p.mention_id},
                     {"fold", p.fold},
                     {"gold_code", p.gold_code},
                     {"predicted_code", p.predicted_code},
                     {"probability", p.probability},
                     {"length", p.length}});
  }
  j["predictions"] = preds;
  return j;
}

ReportFile report_file_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "mednorm-report-v1")
    throw Error("report: unsupported schema");
  ReportFile rf;
  try {
    rf.config = config_from_json(j.at("config"));
    rf.k = j.at("k").get<int>();
    rf.seed = j.at("seed").get<std::uint64_t>();
    rf.cv.report.per_fold_accuracy =
        j.at("per_fold_accuracy").get<std::vector<double>>();
    rf.cv.report.mean_accuracy = j.at("mean_accuracy").get<double>();
    rf.cv.report.pooled_accuracy = j.at("pooled_accuracy").get<double>();
    for (const auto& [key, b] : j.at("by_length").items()) {
      LengthBin bin;
      bin.count = b.at("count").get<long>();
      if (!b.at("accuracy").is_null())
        bin.accuracy = b.at("accuracy").get<double>();
      rf.cv.report.by_length[key] = bin;
    }
    rf.cv.report.errors =
        j.at("errors").get<std::vector<std::array<std::string, 3>>>();
    for (const auto& p : j.at("predictions")) {
      CvPrediction cp;
      cp.mention_id = p.at("mention_id").get<std::string>();
      cp.fold = p.at("fold").get<int>();
      cp.gold_code = p.at("gold_code").get<std::string>();
      cp.predicted_code = p.at("predicted_code").get<std::string>();
      cp.probability = p.at("probability").get<double>();
      cp.length = p.at("length").get<int>();
      rf.cv.predictions.push_back(std::move(cp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("report: invalid JSON structure: ") + e.what());
  }
  return rf;
}

void save_report(const ReportFile& rf, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report: " + path);
  out << report_file_to_json(rf).dump(2) << "\n";
  if (!out) throw Error("short write to report: " + path);
}

ReportFile load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  return report_file_from_json(j);
}

std::vector<SweepRowResult> run_sweep(const nlohmann::json& grid,
                                      const Corpus& corpus,
                                      const ConceptDictionary& dict,
                                      const FoldPlan& plan,
                                      const EmbeddingStore& store) {
  if (!grid.contains("rows") || !grid.at("rows").is_array())
    throw Error("sweep grid: missing 'rows' array");
  nlohmann::json base = grid.value("base", nlohmann::json::object());
  std::vector<SweepRowResult> out;
  for (const auto& row : grid.at("rows")) {
    nlohmann::json merged = base;
    merged.update(row);
    const ModelConfig cfg = config_from_json(merged);
    const CvResult cv = evaluate_cv(cfg, corpus, dict, plan, store);
    SweepRowResult r;
    r.config = cfg;
    r.config.num_classes = static_cast<int>(corpus.label_index.size());
    r.mean_accuracy = cv.report.mean_accuracy;
    r.pooled_accuracy = cv.report.pooled_accuracy;
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

std::string row_label(const ModelConfig& cfg) {
  std::string label = to_string(cfg.encoder);
  if (cfg.attention) label += "+attention";
  return label;
}

}  // namespace

std::string render_table1(const std::vector<SweepRowResult>& rows) {
  std::string out;
  out += "| Model | Units | Features | Mean acc. (%) | Pooled acc. (%) |\n";
  out += "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const std::string units = r.config.encoder == EncoderKind::Cnn
                                  ? std::to_string(r.config.feature_maps) + " maps"
                                  : std::to_string(r.config.hidden_units);
    const std::string feats =
        r.config.feature_strategy ? to_string(*r.config.feature_strategy) : "-";
    out += "| " + row_label(r.config) + " | " + units + " | " + feats + " | " +
           pct(r.mean_accuracy) + " | " + pct(r.pooled_accuracy) + " |\n";
  }
  return out;
}

std::string render_by_length(const EvalReport& report) {
  std::string out;
  out += "| Length | Mentions | Accuracy (%) |\n";
  out += "|---|---|---|\n";
  for (const char* key : kLengthBins) {
    const auto it = report.by_length.find(key);
    const LengthBin bin = it == report.by_length.end() ? LengthBin{} : it->second;
    out += std::string("| ") + key + " | " + std::to_string(bin.count) +
           " | " + (bin.accuracy ? pct(*bin.accuracy) : std::string("-")) +
           " |\n";
  }
  return out;
}

std::string render_errors_tsv(const std::vector<ErrorEntry>& errors) {
  std::string out =
      "mention_id\tmention\tpredicted_code\tpredicted_term\tgold_code\tgold_"
      "term\n";
  for (const auto& e : errors) {
    out += e.mention_id + "\t" + e.mention_text + "\t" + e.predicted_code +
           "\t" + e.predicted_term + "\t" + e.gold_code + "\t" + e.gold_term +
           "\n";
  }
  return out;
}

}  // namespace mednorm
