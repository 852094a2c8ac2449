// Command-line front end for the concept-normalization pipeline:
//   ingest      TSV mentions -> corpus.json
//   build-dict  TSV code/term pairs -> dict.json (aligned to a corpus)
//   make-folds  leakage-free (or naive baseline) CV fold plan
//   featurize   per-fold similarity feature matrices
//   train       one fold's model -> checkpoint
//   evaluate    full cross-validation -> report.json
//   report      rendered tables + error dump from a report.json
//   sweep       a grid of configs -> consolidated accuracy table
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "mednorm/harness.hpp"
#include "mednorm/util.hpp"

namespace {

using namespace mednorm;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("short write to " + path);
}

// Shared --config loading plus the most common flag overrides.
struct ConfigArgs {
  std::string config_path;
  std::string encoder;
  int hidden_units = -1;
  int attention = -1;  // tri-state: unset/-1, 0, 1
  std::string strategy;
  int epochs = -1;
  int batch_size = -1;
  double learning_rate = -1.0;
  int max_len = -1;
  std::int64_t seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "Model/training config JSON (defaults when omitted)");
    cmd->add_option("--encoder", encoder, "Override: cnn|bilstm|bigru");
    cmd->add_option("--hidden-units", hidden_units, "Override: units per direction");
    cmd->add_flag("--attention{1},--no-attention{0}", attention,
                  "Override: attention on/off");
    cmd->add_option("--strategy", strategy,
                    "Override: tfidf_all|tfidf_max|w2v_all|none");
    cmd->add_option("--epochs", epochs, "Override: training epochs");
    cmd->add_option("--batch-size", batch_size, "Override: batch size");
    cmd->add_option("--learning-rate", learning_rate, "Override: learning rate");
    cmd->add_option("--max-len", max_len,
                    "Override: padding length (0 = auto percentile)");
    cmd->add_option("--seed", seed, "Override: training seed");
  }

  ModelConfig resolve() const {
    ModelConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (!encoder.empty()) cfg.encoder = encoder_from_string(encoder);
    if (hidden_units >= 0) cfg.hidden_units = hidden_units;
    if (attention >= 0) cfg.attention = attention != 0;
    if (!strategy.empty()) {
      if (strategy == "none")
        cfg.feature_strategy.reset();
      else
        cfg.feature_strategy = feature_strategy_from_string(strategy);
    }
    if (epochs >= 0) cfg.epochs = epochs;
    if (batch_size >= 0) cfg.batch_size = batch_size;
    if (learning_rate >= 0.0) cfg.learning_rate = learning_rate;
    if (max_len >= 0) cfg.max_len = max_len;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    return cfg;
  }
};

std::vector<TrainSample> samples_for_ids(
    const Corpus& corpus, const std::vector<std::string>& ids) {
  const std::unordered_set<std::string> wanted(ids.begin(), ids.end());
  std::vector<TrainSample> out;
  out.reserve(ids.size());
  // corpus order, so training order never depends on the fold file
  for (const auto& rec : corpus.records) {
    if (!wanted.count(rec.mention_id)) continue;
    TrainSample s;
    s.mention_id = rec.mention_id;
    s.tokens = rec.tokens;
    s.label = corpus.label_index.label_of(rec.code);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mednorm: medical concept normalization pipeline"};
  app.require_subcommand(1);

  // --- ingest ---------------------------------------------------------
  std::string in_path, out_path;
  auto* ingest = app.add_subcommand(
      "ingest", "Normalize a mention TSV into a corpus JSON");
  ingest->add_option("--input", in_path, "TSV: mention_id, document_id, text, code")
      ->required();
  ingest->add_option("--out", out_path, "Corpus JSON path")->required();
  ingest->callback([&] {
    const Corpus corpus = load_corpus_tsv(in_path);
    save_corpus(corpus, out_path);
    const CorpusStats& st = corpus.stats;
    std::printf(
        "ingested %zu mentions (%zu codes, %zu unique phrases); dropped %zu "
        "unmapped, %zu multi-code\n",
        st.total_mentions, st.unique_codes, st.unique_normalized_mentions,
        st.dropped_conceptless, st.dropped_ambiguous);
  });

  // --- build-dict -----------------------------------------------------
  std::string dict_in, dict_corpus, dict_out;
  auto* build_dict = app.add_subcommand(
      "build-dict", "Build a code->synonyms dictionary aligned to a corpus");
  build_dict->add_option("--input", dict_in, "TSV: code, term")->required();
  build_dict->add_option("--corpus", dict_corpus, "Corpus JSON")->required();
  build_dict->add_option("--out", dict_out, "Dictionary JSON path")->required();
  build_dict->callback([&] {
    const Corpus corpus = load_corpus_json(dict_corpus);
    const ConceptDictionary dict = build_dictionary_tsv(dict_in, corpus);
    save_dictionary(dict, dict_out);
    std::size_t terms = 0;
    for (const auto& syns : dict.synonyms) terms += syns.size();
    std::printf("dictionary: %d codes, %zu synonym terms\n", dict.num_codes(),
                terms);
  });

  // --- make-folds -----------------------------------------------------
  std::string folds_corpus, folds_out;
  int folds_k = 5;
  std::uint64_t folds_seed = 42;
  bool folds_naive = false;
  auto* make_folds_cmd = app.add_subcommand(
      "make-folds", "Build a leakage-free k-fold plan (or naive baseline)");
  make_folds_cmd->add_option("--corpus", folds_corpus, "Corpus JSON")->required();
  make_folds_cmd->add_option("--k", folds_k, "Fold count")->check(CLI::Range(2, 1000));
  make_folds_cmd->add_option("--seed", folds_seed, "Shuffle seed");
  make_folds_cmd->add_flag("--naive", folds_naive,
                           "Record-level shuffle split (for comparison only)");
  make_folds_cmd->add_option("--out", folds_out, "Fold plan JSON path")->required();
  make_folds_cmd->callback([&] {
    const Corpus corpus = load_corpus_json(folds_corpus);
    const FoldPlan plan = folds_naive
                              ? make_naive_folds(corpus, folds_k, folds_seed)
                              : make_folds(corpus, folds_k, folds_seed);
    save_fold_plan(plan, folds_out);
    std::size_t covered = 0;
    for (const auto& f : plan.folds) covered += f.size();
    std::printf("%s folds: k=%d, %zu mentions, train/test overlap %.4f\n",
                folds_naive ? "naive" : "grouped", plan.k, covered,
                leakage_rate(plan, corpus));
  });

  // --- featurize ------------------------------------------------------
  std::string feat_corpus, feat_dict, feat_folds, feat_emb, feat_strategy,
      feat_outdir;
  auto* featurize = app.add_subcommand(
      "featurize", "Write per-fold similarity feature matrices");
  featurize->add_option("--corpus", feat_corpus, "Corpus JSON")->required();
  featurize->add_option("--dict", feat_dict, "Dictionary JSON")->required();
  featurize->add_option("--folds", feat_folds, "Fold plan JSON")->required();
  featurize->add_option("--strategy", feat_strategy,
                        "tfidf_all|tfidf_max|w2v_all")
      ->required();
  featurize->add_option("--embeddings", feat_emb,
                        "Word embedding text file (w2v_all only)");
  featurize->add_option("--out-dir", feat_outdir, "Output directory")->required();
  featurize->callback([&] {
    const Corpus corpus = load_corpus_json(feat_corpus);
    const ConceptDictionary dict = load_dictionary_json(feat_dict);
    validate_dictionary(dict, corpus);
    const FoldPlan plan = load_fold_plan(feat_folds);
    validate_fold_plan(plan, corpus);
    const FeatureStrategy strategy = feature_strategy_from_string(feat_strategy);
    std::filesystem::create_directories(feat_outdir);

    std::unique_ptr<EmbeddingStore> store;
    if (strategy == FeatureStrategy::W2vAll) {
      if (feat_emb.empty()) throw Error("w2v_all needs --embeddings");
      store = std::make_unique<EmbeddingStore>(load_embeddings(feat_emb));
    }

    for (int fold = 0; fold < plan.k; ++fold) {
      std::vector<std::string> train_ids, test_ids;
      for (int other = 0; other < plan.k; ++other) {
        const auto& ids = plan.folds[static_cast<std::size_t>(other)];
        auto& dst = other == fold ? test_ids : train_ids;
        dst.insert(dst.end(), ids.begin(), ids.end());
      }
      const std::vector<TrainSample> train =
          samples_for_ids(corpus, train_ids);
      const std::vector<TrainSample> test = samples_for_ids(corpus, test_ids);

      std::unique_ptr<SimilarityFeaturizer> featurizer;
      if (strategy == FeatureStrategy::W2vAll) {
        featurizer = std::make_unique<SimilarityFeaturizer>(*store, dict);
      } else {
        std::vector<std::vector<std::string>> train_phrases;
        for (const auto& s : train) train_phrases.push_back(s.tokens);
        featurizer = std::make_unique<SimilarityFeaturizer>(
            strategy, fit_tfidf(dict, train_phrases), dict);
      }

      for (const char* split : {"train", "test"}) {
        const auto& samples = split == std::string("train") ? train : test;
        FeatureMatrix m;
        m.strategy = to_string(strategy);
        m.fold = fold;
        m.split = split;
        m.values.resize(static_cast<Eigen::Index>(samples.size()),
                        dict.num_codes());
        for (std::size_t i = 0; i < samples.size(); ++i) {
          m.mention_ids.push_back(samples[i].mention_id);
          m.values.row(static_cast<Eigen::Index>(i)) =
              featurizer->compute(samples[i].tokens).transpose();
        }
        const std::string path = feat_outdir + "/features_" +
                                 to_string(strategy) + "_fold" +
                                 std::to_string(fold) + "_" + split + ".bin";
        save_feature_matrix(m, path);
      }
      std::printf("fold %d: %zu train / %zu test rows\n", fold, train.size(),
                  test.size());
    }
  });

  // --- train ----------------------------------------------------------
  ConfigArgs train_cfg_args;
  std::string train_corpus, train_dict, train_folds, train_emb, train_out;
  int train_fold_id = 0;
  auto* train_cmd = app.add_subcommand(
      "train", "Train one fold's model and write a checkpoint");
  train_cfg_args.attach(train_cmd);
  train_cmd->add_option("--corpus", train_corpus, "Corpus JSON")->required();
  train_cmd->add_option("--dict", train_dict,
                        "Dictionary JSON (needed for similarity features)");
  train_cmd->add_option("--folds", train_folds, "Fold plan JSON")->required();
  train_cmd->add_option("--fold-id", train_fold_id, "Held-out fold index")
      ->required();
  train_cmd->add_option("--embeddings", train_emb, "Word embedding text file")
      ->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->callback([&] {
    const ModelConfig cfg = train_cfg_args.resolve();
    const Corpus corpus = load_corpus_json(train_corpus);
    const FoldPlan plan = load_fold_plan(train_folds);
    validate_fold_plan(plan, corpus);
    if (train_fold_id < 0 || train_fold_id >= plan.k)
      throw Error("--fold-id out of range for k=" + std::to_string(plan.k));
    const EmbeddingStore store = load_embeddings(train_emb);

    std::vector<std::string> train_ids;
    for (int other = 0; other < plan.k; ++other) {
      if (other == train_fold_id) continue;
      const auto& ids = plan.folds[static_cast<std::size_t>(other)];
      train_ids.insert(train_ids.end(), ids.begin(), ids.end());
    }
    std::vector<TrainSample> samples = samples_for_ids(corpus, train_ids);

    if (cfg.feature_strategy) {
      if (train_dict.empty())
        throw Error("similarity features need --dict");
      const ConceptDictionary dict = load_dictionary_json(train_dict);
      validate_dictionary(dict, corpus);
      std::unique_ptr<SimilarityFeaturizer> featurizer;
      if (*cfg.feature_strategy == FeatureStrategy::W2vAll) {
        featurizer = std::make_unique<SimilarityFeaturizer>(store, dict);
      } else {
        std::vector<std::vector<std::string>> train_phrases;
        for (const auto& s : samples) train_phrases.push_back(s.tokens);
        featurizer = std::make_unique<SimilarityFeaturizer>(
            *cfg.feature_strategy, fit_tfidf(dict, train_phrases), dict);
      }
      for (auto& s : samples) s.features = featurizer->compute(s.tokens);
    }

    TrainResult result = train_model(
        cfg, samples, store, static_cast<int>(corpus.label_index.size()));
    save_checkpoint(train_out, *result.model, corpus.label_index.codes());
    std::printf("fold %d: %zu samples, %zu epochs, final loss %.6f -> %s\n",
                train_fold_id, samples.size(), result.epoch_losses.size(),
                result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back(),
                train_out.c_str());
  });

  // --- evaluate -------------------------------------------------------
  ConfigArgs eval_cfg_args;
  std::string eval_corpus, eval_dict, eval_folds, eval_emb, eval_out;
  auto* evaluate = app.add_subcommand(
      "evaluate", "Cross-validate a config and write report.json");
  eval_cfg_args.attach(evaluate);
  evaluate->add_option("--corpus", eval_corpus, "Corpus JSON")->required();
  evaluate->add_option("--dict", eval_dict, "Dictionary JSON")->required();
  evaluate->add_option("--folds", eval_folds, "Fold plan JSON")->required();
  evaluate->add_option("--embeddings", eval_emb, "Word embedding text file")
      ->required();
  evaluate->add_option("--out", eval_out, "Report JSON path")->required();
  evaluate->callback([&] {
    const ModelConfig cfg = eval_cfg_args.resolve();
    const Corpus corpus = load_corpus_json(eval_corpus);
    const ConceptDictionary dict = load_dictionary_json(eval_dict);
    const FoldPlan plan = load_fold_plan(eval_folds);
    const EmbeddingStore store = load_embeddings(eval_emb);
    CvResult cv = evaluate_cv(cfg, corpus, dict, plan, store);
    ReportFile rf;
    rf.config = cfg;
    rf.config.num_classes = static_cast<int>(corpus.label_index.size());
    rf.config.embedding_dim = store.dim();
    rf.k = plan.k;
    rf.seed = plan.seed;
    rf.cv = std::move(cv);
    save_report(rf, eval_out);
    std::printf("mean accuracy %.4f, pooled %.4f over %zu mentions -> %s\n",
                rf.cv.report.mean_accuracy, rf.cv.report.pooled_accuracy,
                rf.cv.predictions.size(), eval_out.c_str());
  });

  // --- report ---------------------------------------------------------
  std::string rep_in, rep_corpus, rep_dict, rep_by_length, rep_errors;
  std::size_t rep_limit = 50;
  auto* report_cmd = app.add_subcommand(
      "report", "Render length-bin table and error dump from a report.json");
  report_cmd->add_option("--report", rep_in, "report.json from evaluate")
      ->required();
  report_cmd->add_option("--corpus", rep_corpus, "Corpus JSON")->required();
  report_cmd->add_option("--dict", rep_dict, "Dictionary JSON")->required();
  report_cmd->add_option("--by-length", rep_by_length,
                         "Write length-binned accuracy markdown here");
  report_cmd->add_option("--errors", rep_errors, "Write mismatch TSV here");
  report_cmd->add_option("--limit", rep_limit, "Max mismatches in the TSV");
  report_cmd->callback([&] {
    const ReportFile rf = load_report(rep_in);
    const Corpus corpus = load_corpus_json(rep_corpus);
    const ConceptDictionary dict = load_dictionary_json(rep_dict);
    if (!rep_by_length.empty())
      write_text_file(rep_by_length, render_by_length(rf.cv.report));
    if (!rep_errors.empty())
      write_text_file(rep_errors, render_errors_tsv(dump_errors(
                                      rf.cv.predictions, corpus, dict,
                                      rep_limit)));
    std::printf("%s", render_by_length(rf.cv.report).c_str());
  });

  // --- sweep ----------------------------------------------------------
  std::string sweep_grid, sweep_corpus, sweep_dict, sweep_folds, sweep_emb,
      sweep_out;
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Evaluate a config grid and write a consolidated table");
  sweep_cmd->add_option("--grid", sweep_grid,
                        "Grid JSON: {\"base\": config, \"rows\": [overrides]}")
      ->required();
  sweep_cmd->add_option("--corpus", sweep_corpus, "Corpus JSON")->required();
  sweep_cmd->add_option("--dict", sweep_dict, "Dictionary JSON")->required();
  sweep_cmd->add_option("--folds", sweep_folds, "Fold plan JSON")->required();
  sweep_cmd->add_option("--embeddings", sweep_emb, "Word embedding text file")
      ->required();
  sweep_cmd->add_option("--out", sweep_out, "Markdown table path")->required();
  sweep_cmd->callback([&] {
    const Corpus corpus = load_corpus_json(sweep_corpus);
    const ConceptDictionary dict = load_dictionary_json(sweep_dict);
    const FoldPlan plan = load_fold_plan(sweep_folds);
    const EmbeddingStore store = load_embeddings(sweep_emb);
    const std::vector<SweepRowResult> rows =
        run_sweep(read_json_file(sweep_grid), corpus, dict, plan, store);
    const std::string table = render_table1(rows);
    write_text_file(sweep_out, table);
    std::printf("%s", table.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
