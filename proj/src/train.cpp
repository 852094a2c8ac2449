#include "mednorm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mednorm/util.hpp"

namespace mednorm {

namespace {

// Seed-stream tags so the dev carve and each epoch's shuffle draw from
// independent deterministic streams of the one configured seed.
constexpr std::uint64_t kDevStream = 1;
constexpr std::uint64_t kEpochStreamBase = 2;

struct AdamState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
};

void check_samples(const std::vector<TrainSample>& samples,
                   const ModelConfig& cfg) {
  if (samples.empty()) throw Error("train: empty sample list");
  const Eigen::Index want_features =
      cfg.feature_strategy ? cfg.num_classes : 0;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= cfg.num_classes)
      throw Error("train: sample '" + s.mention_id + "' has label " +
                  std::to_string(s.label) + " outside [0, " +
                  std::to_string(cfg.num_classes) + ")");
    if (s.tokens.empty())
      throw Error("train: sample '" + s.mention_id + "' has no tokens");
    if (s.features.size() != want_features)
      throw Error("train: sample '" + s.mention_id + "' carries " +
                  std::to_string(s.features.size()) +
                  " features, config expects " +
                  std::to_string(want_features));
  }
}

double accuracy_on(const NeuralModel& model, const EmbeddingStore& store,
                   const std::vector<TrainSample>& samples,
                   const std::vector<std::size_t>& subset) {
  if (subset.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t idx : subset) {
    const TrainSample& s = samples[idx];
    const Eigen::MatrixXd x = model.embed(store, s.tokens);
    const int len = NeuralModel::valid_length(model.config(), s.tokens);
    const Eigen::VectorXd* feats =
        model.config().feature_strategy ? &s.features : nullptr;
    const InferenceTrace trace = model.infer(x, len, feats);
    if (argmax_label(trace.probs) == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(subset.size());
}

}  // namespace

TrainResult train_model(ModelConfig cfg,
                        const std::vector<TrainSample>& samples,
                        const EmbeddingStore& store, int num_classes) {
  if (samples.empty()) throw Error("train: empty sample list");
  std::vector<int> lengths;
  lengths.reserve(samples.size());
  for (const auto& s : samples)
    lengths.push_back(static_cast<int>(s.tokens.size()));
  cfg.resolve(num_classes, store.dim(), lengths);
  check_samples(samples, cfg);

  TrainResult result;
  result.config = cfg;
  result.model = std::make_unique<NeuralModel>(cfg, cfg.seed);
  NeuralModel& model = *result.model;
  if (cfg.train_embeddings) model.attach_embedding_table(store);

  // Dev carve for early stopping: a seeded shuffle of the sample indices,
  // first floor(dev_fraction*n) indices held out.
  std::vector<std::size_t> train_idx(samples.size());
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::vector<std::size_t> dev_idx;
  if (cfg.dev_fraction > 0.0) {
    Rng dev_rng(mix_seed(cfg.seed, kDevStream));
    dev_rng.shuffle(train_idx);
    const auto n_dev = static_cast<std::size_t>(
        cfg.dev_fraction * static_cast<double>(samples.size()));
    if (n_dev >= 1 && n_dev < samples.size()) {
      dev_idx.assign(train_idx.begin(),
                     train_idx.begin() + static_cast<std::ptrdiff_t>(n_dev));
      train_idx.erase(train_idx.begin(),
                      train_idx.begin() + static_cast<std::ptrdiff_t>(n_dev));
      std::sort(train_idx.begin(), train_idx.end());
      std::sort(dev_idx.begin(), dev_idx.end());
    }
  }

  // Static phrase matrices can be embedded once; with a trainable table
  // they must be re-embedded every step.
  const bool static_embeddings = !cfg.train_embeddings;
  std::vector<Eigen::MatrixXd> cached_x;
  std::vector<int> valid_lens(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    valid_lens[i] = NeuralModel::valid_length(cfg, samples[i].tokens);
  if (static_embeddings) {
    cached_x.reserve(samples.size());
    for (const auto& s : samples) cached_x.push_back(model.embed(store, s.tokens));
  }

  ParamSet& params = model.params();
  std::vector<AdamState> adam;
  const bool use_adam = cfg.optimizer == "adam";
  if (use_adam) {
    for (const auto& p : params.all())
      adam.push_back({Eigen::MatrixXd::Zero(p.w.rows(), p.w.cols()),
                      Eigen::MatrixXd::Zero(p.w.rows(), p.w.cols())});
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  long step_count = 0;

  const bool use_dev = !dev_idx.empty();
  double best_dev = -1.0;
  int epochs_since_best = 0;
  std::vector<Eigen::MatrixXd> best_weights;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng epoch_rng(mix_seed(cfg.seed, kEpochStreamBase + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      params.zero_grads();
      for (std::size_t pos = start; pos < end; ++pos) {
        const std::size_t i = order[pos];
        const TrainSample& s = samples[i];
        std::vector<int> token_rows;
        const Eigen::MatrixXd x = static_embeddings
                                      ? cached_x[i]
                                      : model.embed(store, s.tokens, &token_rows);
        const Eigen::VectorXd* feats =
            cfg.feature_strategy ? &s.features : nullptr;
        const double loss =
            model.step(x, valid_lens[i], feats, s.label, /*accumulate=*/true,
                       static_embeddings ? nullptr : &token_rows);
        if (!std::isfinite(loss))
          throw Error("training diverged: non-finite loss at epoch " +
                      std::to_string(epoch) + ", sample '" + s.mention_id +
                      "'");
        epoch_loss += loss;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      ++step_count;
      std::size_t pi = 0;
      for (auto& p : params.all()) {
        const Eigen::MatrixXd grad = p.g * scale;
        if (use_adam) {
          AdamState& st = adam[pi];
          st.m = kBeta1 * st.m + (1.0 - kBeta1) * grad;
          st.v = kBeta2 * st.v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
          const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count));
          const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count));
          p.w.array() -= cfg.learning_rate * (st.m.array() / bc1) /
                         ((st.v.array() / bc2).sqrt() + kAdamEps);
        } else {
          p.w -= cfg.learning_rate * grad;
        }
        ++pi;
      }
    }
    result.epoch_losses.push_back(
        train_idx.empty() ? 0.0
                          : epoch_loss / static_cast<double>(train_idx.size()));

    if (use_dev) {
      const double acc = accuracy_on(model, store, samples, dev_idx);
      result.dev_accuracies.push_back(acc);
      if (acc > best_dev) {
        best_dev = acc;
        result.best_epoch = epoch;
        epochs_since_best = 0;
        best_weights.clear();
        for (const auto& p : params.all()) best_weights.push_back(p.w);
      } else if (++epochs_since_best >= cfg.patience) {
        break;
      }
    }
  }

  if (use_dev && !best_weights.empty()) {
    std::size_t pi = 0;
    for (auto& p : params.all()) p.w = best_weights[pi++];
  }
  for (const auto& p : params.all()) {
    if (!p.w.allFinite())
      throw Error("training diverged: parameter '" + p.name +
                  "' is non-finite");
  }
  return result;
}

Prediction predict_one(const NeuralModel& model, const EmbeddingStore& store,
                       const TrainSample& sample) {
  const Eigen::MatrixXd x = model.embed(store, sample.tokens);
  const int len = NeuralModel::valid_length(model.config(), sample.tokens);
  const Eigen::VectorXd* feats =
      model.config().feature_strategy ? &sample.features : nullptr;
  const InferenceTrace trace = model.infer(x, len, feats);
  Prediction p;
  p.mention_id = sample.mention_id;
  p.label = argmax_label(trace.probs);
  p.probability = trace.probs(p.label);
  p.probs = trace.probs;
  return p;
}

std::vector<Prediction> predict(const NeuralModel& model,
                                const EmbeddingStore& store,
                                const std::vector<TrainSample>& samples) {
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict_one(model, store, s));
  return out;
}

namespace {
const char kCkptMagic[8] = {'M', 'N', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const std::string& path, const NeuralModel& model,
                     const std::vector<std::string>& class_codes) {
  const ModelConfig& cfg = model.config();
  if (static_cast<int>(class_codes.size()) != cfg.num_classes)
    throw Error("checkpoint: class_codes length != num_classes");
  nlohmann::ordered_json header;
  header["schema"] = "mednorm-checkpoint-v1";
  header["config"] = config_to_json(cfg);
  header["class_codes"] = class_codes;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& p : model.params().all()) {
    tensors.push_back({{"name", p.name},
                       {"rows", p.w.rows()},
                       {"cols", p.w.cols()}});
  }
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : model.params().all()) {
    for (Eigen::Index r = 0; r < p.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.w.cols(); ++c) {
        const double v = p.w(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
  if (!out) throw Error("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw Error(path + ": not a checkpoint file (bad magic)");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw Error(path + ": truncated checkpoint header");
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(path + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid checkpoint header: " + e.what());
  }
  if (header.value("schema", "") != "mednorm-checkpoint-v1")
    throw Error(path + ": unsupported checkpoint schema");

  Checkpoint ck;
  try {
    ck.config = config_from_json(header.at("config"));
    ck.class_codes =
        header.at("class_codes").get<std::vector<std::string>>();
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0)
        throw Error(path + ": negative tensor shape in header");
      Param& p = ck.params.add(name, rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          double v = 0.0;
          in.read(reinterpret_cast<char*>(&v), sizeof(v));
          if (!in) throw Error(path + ": truncated tensor data");
          p.w(r, c) = v;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid checkpoint header: " + e.what());
  }
  if (static_cast<int>(ck.class_codes.size()) != ck.config.num_classes)
    throw Error(path + ": class_codes length != num_classes");
  return ck;
}

}  // namespace mednorm
