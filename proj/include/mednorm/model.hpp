#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mednorm/embeddings.hpp"
#include "mednorm/simfeatures.hpp"
#include "mednorm/util.hpp"

namespace mednorm {

enum class EncoderKind { Cnn, Bilstm, Bigru };

std::string to_string(EncoderKind e);
EncoderKind encoder_from_string(const std::string& s);

// Architecture and training hyperparameters for one encoder+classifier.
// num_classes, embedding_dim and (when 0) max_len are resolved from the
// corpus, embedding store and train split at training time.
struct ModelConfig {
  EncoderKind encoder = EncoderKind::Bigru;
  int hidden_units = 100;  // per direction
  bool attention = false;
  std::optional<FeatureStrategy> feature_strategy;

  // CNN-only knobs.
  std::vector<int> window_sizes = {3, 4, 5};
  int feature_maps = 100;
  int dense_dim = 100;

  int num_classes = 0;    // resolved
  int embedding_dim = 0;  // resolved
  int max_len = 0;        // 0 = auto: 97.5th percentile of train lengths
  int attention_dim = 0;  // 0 = hidden_units

  std::uint64_t seed = 13;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // adam | sgd
  bool train_embeddings = false;
  double dev_fraction = 0.0;  // carve from train for early stopping
  int patience = 5;

  int encoding_width() const;
  int pooled_width() const;  // CNN: feature_maps * |window_sizes|
  int classifier_input_width() const;
  int effective_attention_dim() const {
    return attention_dim > 0 ? attention_dim : hidden_units;
  }

  // Fills derived fields and checks invariants; lengths are the train
  // split phrase lengths used for the max_len percentile.
  void resolve(int num_classes_in, int embedding_dim_in,
               const std::vector<int>& train_lengths);
  void validate() const;
};

// Nearest-rank percentile of phrase lengths, used for the padding length.
int length_percentile(std::vector<int> lengths, double pct);

nlohmann::ordered_json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);
ModelConfig load_config(const std::string& path);

// Named parameter tensor with its gradient accumulator.
struct Param {
  std::string name;
  Eigen::MatrixXd w;
  Eigen::MatrixXd g;
};

class ParamSet {
 public:
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }
  void zero_grads();
  std::size_t scalar_count() const;

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct InferenceTrace {
  Eigen::VectorXd probs;
  Eigen::VectorXd encoding;
  // Attention weights over positions, zero beyond valid_len. Empty when
  // the config has no attention.
  Eigen::VectorXd attention;
};

// One encoder+classifier with hand-written forward and backward passes.
// All math is double precision; every pass is single-threaded and
// deterministic, so identical seeds give bit-identical parameters.
class NeuralModel {
 public:
  // Fresh model with seeded Glorot-uniform initialization.
  NeuralModel(const ModelConfig& cfg, std::uint64_t init_seed);
  // Rebuild from loaded parameters (shape-checked against cfg).
  NeuralModel(const ModelConfig& cfg, ParamSet params);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Copies the store's matrix in as the trainable "embedding.table"
  // parameter. Only meaningful when cfg.train_embeddings is set.
  void attach_embedding_table(const EmbeddingStore& store);

  // Embeds tokens into an embedding_dim x max_len matrix (zero columns
  // beyond the phrase), truncating at max_len. Uses the model's own
  // embedding table when train_embeddings is set, the store otherwise.
  // token_rows, when given, receives the embedding row per position
  // (-1 for OOV/padding) for gradient scatter.
  Eigen::MatrixXd embed(const EmbeddingStore& store,
                        const std::vector<std::string>& tokens,
                        std::vector<int>* token_rows = nullptr) const;
  static int valid_length(const ModelConfig& cfg,
                          const std::vector<std::string>& tokens);

  // Forward pass only.
  InferenceTrace infer(const Eigen::MatrixXd& embedded, int valid_len,
                       const Eigen::VectorXd* features) const;

  // Forward + cross-entropy loss; when accumulate is set, also backward,
  // adding this sample's gradients into the ParamSet. token_rows enables
  // the embedding-table scatter when embeddings are trainable.
  double step(const Eigen::MatrixXd& embedded, int valid_len,
              const Eigen::VectorXd* features, int gold_label,
              bool accumulate, const std::vector<int>* token_rows = nullptr);

 private:
  struct Workspace;
  void forward(const Eigen::MatrixXd& embedded, int valid_len,
               const Eigen::VectorXd* features, Workspace& ws) const;
  void backward(const Eigen::MatrixXd& embedded, int valid_len,
                const Eigen::VectorXd* features, int gold_label,
                Workspace& ws, const std::vector<int>* token_rows);
  void build_params();
  void init_params(std::uint64_t seed);

  ModelConfig cfg_;
  ParamSet params_;
};

// Argmax with ties broken toward the lowest label index, so evaluation
// order never depends on floating-point noise.
int argmax_label(const Eigen::VectorXd& probs);

}  // namespace mednorm
