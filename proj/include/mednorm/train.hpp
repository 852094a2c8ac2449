#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "mednorm/embeddings.hpp"
#include "mednorm/model.hpp"

namespace mednorm {

// One training/evaluation example: the normalized phrase, its gold class
// label, and (when the config takes a strategy) its per-code similarity
// features.
struct TrainSample {
  std::string mention_id;
  std::vector<std::string> tokens;
  int label = -1;
  Eigen::VectorXd features;  // size 0 when the config takes no features
};

// Fitted model plus per-epoch diagnostics from one training run.
struct TrainResult {
  ModelConfig config;  // resolved copy
  std::unique_ptr<NeuralModel> model;
  std::vector<double> epoch_losses;    // mean train loss per completed epoch
  std::vector<double> dev_accuracies;  // per epoch; empty without a dev split
  int best_epoch = -1;  // epoch whose parameters were kept; -1 = final epoch
};

// Trains a fresh model on the samples. num_classes comes from the label
// index; embedding_dim and (when 0) max_len are resolved here from the
// store and the sample lengths. Minimizes cross-entropy with the
// configured optimizer, shuffling each epoch with a seed-derived stream.
// With dev_fraction > 0 a dev subset is carved from the samples for early
// stopping on dev accuracy, restoring the best parameters. Deterministic:
// identical cfg+samples+store give bit-identical parameters.
// Throws on an empty sample list or a non-finite loss.
TrainResult train_model(ModelConfig cfg,
                        const std::vector<TrainSample>& samples,
                        const EmbeddingStore& store, int num_classes);

struct Prediction {
  std::string mention_id;
  int label = -1;            // argmax class, ties to the lowest index
  double probability = 0.0;  // probs[label]
  Eigen::VectorXd probs;
};

Prediction predict_one(const NeuralModel& model, const EmbeddingStore& store,
                       const TrainSample& sample);
std::vector<Prediction> predict(const NeuralModel& model,
                                const EmbeddingStore& store,
                                const std::vector<TrainSample>& samples);

// Checkpoint file: "MNCKPT01" magic, little-endian u32 JSON header length,
// header JSON {schema, config, class_codes, tensors}, then row-major
// float64 data for each tensor in header order.
void save_checkpoint(const std::string& path, const NeuralModel& model,
                     const std::vector<std::string>& class_codes);

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> class_codes;  // code per class index
  ParamSet params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mednorm
