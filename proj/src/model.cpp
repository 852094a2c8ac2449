#include "mednorm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mednorm {

std::string to_string(EncoderKind e) {
  switch (e) {
    case EncoderKind::Cnn: return "cnn";
    case EncoderKind::Bilstm: return "bilstm";
    case EncoderKind::Bigru: return "bigru";
  }
  throw Error("unknown encoder kind");
}

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "cnn") return EncoderKind::Cnn;
  if (s == "bilstm") return EncoderKind::Bilstm;
  if (s == "bigru") return EncoderKind::Bigru;
  throw Error("unknown encoder '" + s + "' (expected cnn, bilstm or bigru)");
}

int ModelConfig::encoding_width() const {
  return encoder == EncoderKind::Cnn ? dense_dim : 2 * hidden_units;
}

int ModelConfig::pooled_width() const {
  return feature_maps * static_cast<int>(window_sizes.size());
}

int ModelConfig::classifier_input_width() const {
  return encoding_width() + (feature_strategy ? num_classes : 0);
}

int length_percentile(std::vector<int> lengths, double pct) {
  if (lengths.empty()) throw Error("length_percentile: no lengths given");
  std::sort(lengths.begin(), lengths.end());
  const auto n = static_cast<double>(lengths.size());
  auto rank = static_cast<std::size_t>(std::ceil(pct * n));
  rank = std::clamp<std::size_t>(rank, 1, lengths.size());
  return lengths[rank - 1];
}

void ModelConfig::resolve(int num_classes_in, int embedding_dim_in,
                          const std::vector<int>& train_lengths) {
  num_classes = num_classes_in;
  embedding_dim = embedding_dim_in;
  if (max_len == 0) max_len = length_percentile(train_lengths, 0.975);
  if (encoder == EncoderKind::Cnn) {
    const int max_window =
        *std::max_element(window_sizes.begin(), window_sizes.end());
    max_len = std::max(max_len, max_window);
  }
  validate();
}

void ModelConfig::validate() const {
  if (encoder == EncoderKind::Cnn) {
    if (attention)
      throw Error("config: attention is only defined for RNN encoders");
    if (window_sizes.empty()) throw Error("config: window_sizes is empty");
    for (int h : window_sizes) {
      if (h < 1) throw Error("config: window sizes must be >= 1");
    }
    if (feature_maps < 1) throw Error("config: feature_maps must be >= 1");
    if (dense_dim < 1) throw Error("config: dense_dim must be >= 1");
    if (max_len > 0 &&
        max_len < *std::max_element(window_sizes.begin(), window_sizes.end()))
      throw Error("config: max_len smaller than the largest window");
  } else {
    if (hidden_units < 1) throw Error("config: hidden_units must be >= 1");
  }
  if (num_classes > 0 && num_classes < 2)
    throw Error("config: num_classes must be >= 2");
  if (embedding_dim < 0) throw Error("config: embedding_dim must be >= 0");
  if (max_len < 0) throw Error("config: max_len must be >= 0");
  if (batch_size < 1) throw Error("config: batch_size must be >= 1");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (!(learning_rate > 0.0))
    throw Error("config: learning_rate must be positive");
  if (optimizer != "adam" && optimizer != "sgd")
    throw Error("config: optimizer must be 'adam' or 'sgd'");
  if (dev_fraction < 0.0 || dev_fraction >= 1.0)
    throw Error("config: dev_fraction must be in [0, 1)");
  if (patience < 1) throw Error("config: patience must be >= 1");
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["encoder"] = to_string(cfg.encoder);
  j["hidden_units"] = cfg.hidden_units;
  j["attention"] = cfg.attention;
  j["feature_strategy"] =
      cfg.feature_strategy ? nlohmann::ordered_json(to_string(*cfg.feature_strategy))
                           : nlohmann::ordered_json(nullptr);
  j["window_sizes"] = cfg.window_sizes;
  j["feature_maps"] = cfg.feature_maps;
  j["dense_dim"] = cfg.dense_dim;
  j["num_classes"] = cfg.num_classes;
  j["embedding_dim"] = cfg.embedding_dim;
  j["max_len"] = cfg.max_len;
  j["attention_dim"] = cfg.attention_dim;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["optimizer"] = cfg.optimizer;
  j["train_embeddings"] = cfg.train_embeddings;
  j["dev_fraction"] = cfg.dev_fraction;
  j["patience"] = cfg.patience;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("encoder"))
    cfg.encoder = encoder_from_string(j.at("encoder").get<std::string>());
  cfg.hidden_units = j.value("hidden_units", cfg.hidden_units);
  cfg.attention = j.value("attention", cfg.attention);
  if (j.contains("feature_strategy") && !j.at("feature_strategy").is_null()) {
    cfg.feature_strategy = feature_strategy_from_string(
        j.at("feature_strategy").get<std::string>());
  }
  cfg.window_sizes = j.value("window_sizes", cfg.window_sizes);
  cfg.feature_maps = j.value("feature_maps", cfg.feature_maps);
  cfg.dense_dim = j.value("dense_dim", cfg.dense_dim);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  cfg.max_len = j.value("max_len", cfg.max_len);
  cfg.attention_dim = j.value("attention_dim", cfg.attention_dim);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.optimizer = j.value("optimizer", cfg.optimizer);
  cfg.train_embeddings = j.value("train_embeddings", cfg.train_embeddings);
  cfg.dev_fraction = j.value("dev_fraction", cfg.dev_fraction);
  cfg.patience = j.value("patience", cfg.patience);
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

Param& ParamSet::add(const std::string& name, Eigen::Index rows,
                     Eigen::Index cols) {
  if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Param{name, Eigen::MatrixXd::Zero(rows, cols),
                          Eigen::MatrixXd::Zero(rows, cols)});
  return params_.back();
}

Param& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second];
}

void ParamSet::zero_grads() {
  for (auto& p : params_) p.g.setZero();
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.w.size());
  return n;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

struct NeuralModel::Workspace {
  struct Dir {
    Eigen::MatrixXd h;      // H x L
    Eigen::MatrixXd c;      // H x L (LSTM cell states)
    Eigen::MatrixXd gates;  // post-activation gate values, G*H x L
    Eigen::MatrixXd u;      // Wh * h_prev, 3H x L (GRU backward needs u_n)
  };
  Dir fwd, bwd;
  Eigen::MatrixXd h2;  // [h_fwd; h_bwd] per position, 2H x L

  Eigen::MatrixXd att_z;  // tanh(W h2), A x L
  Eigen::VectorXd att_weights;

  struct Conv {
    Eigen::MatrixXd pre;   // F x windows
    std::vector<int> arg;  // argmax window per filter
  };
  std::vector<Conv> convs;
  Eigen::VectorXd pooled;
  Eigen::VectorXd dense_pre;

  Eigen::VectorXd encoding;
  Eigen::VectorXd cls_in;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
  double loss = 0.0;
};

NeuralModel::NeuralModel(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.num_classes < 2 || cfg_.embedding_dim < 1 || cfg_.max_len < 1)
    throw Error("model: config must be resolved before construction");
  build_params();
  init_params(init_seed);
}

NeuralModel::NeuralModel(const ModelConfig& cfg, ParamSet params) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.num_classes < 2 || cfg_.embedding_dim < 1 || cfg_.max_len < 1)
    throw Error("model: config must be resolved before construction");
  build_params();
  for (auto& expected : params_.all()) {
    const Param& got = params.at(expected.name);
    if (got.w.rows() != expected.w.rows() || got.w.cols() != expected.w.cols())
      throw Error("parameter '" + expected.name + "' has shape " +
                  std::to_string(got.w.rows()) + "x" +
                  std::to_string(got.w.cols()) + ", expected " +
                  std::to_string(expected.w.rows()) + "x" +
                  std::to_string(expected.w.cols()));
    expected.w = got.w;
  }
  if (params.has("embedding.table")) {
    const Param& table = params.at("embedding.table");
    if (table.w.cols() != cfg_.embedding_dim)
      throw Error("embedding table column count does not match embedding_dim");
    params_.add("embedding.table", table.w.rows(), table.w.cols()).w = table.w;
  } else if (cfg_.train_embeddings) {
    throw Error("config expects a trainable embedding table but none loaded");
  }
  for (const auto& p : params_.all()) {
    if (!p.w.allFinite())
      throw Error("parameter '" + p.name + "' contains non-finite values");
  }
}

void NeuralModel::build_params() {
  const int d = cfg_.embedding_dim;
  const int hidden = cfg_.hidden_units;
  if (cfg_.encoder == EncoderKind::Cnn) {
    for (int h : cfg_.window_sizes) {
      params_.add("cnn.conv" + std::to_string(h) + ".w", cfg_.feature_maps,
                  h * d);
      params_.add("cnn.conv" + std::to_string(h) + ".b", cfg_.feature_maps, 1);
    }
    params_.add("cnn.dense.w", cfg_.dense_dim, cfg_.pooled_width());
    params_.add("cnn.dense.b", cfg_.dense_dim, 1);
  } else {
    const int gates = cfg_.encoder == EncoderKind::Bilstm ? 4 : 3;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string prefix = std::string("rnn.") + dir + ".";
      params_.add(prefix + "wx", gates * hidden, d);
      params_.add(prefix + "wh", gates * hidden, hidden);
      params_.add(prefix + "b", gates * hidden, 1);
    }
    if (cfg_.attention) {
      const int att = cfg_.effective_attention_dim();
      params_.add("attn.w", att, 2 * hidden);
      params_.add("attn.v", att, 1);
    }
  }
  params_.add("out.w", cfg_.num_classes, cfg_.classifier_input_width());
  params_.add("out.b", cfg_.num_classes, 1);
}

void NeuralModel::init_params(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_.all()) {
    if (p.name.ends_with(".b")) {
      p.w.setZero();
      continue;
    }
    const double limit =
        std::sqrt(6.0 / static_cast<double>(p.w.rows() + p.w.cols()));
    for (Eigen::Index r = 0; r < p.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.w.cols(); ++c) {
        p.w(r, c) = rng.uniform_in(-limit, limit);
      }
    }
  }
  if (cfg_.encoder == EncoderKind::Bilstm) {
    // Forget-gate bias starts at 1 so early cell memory persists.
    const int hidden = cfg_.hidden_units;
    for (const char* dir : {"fwd", "bwd"}) {
      auto& b = params_.at(std::string("rnn.") + dir + ".b").w;
      b.block(hidden, 0, hidden, 1).setConstant(1.0);
    }
  }
}

void NeuralModel::attach_embedding_table(const EmbeddingStore& store) {
  if (params_.has("embedding.table"))
    throw Error("embedding table already attached");
  if (store.dim() != cfg_.embedding_dim)
    throw Error("embedding store dim does not match config embedding_dim");
  params_.add("embedding.table", store.matrix().rows(), store.matrix().cols())
      .w = store.matrix();
}

Eigen::MatrixXd NeuralModel::embed(const EmbeddingStore& store,
                                   const std::vector<std::string>& tokens,
                                   std::vector<int>* token_rows) const {
  const Eigen::MatrixXd& table = params_.has("embedding.table")
                                     ? params_.at("embedding.table").w
                                     : store.matrix();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(cfg_.embedding_dim, cfg_.max_len);
  const int len = valid_length(cfg_, tokens);
  if (token_rows) token_rows->assign(static_cast<std::size_t>(cfg_.max_len), -1);
  for (int t = 0; t < len; ++t) {
    const int row = store.row_of(tokens[static_cast<std::size_t>(t)]);
    if (row < 0) continue;
    x.col(t) = table.row(row).transpose();
    if (token_rows) (*token_rows)[static_cast<std::size_t>(t)] = row;
  }
  return x;
}

int NeuralModel::valid_length(const ModelConfig& cfg,
                              const std::vector<std::string>& tokens) {
  return std::min<int>(static_cast<int>(tokens.size()), cfg.max_len);
}

void NeuralModel::forward(const Eigen::MatrixXd& embedded, int valid_len,
                          const Eigen::VectorXd* features,
                          Workspace& ws) const {
  const int hidden = cfg_.hidden_units;
  const int len = valid_len;
  if (len < 1) throw Error("encoder: all positions are masked");
  if (embedded.rows() != cfg_.embedding_dim || embedded.cols() != cfg_.max_len)
    throw Error("encoder: embedded phrase has wrong shape");
  if (len > cfg_.max_len) throw Error("encoder: valid_len exceeds max_len");
  if (cfg_.feature_strategy && !features)
    throw Error("classifier: config expects similarity features");
  if (!cfg_.feature_strategy && features)
    throw Error("classifier: config does not take similarity features");
  if (features && features->size() != cfg_.num_classes)
    throw Error("classifier: feature vector length " +
                std::to_string(features->size()) + " != num_classes " +
                std::to_string(cfg_.num_classes));

  if (cfg_.encoder == EncoderKind::Cnn) {
    ws.convs.clear();
    ws.pooled.resize(cfg_.pooled_width());
    int offset = 0;
    for (std::size_t wi = 0; wi < cfg_.window_sizes.size(); ++wi) {
      const int h = cfg_.window_sizes[wi];
      const auto& wc =
          params_.at("cnn.conv" + std::to_string(h) + ".w").w;
      const auto& bc =
          params_.at("cnn.conv" + std::to_string(h) + ".b").w;
      // Windows fully inside the phrase; a phrase shorter than the window
      // keeps its single padded window at position 0.
      const int windows =
          std::max(1, std::min(len - h + 1, cfg_.max_len - h + 1));
      Workspace::Conv conv;
      conv.pre.resize(cfg_.feature_maps, windows);
      for (int t = 0; t < windows; ++t) {
        const Eigen::Map<const Eigen::VectorXd> col(
            embedded.data() + static_cast<std::ptrdiff_t>(t) * embedded.rows(),
            static_cast<Eigen::Index>(h) * embedded.rows());
        conv.pre.col(t) = wc * col + bc;
      }
      conv.arg.assign(static_cast<std::size_t>(cfg_.feature_maps), 0);
      for (int f = 0; f < cfg_.feature_maps; ++f) {
        int best_t = 0;
        double best = std::max(conv.pre(f, 0), 0.0);
        for (int t = 1; t < windows; ++t) {
          const double y = std::max(conv.pre(f, t), 0.0);
          if (y > best) {
            best = y;
            best_t = t;
          }
        }
        conv.arg[static_cast<std::size_t>(f)] = best_t;
        ws.pooled(offset + f) = best;
      }
      offset += cfg_.feature_maps;
      ws.convs.push_back(std::move(conv));
    }
    const auto& wd = params_.at("cnn.dense.w").w;
    const auto& bd = params_.at("cnn.dense.b").w;
    ws.dense_pre = wd * ws.pooled + bd.col(0);
    ws.encoding = ws.dense_pre.cwiseMax(0.0);
  } else {
    const int gates = cfg_.encoder == EncoderKind::Bilstm ? 4 : 3;
    const bool is_lstm = cfg_.encoder == EncoderKind::Bilstm;
    for (int direction = 0; direction < 2; ++direction) {
      Workspace::Dir& dir = direction == 0 ? ws.fwd : ws.bwd;
      const std::string prefix =
          direction == 0 ? "rnn.fwd." : "rnn.bwd.";
      const auto& wx = params_.at(prefix + "wx").w;
      const auto& wh = params_.at(prefix + "wh").w;
      const auto& b = params_.at(prefix + "b").w;
      dir.h.setZero(hidden, len);
      dir.gates.resize(gates * hidden, len);
      if (is_lstm) {
        dir.c.setZero(hidden, len);
      } else {
        dir.u.resize(3 * hidden, len);
      }
      Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(hidden);
      Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(hidden);
      for (int step = 0; step < len; ++step) {
        const int t = direction == 0 ? step : len - 1 - step;
        const Eigen::VectorXd a = wx * embedded.col(t) + b.col(0);
        if (is_lstm) {
          const Eigen::VectorXd pre = a + wh * h_prev;
          const Eigen::ArrayXd gi = sigmoid(pre.segment(0, hidden).array());
          const Eigen::ArrayXd gf =
              sigmoid(pre.segment(hidden, hidden).array());
          const Eigen::ArrayXd gg =
              pre.segment(2 * hidden, hidden).array().tanh();
          const Eigen::ArrayXd go =
              sigmoid(pre.segment(3 * hidden, hidden).array());
          const Eigen::ArrayXd c = gf * c_prev.array() + gi * gg;
          const Eigen::ArrayXd h = go * c.tanh();
          dir.gates.col(step).segment(0, hidden) = gi.matrix();
          dir.gates.col(step).segment(hidden, hidden) = gf.matrix();
          dir.gates.col(step).segment(2 * hidden, hidden) = gg.matrix();
          dir.gates.col(step).segment(3 * hidden, hidden) = go.matrix();
          dir.c.col(step) = c.matrix();
          dir.h.col(step) = h.matrix();
          c_prev = c.matrix();
          h_prev = h.matrix();
        } else {
          const Eigen::VectorXd u = wh * h_prev;
          const Eigen::ArrayXd gz = sigmoid(
              (a.segment(0, hidden) + u.segment(0, hidden)).array());
          const Eigen::ArrayXd gr = sigmoid(
              (a.segment(hidden, hidden) + u.segment(hidden, hidden)).array());
          const Eigen::ArrayXd gn =
              (a.segment(2 * hidden, hidden).array() +
               gr * u.segment(2 * hidden, hidden).array())
                  .tanh();
          const Eigen::ArrayXd h =
              (1.0 - gz) * gn + gz * h_prev.array();
          dir.gates.col(step).segment(0, hidden) = gz.matrix();
          dir.gates.col(step).segment(hidden, hidden) = gr.matrix();
          dir.gates.col(step).segment(2 * hidden, hidden) = gn.matrix();
          dir.u.col(step) = u;
          dir.h.col(step) = h.matrix();
          h_prev = h.matrix();
        }
      }
    }

    // Combined per-position states: column t = [h_fwd(t); h_bwd(t)].
    // fwd cache column `step` holds position step; bwd cache column `step`
    // holds position len-1-step.
    ws.h2.resize(2 * hidden, len);
    for (int t = 0; t < len; ++t) {
      ws.h2.col(t).segment(0, hidden) = ws.fwd.h.col(t);
      ws.h2.col(t).segment(hidden, hidden) = ws.bwd.h.col(len - 1 - t);
    }

    if (cfg_.attention) {
      const auto& aw = params_.at("attn.w").w;
      const auto& av = params_.at("attn.v").w;
      ws.att_z = (aw * ws.h2).array().tanh().matrix();
      Eigen::VectorXd scores = ws.att_z.transpose() * av.col(0);
      const double m = scores.maxCoeff();
      Eigen::VectorXd e = (scores.array() - m).exp().matrix();
      ws.att_weights = e / e.sum();
      ws.encoding = ws.h2 * ws.att_weights;
    } else {
      ws.encoding.resize(2 * hidden);
      ws.encoding.segment(0, hidden) = ws.fwd.h.col(len - 1);
      ws.encoding.segment(hidden, hidden) = ws.bwd.h.col(len - 1);
    }
  }

  ws.cls_in.resize(cfg_.classifier_input_width());
  ws.cls_in.segment(0, cfg_.encoding_width()) = ws.encoding;
  if (features) {
    ws.cls_in.segment(cfg_.encoding_width(), cfg_.num_classes) = *features;
  }
  const auto& wo = params_.at("out.w").w;
  const auto& bo = params_.at("out.b").w;
  ws.logits = wo * ws.cls_in + bo.col(0);
  const double m = ws.logits.maxCoeff();
  const Eigen::ArrayXd shifted = ws.logits.array() - m;
  const double lse = std::log(shifted.exp().sum());
  ws.probs = (shifted - lse).exp().matrix();
}

InferenceTrace NeuralModel::infer(const Eigen::MatrixXd& embedded,
                                  int valid_len,
                                  const Eigen::VectorXd* features) const {
  Workspace ws;
  forward(embedded, valid_len, features, ws);
  InferenceTrace trace;
  trace.probs = ws.probs;
  trace.encoding = ws.encoding;
  if (cfg_.attention) {
    trace.attention = Eigen::VectorXd::Zero(cfg_.max_len);
    trace.attention.segment(0, valid_len) = ws.att_weights;
  }
  return trace;
}

double NeuralModel::step(const Eigen::MatrixXd& embedded, int valid_len,
                         const Eigen::VectorXd* features, int gold_label,
                         bool accumulate,
                         const std::vector<int>* token_rows) {
  if (gold_label < 0 || gold_label >= cfg_.num_classes)
    throw Error("step: gold label out of range");
  Workspace ws;
  forward(embedded, valid_len, features, ws);
  const double m = ws.logits.maxCoeff();
  const double lse =
      m + std::log((ws.logits.array() - m).exp().sum());
  ws.loss = lse - ws.logits(gold_label);
  if (accumulate) {
    backward(embedded, valid_len, features, gold_label, ws, token_rows);
  }
  return ws.loss;
}

void NeuralModel::backward(const Eigen::MatrixXd& embedded, int valid_len,
                           const Eigen::VectorXd* features, int gold_label,
                           Workspace& ws,
                           const std::vector<int>* token_rows) {
  (void)features;
  const int hidden = cfg_.hidden_units;
  const int len = valid_len;
  const bool need_dx =
      cfg_.train_embeddings && params_.has("embedding.table");

  // Softmax + cross-entropy.
  Eigen::VectorXd dlogits = ws.probs;
  dlogits(gold_label) -= 1.0;

  auto& out_w = params_.at("out.w");
  auto& out_b = params_.at("out.b");
  out_w.g += dlogits * ws.cls_in.transpose();
  out_b.g.col(0) += dlogits;
  const Eigen::VectorXd din = out_w.w.transpose() * dlogits;
  Eigen::VectorXd denc = din.segment(0, cfg_.encoding_width());
  // The feature block of cls_in is an input, not a parameter path.

  Eigen::MatrixXd dx;
  if (need_dx) dx = Eigen::MatrixXd::Zero(cfg_.embedding_dim, cfg_.max_len);

  if (cfg_.encoder == EncoderKind::Cnn) {
    auto& dense_w = params_.at("cnn.dense.w");
    auto& dense_b = params_.at("cnn.dense.b");
    const Eigen::VectorXd dpd =
        (ws.dense_pre.array() > 0.0).select(denc.array(), 0.0).matrix();
    dense_w.g += dpd * ws.pooled.transpose();
    dense_b.g.col(0) += dpd;
    const Eigen::VectorXd dpooled = dense_w.w.transpose() * dpd;
    int offset = 0;
    for (std::size_t wi = 0; wi < cfg_.window_sizes.size(); ++wi) {
      const int h = cfg_.window_sizes[wi];
      auto& wc = params_.at("cnn.conv" + std::to_string(h) + ".w");
      auto& bc = params_.at("cnn.conv" + std::to_string(h) + ".b");
      const Workspace::Conv& conv = ws.convs[wi];
      for (int f = 0; f < cfg_.feature_maps; ++f) {
        const int t = conv.arg[static_cast<std::size_t>(f)];
        if (conv.pre(f, t) <= 0.0) continue;  // ReLU gate closed
        const double dpre = dpooled(offset + f);
        if (dpre == 0.0) continue;
        const Eigen::Map<const Eigen::VectorXd> col(
            embedded.data() + static_cast<std::ptrdiff_t>(t) * embedded.rows(),
            static_cast<Eigen::Index>(h) * embedded.rows());
        wc.g.row(f) += dpre * col.transpose();
        bc.g(f, 0) += dpre;
        if (need_dx) {
          Eigen::Map<Eigen::VectorXd> dx_block(
              dx.data() + static_cast<std::ptrdiff_t>(t) * dx.rows(),
              static_cast<Eigen::Index>(h) * dx.rows());
          dx_block += dpre * wc.w.row(f).transpose();
        }
      }
      offset += cfg_.feature_maps;
    }
  } else {
    const bool is_lstm = cfg_.encoder == EncoderKind::Bilstm;

    // Per-position gradient on the combined states.
    Eigen::MatrixXd dh2 = Eigen::MatrixXd::Zero(2 * hidden, len);
    if (cfg_.attention) {
      auto& aw = params_.at("attn.w");
      auto& av = params_.at("attn.v");
      // encoding = H2 a
      const Eigen::VectorXd da = ws.h2.transpose() * denc;
      dh2 += denc * ws.att_weights.transpose();
      // softmax backward
      const double dsum = ws.att_weights.dot(da);
      const Eigen::VectorXd ds =
          (ws.att_weights.array() * (da.array() - dsum)).matrix();
      av.g.col(0) += ws.att_z * ds;
      const Eigen::MatrixXd dz = av.w.col(0) * ds.transpose();
      const Eigen::MatrixXd dpre =
          (dz.array() * (1.0 - ws.att_z.array().square())).matrix();
      aw.g += dpre * ws.h2.transpose();
      dh2 += aw.w.transpose() * dpre;
    } else {
      dh2.col(len - 1).segment(0, hidden) += denc.segment(0, hidden);
      dh2.col(0).segment(hidden, hidden) += denc.segment(hidden, hidden);
    }

    for (int direction = 0; direction < 2; ++direction) {
      Workspace::Dir& dir = direction == 0 ? ws.fwd : ws.bwd;
      const std::string prefix = direction == 0 ? "rnn.fwd." : "rnn.bwd.";
      auto& wx = params_.at(prefix + "wx");
      auto& wh = params_.at(prefix + "wh");
      auto& b = params_.at(prefix + "b");

      Eigen::VectorXd carry_h = Eigen::VectorXd::Zero(hidden);
      Eigen::VectorXd carry_c = Eigen::VectorXd::Zero(hidden);
      // Walk the direction's processing order backwards.
      for (int step = len - 1; step >= 0; --step) {
        const int t = direction == 0 ? step : len - 1 - step;
        // dh at this step: pooled path + recurrent carry. dh2 row block
        // for this direction is at offset 0 (fwd) or hidden (bwd).
        Eigen::VectorXd dh =
            carry_h +
            dh2.col(t).segment(direction == 0 ? 0 : hidden, hidden);
        const Eigen::VectorXd h_prev =
            step > 0 ? dir.h.col(step - 1)
                     : Eigen::VectorXd::Zero(hidden).eval();
        const Eigen::VectorXd x_t = embedded.col(t);

        if (is_lstm) {
          const Eigen::ArrayXd gi = dir.gates.col(step).segment(0, hidden);
          const Eigen::ArrayXd gf =
              dir.gates.col(step).segment(hidden, hidden);
          const Eigen::ArrayXd gg =
              dir.gates.col(step).segment(2 * hidden, hidden);
          const Eigen::ArrayXd go =
              dir.gates.col(step).segment(3 * hidden, hidden);
          const Eigen::ArrayXd c_prev =
              step > 0 ? Eigen::ArrayXd(dir.c.col(step - 1).array())
                       : Eigen::ArrayXd(Eigen::ArrayXd::Zero(hidden));
          const Eigen::ArrayXd tc = dir.c.col(step).array().tanh();
          const Eigen::ArrayXd dgo = dh.array() * tc;
          Eigen::ArrayXd dc = carry_c.array() + dh.array() * go * (1.0 - tc.square());
          const Eigen::ArrayXd dgi = dc * gg;
          const Eigen::ArrayXd dgg = dc * gi;
          const Eigen::ArrayXd dgf = dc * c_prev;
          carry_c = (dc * gf).matrix();
          Eigen::VectorXd da(4 * hidden);
          da.segment(0, hidden) = (dgi * gi * (1.0 - gi)).matrix();
          da.segment(hidden, hidden) = (dgf * gf * (1.0 - gf)).matrix();
          da.segment(2 * hidden, hidden) = (dgg * (1.0 - gg.square())).matrix();
          da.segment(3 * hidden, hidden) = (dgo * go * (1.0 - go)).matrix();
          wx.g += da * x_t.transpose();
          wh.g += da * h_prev.transpose();
          b.g.col(0) += da;
          carry_h = wh.w.transpose() * da;
          if (need_dx) dx.col(t) += wx.w.transpose() * da;
        } else {
          const Eigen::ArrayXd gz = dir.gates.col(step).segment(0, hidden);
          const Eigen::ArrayXd gr =
              dir.gates.col(step).segment(hidden, hidden);
          const Eigen::ArrayXd gn =
              dir.gates.col(step).segment(2 * hidden, hidden);
          const Eigen::ArrayXd u_n =
              dir.u.col(step).segment(2 * hidden, hidden);
          const Eigen::ArrayXd dgz =
              dh.array() * (h_prev.array() - gn);
          const Eigen::ArrayXd dgn = dh.array() * (1.0 - gz);
          Eigen::ArrayXd dh_prev = dh.array() * gz;
          const Eigen::ArrayXd dn_pre = dgn * (1.0 - gn.square());
          const Eigen::ArrayXd dgr = dn_pre * u_n;
          const Eigen::ArrayXd du_n = dn_pre * gr;
          const Eigen::ArrayXd dz_pre = dgz * gz * (1.0 - gz);
          const Eigen::ArrayXd dr_pre = dgr * gr * (1.0 - gr);
          Eigen::VectorXd da(3 * hidden);
          da.segment(0, hidden) = dz_pre.matrix();
          da.segment(hidden, hidden) = dr_pre.matrix();
          da.segment(2 * hidden, hidden) = dn_pre.matrix();
          Eigen::VectorXd du(3 * hidden);
          du.segment(0, hidden) = dz_pre.matrix();
          du.segment(hidden, hidden) = dr_pre.matrix();
          du.segment(2 * hidden, hidden) = du_n.matrix();
          wx.g += da * x_t.transpose();
          wh.g += du * h_prev.transpose();
          b.g.col(0) += da;
          carry_h = (wh.w.transpose() * du + dh_prev.matrix()).eval();
          if (need_dx) dx.col(t) += wx.w.transpose() * da;
        }
      }
    }
  }

  if (need_dx && token_rows) {
    auto& table = params_.at("embedding.table");
    for (int t = 0; t < len; ++t) {
      const int row = (*token_rows)[static_cast<std::size_t>(t)];
      if (row >= 0) table.g.row(row) += dx.col(t).transpose();
    }
  }
}

int argmax_label(const Eigen::VectorXd& probs) {
  int best = 0;
  for (int i = 1; i < probs.size(); ++i) {
    if (probs(i) > probs(best)) best = i;
  }
  return best;
}

}  // namespace mednorm
