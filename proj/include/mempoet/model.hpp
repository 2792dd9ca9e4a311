#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mempoet/corpus.hpp"
#include "mempoet/graph.hpp"
#include "mempoet/numerics.hpp"

namespace mempoet {

struct Dims {
  int vocab = 0;
  int d_embed = 16;
  int d_hidden = 32;  // per encoder direction
  int d_state = 32;   // decoder state
  int d_att = 32;     // attention scoring space
  int max_topic = 8;

  int d_ctx() const { return 2 * d_hidden; }  // concatenated bidirectional states
};

// All trainable tensors plus the vocabulary they are indexed by.
//
// Parameter names: "E" (vocab x d_embed, shared between input lookup and the
// memory fusion), "enc_fw.*"/"enc_bw.*"/"dec.*" GRU weights, "bridge.W"/"bridge.b"
// (encoder finals -> initial decoder state), "att.A"/"att.B"/"att.u" (additive
// attention), "W" (d_state x vocab projection).
struct ModelParams {
  Dims dims;
  Vocabulary vocab;
  ParamStore store;
  std::string config_echo;  // JSON echo of the training setup, free-form

  static ModelParams init(const Vocabulary& vocab, const Dims& dims, uint64_t seed);

  GruWeights encoder_fw() const;
  GruWeights encoder_bw() const;
  GruWeights decoder() const;
  const Matrix& embeddings() const { return store.param("E"); }
  const Matrix& projection() const { return store.param("W"); }

  uint64_t fingerprint() const;

  void save(const std::string& path) const;
  static ModelParams load(const std::string& path);
};

struct EncoderOutput {
  std::vector<Matrix> states;  // h_1..h_N, each 1 x d_ctx
};

// Bidirectional GRU over the topic characters; h_i = concat(forward_i, backward_i).
EncoderOutput encode_keywords(const std::vector<int>& topic_ids, const ModelParams& params);

// s0 = tanh(concat(final forward state, final backward state) * bridge.W + bridge.b)
Matrix initial_decoder_state(const EncoderOutput& enc, const ModelParams& params);

struct AttentionResult {
  Matrix context;  // 1 x d_ctx
  Matrix weights;  // 1 x N
};

// Additive attention: e_i = u . tanh(s_prev A + h_i B), weights = softmax(e).
AttentionResult attention_context(const Matrix& s_prev, const EncoderOutput& enc,
                                  const ModelParams& params);

// s_t = gru(concat(E[y_prev], context), s_prev)
Matrix decoder_step(int y_prev, const Matrix& s_prev, const Matrix& context,
                    const ModelParams& params);

// s_t * W, length-vocab logits; the caller applies softmax.
Matrix project_logits(const Matrix& s_t, const ModelParams& params);

// Topic used when no explicit topic is given: the first line's characters.
std::vector<int> default_topic(const EncodedPoem& poem);

// Teacher-forced mean per-token cross entropy of one poem (plain path, no tape).
double teacher_forced_ce(const ModelParams& params, const EncodedPoem& poem,
                         const std::vector<int>& topic);

// Same loss built on the tape; used by training and the gradient check.
Var poem_loss_graph(Graph& g, ModelParams& params, const EncodedPoem& poem,
                    const std::vector<int>& topic);

enum class Regime { C1, CInfinity };

struct TrainConfig {
  Regime regime = Regime::C1;
  int max_epochs = 1;       // C1 forces exactly one pass
  double stop_loss = 0.05;  // CInfinity stops once train CE drops below this
  int batch_size = 1;
  uint64_t seed = 1;
  double rho = 0.95;
  double eps = 1e-6;
};

struct EpochStats {
  int epoch;
  double train_ce;
  double valid_ce;
};

struct TrainResult {
  std::vector<EpochStats> log;
};

// SGD over single poems with AdaDelta step sizes. Deterministic for a fixed
// seed: same data and config give bit-identical parameters. Topics default to
// each poem's first line; pass explicit per-poem topics to override.
TrainResult train(ModelParams& params, const std::vector<EncodedPoem>& train_set,
                  const std::vector<EncodedPoem>& valid_set, const TrainConfig& config,
                  const std::vector<std::vector<int>>* train_topics = nullptr,
                  const std::vector<std::vector<int>>* valid_topics = nullptr);

// exp(mean teacher-forced cross entropy per token) over the set.
double perplexity(const ModelParams& params, const std::vector<EncodedPoem>& poems,
                  const std::vector<std::vector<int>>* topics = nullptr);

void write_training_log(const std::string& path, const std::vector<EpochStats>& log);

}  // namespace mempoet
