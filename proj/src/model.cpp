#include "mempoet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "mempoet/binio.hpp"
#include "mempoet/errors.hpp"
#include "mempoet/rng.hpp"

namespace mempoet {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[] = "MEMPOET1";
constexpr double kInitRange = 0.08;

struct TensorShape {
  std::string name;
  int rows;
  int cols;
};

void push_gru_shapes(std::vector<TensorShape>& out, const std::string& prefix, int in_dim,
                     int hid) {
  for (const char* gate : {"z", "r", "h"}) {
    out.push_back({prefix + ".W" + gate, in_dim, hid});
    out.push_back({prefix + ".U" + gate, hid, hid});
    out.push_back({prefix + ".b" + gate, 1, hid});
  }
}

// Single source of truth for the parameter map; init creates from it and
// load validates against it.
std::vector<TensorShape> tensor_shapes(const Dims& d) {
  std::vector<TensorShape> out;
  out.push_back({"E", d.vocab, d.d_embed});
  push_gru_shapes(out, "enc_fw", d.d_embed, d.d_hidden);
  push_gru_shapes(out, "enc_bw", d.d_embed, d.d_hidden);
  push_gru_shapes(out, "dec", d.d_embed + d.d_ctx(), d.d_state);
  out.push_back({"bridge.W", d.d_ctx(), d.d_state});
  out.push_back({"bridge.b", 1, d.d_state});
  out.push_back({"att.A", d.d_state, d.d_att});
  out.push_back({"att.B", d.d_ctx(), d.d_att});
  out.push_back({"att.u", 1, d.d_att});
  out.push_back({"W", d.d_state, d.vocab});
  std::sort(out.begin(), out.end(),
            [](const TensorShape& a, const TensorShape& b) { return a.name < b.name; });
  return out;
}

bool is_bias(const std::string& name) {
  if (name == "bridge.b") return true;
  for (const char* suffix : {".bz", ".br", ".bh"}) {
    if (name.size() > 3 && name.compare(name.size() - 3, 3, suffix) == 0) return true;
  }
  return false;
}

GruWeights gru_view(const ParamStore& store, const std::string& prefix) {
  return GruWeights{&store.param(prefix + ".Wz"), &store.param(prefix + ".Uz"),
                    &store.param(prefix + ".bz"), &store.param(prefix + ".Wr"),
                    &store.param(prefix + ".Ur"), &store.param(prefix + ".br"),
                    &store.param(prefix + ".Wh"), &store.param(prefix + ".Uh"),
                    &store.param(prefix + ".bh")};
}

Matrix embedding_row(const ModelParams& params, int id) {
  const Matrix& E = params.embeddings();
  if (id < 0 || id >= E.rows) throw UsageError("embedding_row: id out of range");
  Matrix out(1, E.cols);
  std::copy(E.row_ptr(id), E.row_ptr(id) + E.cols, out.a.begin());
  return out;
}

json dims_to_json(const Dims& d) {
  return json{{"vocab", d.vocab},     {"d_embed", d.d_embed}, {"d_hidden", d.d_hidden},
              {"d_state", d.d_state}, {"d_att", d.d_att},     {"max_topic", d.max_topic}};
}

Dims dims_from_json(const json& j) {
  Dims d;
  d.vocab = j.at("vocab").get<int>();
  d.d_embed = j.at("d_embed").get<int>();
  d.d_hidden = j.at("d_hidden").get<int>();
  d.d_state = j.at("d_state").get<int>();
  d.d_att = j.at("d_att").get<int>();
  d.max_topic = j.at("max_topic").get<int>();
  return d;
}

}  // namespace

ModelParams ModelParams::init(const Vocabulary& vocab, const Dims& dims, uint64_t seed) {
  ModelParams p;
  p.dims = dims;
  p.dims.vocab = vocab.size();
  p.vocab = vocab;
  Rng rng(seed);
  // Weights uniform(-0.08, 0.08), biases zero; tensors filled in sorted name
  // order so the stream of draws is reproducible.
  for (const TensorShape& t : tensor_shapes(p.dims)) {
    Matrix m(t.rows, t.cols);
    if (!is_bias(t.name)) {
      for (double& x : m.a) x = rng.uniform(-kInitRange, kInitRange);
    }
    p.store.add(t.name, std::move(m));
  }
  return p;
}

GruWeights ModelParams::encoder_fw() const { return gru_view(store, "enc_fw"); }
GruWeights ModelParams::encoder_bw() const { return gru_view(store, "enc_bw"); }
GruWeights ModelParams::decoder() const { return gru_view(store, "dec"); }

uint64_t ModelParams::fingerprint() const {
  uint64_t h = fnv1a64(kCheckpointMagic, 8);
  const json dims_json = dims_to_json(dims);
  const std::string dims_str = dims_json.dump();
  h = fnv1a64(dims_str.data(), dims_str.size(), h);
  for (const auto& [ch, count] : vocab.entries()) {
    h = fnv1a64(ch.data(), ch.size(), h);
    h = fnv1a64(&count, sizeof(count), h);
  }
  for (const std::string& name : store.names()) {
    const Matrix& m = store.param(name);
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(&m.rows, sizeof(m.rows), h);
    h = fnv1a64(&m.cols, sizeof(m.cols), h);
    h = fnv1a64(m.a.data(), m.a.size() * sizeof(double), h);
  }
  return h;
}

void ModelParams::save(const std::string& path) const {
  json manifest;
  manifest["dims"] = dims_to_json(dims);
  json vocab_json = json::array();
  for (const auto& [ch, count] : vocab.entries()) vocab_json.push_back({ch, count});
  manifest["vocab"] = vocab_json;
  manifest["config"] = config_echo;
  json tensors = json::array();
  for (const std::string& name : store.names()) {
    const Matrix& m = store.param(name);
    tensors.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
  }
  manifest["tensors"] = tensors;
  const std::string manifest_str = manifest.dump();

  std::string bytes;
  bytes.append(kCheckpointMagic, 8);
  put_u64(bytes, manifest_str.size());
  bytes += manifest_str;
  for (const std::string& name : store.names()) {
    const Matrix& m = store.param(name);
    for (double x : m.a) put_f64(bytes, x);
  }
  write_file(path, bytes);
}

ModelParams ModelParams::load(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  size_t pos = 8;
  const uint64_t manifest_len = get_u64(bytes, pos);
  if (pos + manifest_len > bytes.size()) throw DataError("checkpoint: truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, manifest_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: invalid manifest: ") + e.what());
  }
  pos += manifest_len;

  ModelParams p;
  p.dims = dims_from_json(manifest.at("dims"));
  std::vector<std::pair<std::string, int64_t>> entries;
  for (const auto& item : manifest.at("vocab"))
    entries.emplace_back(item.at(0).get<std::string>(), item.at(1).get<int64_t>());
  p.vocab = Vocabulary::from_entries(entries);
  p.config_echo = manifest.at("config").get<std::string>();
  if (p.vocab.size() != p.dims.vocab)
    throw DataError("checkpoint: vocabulary size disagrees with dims");

  // Validate every declared tensor against the canonical shape map.
  const std::vector<TensorShape> expected = tensor_shapes(p.dims);
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != expected.size()) throw DataError("checkpoint: tensor count mismatch");
  for (size_t i = 0; i < expected.size(); ++i) {
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != expected[i].name ||
        t.at("rows").get<int>() != expected[i].rows || t.at("cols").get<int>() != expected[i].cols)
      throw DataError("checkpoint: tensor " + expected[i].name + " has unexpected shape");
  }
  for (const TensorShape& t : expected) {
    Matrix m(t.rows, t.cols);
    for (double& x : m.a) x = get_f64(bytes, pos);
    p.store.add(t.name, std::move(m));
  }
  if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes");
  return p;
}

EncoderOutput encode_keywords(const std::vector<int>& topic_ids, const ModelParams& params) {
  if (topic_ids.empty()) throw UsageError("encode_keywords: empty topic");
  const int n = static_cast<int>(topic_ids.size());
  if (n > params.dims.max_topic) throw UsageError("encode_keywords: topic longer than max");
  const GruWeights fw = params.encoder_fw();
  const GruWeights bw = params.encoder_bw();

  std::vector<Matrix> forward(static_cast<size_t>(n));
  Matrix h(1, params.dims.d_hidden);
  for (int i = 0; i < n; ++i) {
    h = gru_cell(embedding_row(params, topic_ids[static_cast<size_t>(i)]), h, fw);
    forward[static_cast<size_t>(i)] = h;
  }
  std::vector<Matrix> backward(static_cast<size_t>(n));
  h = Matrix(1, params.dims.d_hidden);
  for (int i = n - 1; i >= 0; --i) {
    h = gru_cell(embedding_row(params, topic_ids[static_cast<size_t>(i)]), h, bw);
    backward[static_cast<size_t>(i)] = h;
  }
  EncoderOutput out;
  out.states.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.states.push_back(concat_cols(forward[static_cast<size_t>(i)],
                                     backward[static_cast<size_t>(i)]));
  return out;
}

namespace {

Matrix slice_cols(const Matrix& m, int begin, int len) {
  Matrix out(m.rows, len);
  for (int i = 0; i < m.rows; ++i)
    std::copy(m.row_ptr(i) + begin, m.row_ptr(i) + begin + len, out.row_ptr(i));
  return out;
}

}  // namespace

Matrix initial_decoder_state(const EncoderOutput& enc, const ModelParams& params) {
  if (enc.states.empty()) throw UsageError("initial_decoder_state: empty encoder output");
  const int dh = params.dims.d_hidden;
  const Matrix final_fw = slice_cols(enc.states.back(), 0, dh);
  const Matrix final_bw = slice_cols(enc.states.front(), dh, dh);
  return tanh_map(add(matmul(concat_cols(final_fw, final_bw), params.store.param("bridge.W")),
                      params.store.param("bridge.b")));
}

AttentionResult attention_context(const Matrix& s_prev, const EncoderOutput& enc,
                                  const ModelParams& params) {
  if (enc.states.empty()) throw UsageError("attention_context: empty encoder output");
  const Matrix& A = params.store.param("att.A");
  const Matrix& B = params.store.param("att.B");
  const Matrix& u = params.store.param("att.u");
  const Matrix sA = matmul(s_prev, A);
  const int n = static_cast<int>(enc.states.size());
  Matrix scores(1, n);
  for (int i = 0; i < n; ++i) {
    const Matrix t = tanh_map(add(sA, matmul(enc.states[static_cast<size_t>(i)], B)));
    scores.a[static_cast<size_t>(i)] = dot(t, u);
  }
  AttentionResult r;
  r.weights = softmax(scores);
  Matrix h_all(n, params.dims.d_ctx());
  for (int i = 0; i < n; ++i)
    std::copy(enc.states[static_cast<size_t>(i)].a.begin(),
              enc.states[static_cast<size_t>(i)].a.end(), h_all.row_ptr(i));
  r.context = matmul(r.weights, h_all);
  return r;
}

Matrix decoder_step(int y_prev, const Matrix& s_prev, const Matrix& context,
                    const ModelParams& params) {
  const Matrix x = concat_cols(embedding_row(params, y_prev), context);
  return gru_cell(x, s_prev, params.decoder());
}

Matrix project_logits(const Matrix& s_t, const ModelParams& params) {
  return matmul(s_t, params.projection());
}

std::vector<int> default_topic(const EncodedPoem& poem) {
  const size_t n = poem.tokens.size();
  Genre genre;
  if (n == static_cast<size_t>(encoded_length(Genre::FiveChar))) {
    genre = Genre::FiveChar;
  } else if (n == static_cast<size_t>(encoded_length(Genre::SevenChar))) {
    genre = Genre::SevenChar;
  } else {
    throw UsageError("default_topic: malformed encoded poem");
  }
  const int L = line_length(genre);
  return std::vector<int>(poem.tokens.begin() + 1, poem.tokens.begin() + 1 + L);
}

double teacher_forced_ce(const ModelParams& params, const EncodedPoem& poem,
                         const std::vector<int>& topic) {
  const EncoderOutput enc = encode_keywords(topic, params);
  Matrix s = initial_decoder_state(enc, params);
  double total = 0.0;
  const size_t T = poem.tokens.size();
  for (size_t t = 1; t < T; ++t) {
    const AttentionResult att = attention_context(s, enc, params);
    s = decoder_step(poem.tokens[t - 1], s, att.context, params);
    const Matrix probs = softmax(project_logits(s, params));
    total += cross_entropy(probs, poem.tokens[t]);
  }
  return total / static_cast<double>(T - 1);
}

Var poem_loss_graph(Graph& g, ModelParams& params, const EncodedPoem& poem,
                    const std::vector<int>& topic) {
  if (topic.empty()) throw UsageError("poem_loss_graph: empty topic");
  if (static_cast<int>(topic.size()) > params.dims.max_topic)
    throw UsageError("poem_loss_graph: topic longer than max");
  ParamStore& ps = params.store;
  const int n = static_cast<int>(topic.size());
  const int dh = params.dims.d_hidden;

  const Var E = g.param(ps, "E");
  const Graph::GruVars fw = g.gru_params(ps, "enc_fw");
  const Graph::GruVars bw = g.gru_params(ps, "enc_bw");
  const Graph::GruVars dec = g.gru_params(ps, "dec");

  std::vector<Var> forward(static_cast<size_t>(n));
  Var h = g.constant(Matrix(1, dh));
  for (int i = 0; i < n; ++i) {
    h = g.gru(g.pick_row(E, topic[static_cast<size_t>(i)]), h, fw);
    forward[static_cast<size_t>(i)] = h;
  }
  std::vector<Var> backward(static_cast<size_t>(n));
  h = g.constant(Matrix(1, dh));
  for (int i = n - 1; i >= 0; --i) {
    h = g.gru(g.pick_row(E, topic[static_cast<size_t>(i)]), h, bw);
    backward[static_cast<size_t>(i)] = h;
  }
  std::vector<Var> states(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    states[static_cast<size_t>(i)] =
        g.concat_cols(forward[static_cast<size_t>(i)], backward[static_cast<size_t>(i)]);

  Var s = g.tanh_fn(
      g.add(g.matmul(g.concat_cols(forward.back(), backward.front()), g.param(ps, "bridge.W")),
            g.param(ps, "bridge.b")));

  const Var A = g.param(ps, "att.A");
  const Var B = g.param(ps, "att.B");
  const Var u = g.param(ps, "att.u");
  const Var W = g.param(ps, "W");
  std::vector<Var> h_proj(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    h_proj[static_cast<size_t>(i)] = g.matmul(states[static_cast<size_t>(i)], B);
  const Var h_stack = g.stack_rows(states);

  std::vector<Var> losses;
  const size_t T = poem.tokens.size();
  losses.reserve(T - 1);
  for (size_t t = 1; t < T; ++t) {
    const Var sA = g.matmul(s, A);
    std::vector<Var> scores(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      scores[static_cast<size_t>(i)] =
          g.dot(g.tanh_fn(g.add(sA, h_proj[static_cast<size_t>(i)])), u);
    const Var alpha = g.softmax_row(g.stack_scalars(scores));
    const Var context = g.matmul(alpha, h_stack);
    const Var x = g.concat_cols(g.pick_row(E, poem.tokens[t - 1]), context);
    s = g.gru(x, s, dec);
    const Var logits = g.matmul(s, W);
    losses.push_back(g.softmax_xent(logits, poem.tokens[t]));
  }
  return g.scale(g.sum(losses), 1.0 / static_cast<double>(T - 1));
}

TrainResult train(ModelParams& params, const std::vector<EncodedPoem>& train_set,
                  const std::vector<EncodedPoem>& valid_set, const TrainConfig& config,
                  const std::vector<std::vector<int>>* train_topics,
                  const std::vector<std::vector<int>>* valid_topics) {
  if (train_set.empty()) throw UsageError("train: empty training set");
  if (train_topics && train_topics->size() != train_set.size())
    throw UsageError("train: topic count disagrees with training set");
  if (valid_topics && valid_topics->size() != valid_set.size())
    throw UsageError("train: topic count disagrees with validation set");
  if (config.batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  const int max_epochs = config.regime == Regime::C1 ? 1 : config.max_epochs;

  auto topic_of = [](const std::vector<std::vector<int>>* topics,
                     const std::vector<EncodedPoem>& poems, size_t i) {
    return topics ? (*topics)[i] : default_topic(poems[i]);
  };

  TrainResult result;
  Rng rng(config.seed);
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_ce = 0.0;
    size_t in_batch = 0;
    for (size_t k = 0; k < order.size(); ++k) {
      const size_t idx = order[k];
      Graph g;
      g.reserve(64 * train_set[idx].tokens.size());
      const Var loss = poem_loss_graph(g, params, train_set[idx],
                                       topic_of(train_topics, train_set, idx));
      const double loss_value = g.scalar(loss);
      if (!std::isfinite(loss_value))
        throw DataError("train: loss diverged at epoch " + std::to_string(epoch) + ", poem " +
                        std::to_string(idx));
      epoch_ce += loss_value;
      g.backward(loss);
      if (++in_batch == static_cast<size_t>(config.batch_size) || k + 1 == order.size()) {
        params.store.adadelta_step(config.rho, config.eps);
        params.store.zero_grads();
        in_batch = 0;
      }
    }
    epoch_ce /= static_cast<double>(train_set.size());

    double valid_ce = std::numeric_limits<double>::quiet_NaN();
    if (!valid_set.empty()) {
      valid_ce = 0.0;
      for (size_t i = 0; i < valid_set.size(); ++i)
        valid_ce += teacher_forced_ce(params, valid_set[i], topic_of(valid_topics, valid_set, i));
      valid_ce /= static_cast<double>(valid_set.size());
    }
    result.log.push_back({epoch, epoch_ce, valid_ce});
    if (config.regime == Regime::CInfinity && epoch_ce < config.stop_loss) break;
  }
  return result;
}

double perplexity(const ModelParams& params, const std::vector<EncodedPoem>& poems,
                  const std::vector<std::vector<int>>* topics) {
  if (poems.empty()) throw UsageError("perplexity: empty set");
  if (topics && topics->size() != poems.size())
    throw UsageError("perplexity: topic count disagrees with set");
  double total_ce = 0.0;
  double total_tokens = 0.0;
  for (size_t i = 0; i < poems.size(); ++i) {
    const std::vector<int> topic = topics ? (*topics)[i] : default_topic(poems[i]);
    const double tokens = static_cast<double>(poems[i].tokens.size() - 1);
    total_ce += teacher_forced_ce(params, poems[i], topic) * tokens;
    total_tokens += tokens;
  }
  return std::exp(total_ce / total_tokens);
}

void write_training_log(const std::string& path, const std::vector<EpochStats>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_training_log: cannot open " + path);
  out << "epoch,train_ce,valid_ce\n";
  char buf[80];
  for (const EpochStats& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.train_ce, e.valid_ce);
    out << buf;
  }
}

}  // namespace mempoet
