#include "mempoet/genkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "mempoet/binio.hpp"
#include "mempoet/errors.hpp"
#include "mempoet/rng.hpp"

namespace mempoet {

using nlohmann::json;

void GenerationConfig::validate(const ModelParams& params) const {
  if (beta < 0.0) throw ConfigError("generation: beta must be >= 0");
  if (beam_width < 1) throw ConfigError("generation: beam width must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("generation: temperature must be > 0");
  if (bank) {
    if (bank->checkpoint_fingerprint() != params.fingerprint())
      throw ConfigError("generation: memory bank was built from a different checkpoint");
    if (bank->empty()) throw ConfigError("generation: memory bank is empty");
  }
  if (constraints != ConstraintMode::Off) {
    if (!pattern || !lexicon)
      throw ConfigError("generation: constraint modes need a pattern and a lexicon");
    if (pattern->genre != genre) throw ConfigError("generation: pattern genre mismatch");
  }
  if (max_tokens != 0 && max_tokens < emitted_length(genre))
    throw ConfigError("generation: max tokens below the genre's sequence length");
}

namespace {

// Stable log-softmax; finite for any finite logits.
std::vector<double> log_softmax(const Matrix& logits) {
  double mx = logits.a[0];
  for (double x : logits.a) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : logits.a) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = logits.a[i] - lse;
  return out;
}

struct StepDistribution {
  Matrix s;                   // advanced main state
  Matrix q;                   // advanced query state (memory only)
  std::vector<double> log_p;  // fused log distribution
  double memory_norm = 0.0;
};

struct Decoder {
  const ModelParams& params;
  const GenerationConfig& config;
  EncoderOutput enc;
  Matrix s0;
  bool use_memory;

  Decoder(const std::vector<int>& topic_ids, const ModelParams& p, const GenerationConfig& c)
      : params(p), config(c), use_memory(c.bank != nullptr) {
    enc = encode_keywords(topic_ids, p);
    s0 = initial_decoder_state(enc, p);
  }

  Matrix initial_query() const { return Matrix(1, params.dims.d_state); }

  StepDistribution advance(int y_prev, const Matrix& s_prev, const Matrix& q_prev) const {
    StepDistribution out;
    const AttentionResult att = attention_context(s_prev, enc, params);
    out.s = decoder_step(y_prev, s_prev, att.context, params);
    Matrix logits = project_logits(out.s, params);
    if (use_memory) {
      out.q = query_decoder_step(y_prev, q_prev, params);
      const Matrix v = memory_read(out.q, *config.bank);
      out.memory_norm = config.beta * norm2(v);
      // beta == 0 leaves the logits untouched so the bare model is
      // reproduced bit for bit.
      if (config.beta != 0.0) {
        const Matrix& E = params.embeddings();
        for (int c = 0; c < E.rows; ++c) {
          const double* row = E.row_ptr(c);
          double acc = 0.0;
          for (int j = 0; j < E.cols; ++j) acc += row[j] * v.a[static_cast<size_t>(j)];
          logits.a[static_cast<size_t>(c)] += config.beta * acc;
        }
      }
    }
    out.log_p = log_softmax(logits);
    return out;
  }

  // Mask for this step; falls back to the structure-only mask when the
  // constraint mask admits nothing.
  std::vector<uint8_t> mask_at(int step, const std::vector<int>& emitted, bool* fallback) const {
    *fallback = false;
    if (config.constraints == ConstraintMode::Mask) {
      std::vector<uint8_t> mask = allowed_chars(step, emitted, *config.pattern, *config.lexicon,
                                                params.vocab, config.policy);
      if (std::find(mask.begin(), mask.end(), uint8_t{1}) != mask.end()) return mask;
      *fallback = true;
    }
    return structure_mask(step, config.genre, params.vocab);
  }
};

struct Candidate {
  std::vector<int> tokens;
  double log_prob = 0.0;
};

Candidate rollout_single(const Decoder& dec, DecodeKind kind, Rng* rng) {
  const int steps = emitted_length(dec.config.genre);
  Candidate cand;
  Matrix s = dec.s0;
  Matrix q = dec.initial_query();
  int y_prev = Vocabulary::kBos;
  for (int step = 0; step < steps; ++step) {
    const StepDistribution d = dec.advance(y_prev, s, q);
    bool fallback = false;
    const std::vector<uint8_t> mask = dec.mask_at(step, cand.tokens, &fallback);
    int chosen = -1;
    if (kind == DecodeKind::Greedy) {
      for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        if (chosen < 0 || d.log_p[i] > d.log_p[static_cast<size_t>(chosen)])
          chosen = static_cast<int>(i);
      }
    } else {
      // Temperature sampling over the admitted tokens.
      std::vector<double> w(mask.size(), 0.0);
      double mx = -1e300;
      for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) mx = std::max(mx, d.log_p[i] / dec.config.temperature);
      double total = 0.0;
      for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        w[i] = std::exp(d.log_p[i] / dec.config.temperature - mx);
        total += w[i];
      }
      const double r = rng->next_double() * total;
      double acc = 0.0;
      for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        acc += w[i];
        chosen = static_cast<int>(i);
        if (r < acc) break;
      }
    }
    cand.tokens.push_back(chosen);
    cand.log_prob += d.log_p[static_cast<size_t>(chosen)];
    s = d.s;
    q = d.q;
    y_prev = chosen;
  }
  return cand;
}

Candidate rollout_beam(const Decoder& dec) {
  struct Beam {
    std::vector<int> tokens;
    double log_prob = 0.0;
    Matrix s;
    Matrix q;
    int y_prev = Vocabulary::kBos;
  };
  const int steps = emitted_length(dec.config.genre);
  const int width = dec.config.beam_width;
  std::vector<Beam> beams(1);
  beams[0].s = dec.s0;
  beams[0].q = dec.initial_query();

  for (int step = 0; step < steps; ++step) {
    std::vector<double> lps;
    std::vector<std::vector<double>> dists;
    std::vector<std::vector<uint8_t>> masks;
    std::vector<StepDistribution> advanced;
    for (Beam& b : beams) {
      StepDistribution d = dec.advance(b.y_prev, b.s, b.q);
      lps.push_back(b.log_prob);
      dists.push_back(d.log_p);
      bool fallback = false;
      masks.push_back(dec.mask_at(step, b.tokens, &fallback));
      advanced.push_back(std::move(d));
    }
    const std::vector<BeamExtension> ext = beam_step(lps, dists, width, masks);
    std::vector<Beam> next;
    next.reserve(ext.size());
    for (const BeamExtension& e : ext) {
      Beam nb;
      nb.tokens = beams[static_cast<size_t>(e.beam)].tokens;
      nb.tokens.push_back(e.token);
      nb.log_prob = e.log_prob;
      nb.s = advanced[static_cast<size_t>(e.beam)].s;
      nb.q = advanced[static_cast<size_t>(e.beam)].q;
      nb.y_prev = e.token;
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
  }
  Candidate best;
  best.tokens = beams[0].tokens;
  best.log_prob = beams[0].log_prob;
  return best;
}

GenerationTrace replay_trace(const Decoder& dec, const std::vector<int>& tokens) {
  GenerationTrace trace;
  Matrix s = dec.s0;
  Matrix q = dec.initial_query();
  int y_prev = Vocabulary::kBos;
  std::vector<int> prefix;
  for (size_t step = 0; step < tokens.size(); ++step) {
    const StepDistribution d = dec.advance(y_prev, s, q);
    bool fallback = false;
    dec.mask_at(static_cast<int>(step), prefix, &fallback);
    StepRecord rec;
    rec.step = static_cast<int>(step);
    rec.chosen = tokens[step];
    rec.state_digest = digest(d.s);
    rec.has_query = dec.use_memory;
    rec.query_digest = dec.use_memory ? digest(d.q) : 0;
    rec.memory_norm = d.memory_norm;
    rec.mask_fallback = fallback;
    std::vector<int> ids(d.log_p.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::partial_sort(ids.begin(), ids.begin() + std::min<size_t>(5, ids.size()), ids.end(),
                      [&](int a, int b) {
                        if (d.log_p[static_cast<size_t>(a)] != d.log_p[static_cast<size_t>(b)])
                          return d.log_p[static_cast<size_t>(a)] > d.log_p[static_cast<size_t>(b)];
                        return a < b;
                      });
    for (size_t i = 0; i < std::min<size_t>(5, ids.size()); ++i)
      rec.top5.emplace_back(ids[i], std::exp(d.log_p[static_cast<size_t>(ids[i])]));
    trace.steps.push_back(std::move(rec));
    prefix.push_back(tokens[step]);
    s = d.s;
    q = d.q;
    y_prev = tokens[step];
  }
  return trace;
}

}  // namespace

std::vector<BeamExtension> beam_step(const std::vector<double>& beam_log_probs,
                                     const std::vector<std::vector<double>>& log_distributions,
                                     int width, const std::vector<std::vector<uint8_t>>& masks) {
  if (width < 1) throw UsageError("beam_step: width must be >= 1");
  if (beam_log_probs.size() != log_distributions.size() ||
      beam_log_probs.size() != masks.size())
    throw UsageError("beam_step: input sizes disagree");
  std::vector<BeamExtension> all;
  for (size_t b = 0; b < beam_log_probs.size(); ++b) {
    const auto& dist = log_distributions[b];
    const auto& mask = masks[b];
    if (mask.size() != dist.size()) throw UsageError("beam_step: mask size mismatch");
    for (size_t t = 0; t < dist.size(); ++t) {
      if (!mask[t]) continue;
      all.push_back({static_cast<int>(b), static_cast<int>(t), beam_log_probs[b] + dist[t]});
    }
  }
  std::sort(all.begin(), all.end(), [](const BeamExtension& x, const BeamExtension& y) {
    if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
    if (x.token != y.token) return x.token < y.token;
    return x.beam < y.beam;
  });
  if (static_cast<int>(all.size()) > width) all.resize(static_cast<size_t>(width));
  return all;
}

std::vector<BeamExtension> beam_step(const std::vector<double>& beam_log_probs,
                                     const std::vector<std::vector<double>>& log_distributions,
                                     int width, const std::vector<uint8_t>& mask) {
  return beam_step(beam_log_probs, log_distributions, width,
                   std::vector<std::vector<uint8_t>>(beam_log_probs.size(), mask));
}

GenerationResult generate(const std::vector<std::string>& topic_chars, const ModelParams& params,
                          const GenerationConfig& config) {
  if (topic_chars.empty()) throw UsageError("generate: empty topic");
  config.validate(params);
  std::vector<int> topic_ids;
  topic_ids.reserve(topic_chars.size());
  for (const std::string& ch : topic_chars) topic_ids.push_back(params.vocab.id_of(ch));

  const Decoder dec(topic_ids, params, config);

  Candidate chosen;
  if (config.decode == DecodeKind::Greedy) {
    chosen = rollout_single(dec, DecodeKind::Greedy, nullptr);
  } else if (config.decode == DecodeKind::Sample) {
    Rng rng(config.seed);
    chosen = rollout_single(dec, DecodeKind::Sample, &rng);
  } else {
    // The greedy rollout is kept as an extra hypothesis so widening the beam
    // can never fall below the greedy sequence's score.
    const Candidate beam = rollout_beam(dec);
    const Candidate greedy = rollout_single(dec, DecodeKind::Greedy, nullptr);
    if (config.constraints == ConstraintMode::Rerank) {
      auto score = [&](const Candidate& c) {
        std::vector<int> full(c.tokens);
        full.insert(full.begin(), Vocabulary::kBos);
        const Poem p = decode_tokens(full, params.vocab);
        return compliance_score(p, *config.pattern, *config.lexicon, config.policy).score;
      };
      const double sb = score(beam);
      const double sg = score(greedy);
      chosen = sb > sg || (sb == sg && beam.log_prob >= greedy.log_prob) ? beam : greedy;
    } else {
      chosen = beam.log_prob >= greedy.log_prob ? beam : greedy;
    }
  }

  GenerationResult result;
  result.tokens = chosen.tokens;
  result.log_prob = chosen.log_prob;
  result.trace = replay_trace(dec, chosen.tokens);
  std::vector<int> full(chosen.tokens);
  full.insert(full.begin(), Vocabulary::kBos);
  result.poem = decode_tokens(full, params.vocab);
  return result;
}

NoveltyScore novelty_score(const Poem& poem, const std::vector<Poem>& reference, int n_min,
                           int n_max) {
  if (reference.empty()) throw UsageError("novelty_score: empty reference corpus");
  std::unordered_set<std::string> ref_runs;
  for (const Poem& r : reference) {
    for (const auto& line : r.lines) {
      for (size_t i = 0; i < line.size(); ++i) {
        std::string run;
        for (size_t j = i; j < line.size(); ++j) {
          run += line[j];
          ref_runs.insert(run);
        }
      }
    }
  }
  NoveltyScore score;
  score.max_match = 0;
  for (int n = n_min; n <= n_max; ++n) score.novel_fraction[n] = 1.0;

  std::map<int, std::pair<int, int>> novel_counts;  // n -> (novel, total)
  for (const auto& line : poem.lines) {
    const int len = static_cast<int>(line.size());
    for (int i = 0; i < len; ++i) {
      std::string run;
      for (int j = i; j < len; ++j) {
        run += line[static_cast<size_t>(j)];
        const int n = j - i + 1;
        const bool matched = ref_runs.count(run) != 0;
        if (matched) score.max_match = std::max(score.max_match, n);
        if (n >= n_min && n <= n_max) {
          auto& [novel, total] = novel_counts[n];
          ++total;
          if (!matched) ++novel;
        }
      }
    }
  }
  for (const auto& [n, counts] : novel_counts) {
    score.novel_fraction[n] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return score;
}

namespace {

std::map<std::string, int64_t> char_counts(const std::vector<Poem>& poems) {
  std::map<std::string, int64_t> counts;
  for (const Poem& p : poems)
    for (const auto& line : p.lines)
      for (const auto& ch : line) ++counts[ch];
  return counts;
}

}  // namespace

double style_shift(const std::vector<Poem>& poems, const std::vector<Poem>& style,
                   const std::vector<Poem>& background) {
  if (style.empty() || background.empty())
    throw UsageError("style_shift: style and background corpora must be nonempty");
  const auto style_counts = char_counts(style);
  const auto background_counts = char_counts(background);

  std::set<std::string> alphabet;
  for (const auto& [ch, _] : style_counts) alphabet.insert(ch);
  for (const auto& [ch, _] : background_counts) alphabet.insert(ch);
  for (const Poem& p : poems)
    for (const auto& line : p.lines)
      for (const auto& ch : line) alphabet.insert(ch);

  double style_total = 0.0;
  double background_total = 0.0;
  for (const auto& [_, n] : style_counts) style_total += static_cast<double>(n);
  for (const auto& [_, n] : background_counts) background_total += static_cast<double>(n);
  const double v = static_cast<double>(alphabet.size());

  double sum = 0.0;
  int64_t chars = 0;
  for (const Poem& p : poems) {
    for (const auto& line : p.lines) {
      for (const auto& ch : line) {
        auto sit = style_counts.find(ch);
        auto bit = background_counts.find(ch);
        const double ps =
            (static_cast<double>(sit == style_counts.end() ? 0 : sit->second) + 1.0) /
            (style_total + v);
        const double pb =
            (static_cast<double>(bit == background_counts.end() ? 0 : bit->second) + 1.0) /
            (background_total + v);
        sum += std::log(ps / pb);
        ++chars;
      }
    }
  }
  return sum / static_cast<double>(chars);
}

double style_shift(const Poem& poem, const std::vector<Poem>& style,
                   const std::vector<Poem>& background) {
  return style_shift(std::vector<Poem>{poem}, style, background);
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct EvalConfig {
  std::string name;
  std::string checkpoint;
  std::string bank;  // empty = no memory
  GenerationConfig gen;
};

DecodeKind parse_decode(const std::string& s) {
  if (s == "greedy") return DecodeKind::Greedy;
  if (s == "beam") return DecodeKind::Beam;
  if (s == "sample") return DecodeKind::Sample;
  throw ConfigError("experiment: unknown decode strategy '" + s + "'");
}

ConstraintMode parse_constraints(const std::string& s) {
  if (s == "off") return ConstraintMode::Off;
  if (s == "mask") return ConstraintMode::Mask;
  if (s == "rerank") return ConstraintMode::Rerank;
  throw ConfigError("experiment: unknown constraint mode '" + s + "'");
}

Genre parse_genre(const std::string& s) {
  if (s == "five-char") return Genre::FiveChar;
  if (s == "seven-char") return Genre::SevenChar;
  throw ConfigError("experiment: unknown genre '" + s + "'");
}

}  // namespace

ExperimentReport experiment_run(const std::string& spec_path) {
  json spec;
  try {
    spec = json::parse(read_file(spec_path));
  } catch (const DataError& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment: invalid spec JSON: ") + e.what());
  }

  // Load every referenced artifact up front; any missing piece is a config
  // error raised before the first generation.
  auto require = [&](const char* key) -> const json& {
    if (!spec.contains(key)) throw ConfigError(std::string("experiment: spec lacks '") + key + "'");
    return spec.at(key);
  };

  std::map<std::string, ModelParams> checkpoints;
  for (const auto& [name, path] : require("checkpoints").items()) {
    try {
      checkpoints.emplace(name, ModelParams::load(path.get<std::string>()));
    } catch (const DataError& e) {
      throw ConfigError("experiment: checkpoint '" + name + "': " + e.what());
    }
  }
  std::map<std::string, MemoryBank> banks;
  if (spec.contains("banks")) {
    for (const auto& [name, path] : spec.at("banks").items()) {
      try {
        banks.emplace(name, MemoryBank::load(path.get<std::string>()));
      } catch (const DataError& e) {
        throw ConfigError("experiment: bank '" + name + "': " + e.what());
      }
    }
  }
  auto load_poems = [](const std::string& path, const std::string& what) {
    try {
      return load_corpus(path).poems;
    } catch (const DataError& e) {
      throw ConfigError("experiment: " + what + ": " + e.what());
    }
  };
  const std::vector<Poem> reference = load_poems(require("reference_corpus").get<std::string>(),
                                                 "reference corpus");
  std::map<std::string, std::vector<Poem>> styles;
  std::vector<Poem> background;
  if (spec.contains("style_corpora")) {
    for (const auto& [name, path] : spec.at("style_corpora").items())
      styles.emplace(name, load_poems(path.get<std::string>(), "style corpus '" + name + "'"));
    background = load_poems(require("background_corpus").get<std::string>(), "background corpus");
  }
  ToneLexicon lexicon;
  TonePattern pattern = TonePattern::all_free(Genre::FiveChar);
  bool have_rules = false;
  if (spec.contains("tone_lexicon") && spec.contains("pattern")) {
    try {
      lexicon = ToneLexicon::load(spec.at("tone_lexicon").get<std::string>());
      pattern = TonePattern::load(spec.at("pattern").get<std::string>());
    } catch (const DataError& e) {
      throw ConfigError(std::string("experiment: ") + e.what());
    }
    have_rules = true;
  }

  std::vector<std::vector<std::string>> topics;
  for (const auto& t : require("topics")) topics.push_back(utf8_chars(t.get<std::string>()));
  if (topics.empty()) throw ConfigError("experiment: no topics");

  std::vector<EvalConfig> configs;
  for (const auto& c : require("configs")) {
    EvalConfig ec;
    ec.name = c.at("name").get<std::string>();
    ec.checkpoint = c.at("checkpoint").get<std::string>();
    if (!checkpoints.count(ec.checkpoint))
      throw ConfigError("experiment: config '" + ec.name + "' names unknown checkpoint '" +
                        ec.checkpoint + "'");
    if (c.contains("bank")) {
      ec.bank = c.at("bank").get<std::string>();
      if (!banks.count(ec.bank))
        throw ConfigError("experiment: config '" + ec.name + "' names unknown bank '" + ec.bank +
                          "'");
    }
    if (c.contains("beta")) ec.gen.beta = c.at("beta").get<double>();
    if (c.contains("decode")) ec.gen.decode = parse_decode(c.at("decode").get<std::string>());
    if (c.contains("beam_width")) ec.gen.beam_width = c.at("beam_width").get<int>();
    if (c.contains("temperature")) ec.gen.temperature = c.at("temperature").get<double>();
    if (c.contains("seed")) ec.gen.seed = c.at("seed").get<uint64_t>();
    if (c.contains("constraints"))
      ec.gen.constraints = parse_constraints(c.at("constraints").get<std::string>());
    if (c.contains("genre")) ec.gen.genre = parse_genre(c.at("genre").get<std::string>());
    if (c.contains("policy"))
      ec.gen.policy = c.at("policy").get<std::string>() == "strict" ? TonePolicy::Strict
                                                                    : TonePolicy::Lenient;
    if (ec.gen.constraints != ConstraintMode::Off && !have_rules)
      throw ConfigError("experiment: config '" + ec.name +
                        "' uses constraints but the spec has no tone_lexicon/pattern");
    configs.push_back(std::move(ec));
  }
  if (configs.empty()) throw ConfigError("experiment: no configs");

  // Cross-check bank fingerprints against their checkpoints before running.
  for (const EvalConfig& ec : configs) {
    if (ec.bank.empty()) continue;
    if (banks.at(ec.bank).checkpoint_fingerprint() != checkpoints.at(ec.checkpoint).fingerprint())
      throw ConfigError("experiment: bank '" + ec.bank + "' does not match checkpoint '" +
                        ec.checkpoint + "'");
  }

  ExperimentReport report;
  report.columns = {"topic", "config", "poem", "compliance", "max_match"};
  for (int n = 3; n <= 6; ++n) report.columns.push_back("novel_" + std::to_string(n));
  for (const auto& [name, _] : styles) report.columns.push_back("style_shift_" + name);
  report.columns.push_back("perplexity");

  std::map<std::string, std::vector<double>> config_compliance;
  for (size_t ti = 0; ti < topics.size(); ++ti) {
    for (const EvalConfig& ec : configs) {
      const ModelParams& params = checkpoints.at(ec.checkpoint);
      GenerationConfig gc = ec.gen;
      if (!ec.bank.empty()) gc.bank = &banks.at(ec.bank);
      if (gc.constraints != ConstraintMode::Off || have_rules) {
        gc.pattern = &pattern;
        gc.lexicon = &lexicon;
      }
      // Per-cell seed: deterministic in (config seed, topic).
      std::string topic_text;
      for (const auto& ch : topics[ti]) topic_text += ch;
      gc.seed = fnv1a64(topic_text.data(), topic_text.size(), ec.gen.seed + 0x9e3779b97f4a7c15ull);

      const GenerationResult gen = generate(topics[ti], params, gc);

      std::vector<std::string> row;
      row.push_back(topic_text);
      row.push_back(ec.name);
      row.push_back(gen.poem.text("/"));
      double compliance = std::numeric_limits<double>::quiet_NaN();
      if (have_rules && pattern.genre == gen.poem.genre)
        compliance = compliance_score(gen.poem, pattern, lexicon).score;
      row.push_back(format_double(compliance));
      const NoveltyScore nov = novelty_score(gen.poem, reference);
      row.push_back(std::to_string(nov.max_match));
      for (int n = 3; n <= 6; ++n) row.push_back(format_double(nov.novel_fraction.at(n)));
      for (const auto& [name, corpus] : styles)
        row.push_back(format_double(style_shift(gen.poem, corpus, background)));
      const EncodedPoem encoded = encode_poem(gen.poem, params.vocab);
      std::vector<int> topic_ids;
      for (const auto& ch : topics[ti]) topic_ids.push_back(params.vocab.id_of(ch));
      const std::vector<std::vector<int>> topic_override{topic_ids};
      row.push_back(format_double(perplexity(params, {encoded}, &topic_override)));

      if (!std::isnan(compliance)) config_compliance[ec.name].push_back(compliance);
      report.rows.push_back(std::move(row));
    }
  }

  std::string csv;
  for (size_t i = 0; i < report.columns.size(); ++i) {
    if (i) csv += ',';
    csv += report.columns[i];
  }
  csv += '\n';
  for (const auto& row : report.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) csv += ',';
      csv += row[i];
    }
    csv += '\n';
  }
  report.csv = std::move(csv);

  std::string summary = "cells: " + std::to_string(report.rows.size()) + " (" +
                        std::to_string(topics.size()) + " topics x " +
                        std::to_string(configs.size()) + " configs)\n";
  for (const auto& [name, values] : config_compliance) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    summary += "mean compliance [" + name + "]: " + format_double(mean) + "\n";
  }
  report.summary = std::move(summary);
  return report;
}

}  // namespace mempoet
