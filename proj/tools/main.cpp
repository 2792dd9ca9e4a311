#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mempoet/binio.hpp"
#include "mempoet/constraints.hpp"
#include "mempoet/corpus.hpp"
#include "mempoet/errors.hpp"
#include "mempoet/genkit.hpp"
#include "mempoet/memory.hpp"
#include "mempoet/model.hpp"

// Exit codes: 0 success, 2 configuration error, 3 data error.

namespace {

using namespace mempoet;
using nlohmann::json;

Genre genre_from_flag(const std::string& s) {
  if (s == "five-char") return Genre::FiveChar;
  if (s == "seven-char") return Genre::SevenChar;
  throw ConfigError("genre must be five-char or seven-char");
}

struct VocabArgs {
  std::string corpus, out, report;
  int64_t min_count = 1;
  int64_t filter_threshold = 100;
  std::string filter_mode = "all-rare";
};

int run_vocab(const VocabArgs& a) {
  LoadResult loaded = load_corpus(a.corpus);
  if (!a.report.empty()) write_rejection_report(a.report, loaded.rejected);
  std::vector<Poem> poems = loaded.poems;
  if (a.filter_mode != "off") {
    poems = filter_low_frequency(poems, a.filter_threshold,
                                 a.filter_mode == "any-rare" ? FilterMode::AnyRare
                                                             : FilterMode::AllRare);
  }
  const Vocabulary vocab = Vocabulary::build(poems, a.min_count);
  json out;
  out["size"] = vocab.size();
  out["specials"] = {{"bos", Vocabulary::kBos},
                     {"eos", Vocabulary::kEos},
                     {"sep", Vocabulary::kSep},
                     {"unk", Vocabulary::kUnk}};
  json entries = json::array();
  for (const auto& [ch, count] : vocab.entries()) entries.push_back({ch, count});
  out["chars"] = entries;
  if (a.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw DataError("cannot open " + a.out);
    f << out.dump(2) << "\n";
  }
  std::cerr << "poems: " << loaded.poems.size() << " loaded, " << loaded.rejected.size()
            << " rejected, " << poems.size() << " kept after filtering; vocabulary size "
            << vocab.size() << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, out, log_path, topics_path;
  std::string regime = "c1";
  size_t train_count = 0;
  int max_epochs = 1;
  double stop_loss = 0.05;
  int batch_size = 1;
  uint64_t seed = 1;
  double rho = 0.95, eps = 1e-6;
  int64_t min_count = 1;
  int d_embed = 16, d_hidden = 32, d_state = 32, d_att = 32;
};

int run_train(const TrainArgs& a) {
  LoadResult loaded = load_corpus(a.corpus);
  if (loaded.poems.empty()) throw DataError("training corpus is empty");
  const size_t train_count = a.train_count == 0 ? loaded.poems.size() : a.train_count;
  auto [train_poems, valid_poems] = split_train_validation(loaded.poems, train_count, a.seed);

  const Vocabulary vocab = Vocabulary::build(train_poems, a.min_count);
  Dims dims;
  dims.d_embed = a.d_embed;
  dims.d_hidden = a.d_hidden;
  dims.d_state = a.d_state;
  dims.d_att = a.d_att;
  ModelParams params = ModelParams::init(vocab, dims, a.seed);

  std::vector<EncodedPoem> train_enc, valid_enc;
  for (size_t i = 0; i < train_poems.size(); ++i)
    train_enc.push_back(encode_poem(train_poems[i], vocab, static_cast<int>(i)));
  for (size_t i = 0; i < valid_poems.size(); ++i)
    valid_enc.push_back(encode_poem(valid_poems[i], vocab, static_cast<int>(i)));

  std::vector<std::vector<int>> topics;
  const std::vector<std::vector<int>>* topics_ptr = nullptr;
  if (!a.topics_path.empty()) {
    // Sidecar topics: one line of characters per training poem.
    std::ifstream tf(a.topics_path, std::ios::binary);
    if (!tf) throw DataError("cannot open topics file " + a.topics_path);
    std::string line;
    while (std::getline(tf, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::vector<int> ids;
      for (const auto& ch : utf8_chars(line)) ids.push_back(vocab.id_of(ch));
      topics.push_back(std::move(ids));
    }
    if (topics.size() != train_enc.size())
      throw ConfigError("topics file has " + std::to_string(topics.size()) + " lines for " +
                        std::to_string(train_enc.size()) + " training poems");
    topics_ptr = &topics;
  }

  TrainConfig config;
  config.regime = a.regime == "cinf" ? Regime::CInfinity : Regime::C1;
  config.max_epochs = a.max_epochs;
  config.stop_loss = a.stop_loss;
  config.batch_size = a.batch_size;
  config.seed = a.seed;
  config.rho = a.rho;
  config.eps = a.eps;
  if (a.regime != "c1" && a.regime != "cinf") throw ConfigError("regime must be c1 or cinf");

  json echo = {{"regime", a.regime},     {"max_epochs", a.max_epochs},
               {"stop_loss", a.stop_loss}, {"batch_size", a.batch_size},
               {"seed", a.seed},         {"rho", a.rho},
               {"eps", a.eps},           {"train_count", train_count}};
  params.config_echo = echo.dump();

  const TrainResult result = train(params, train_enc, valid_enc, config, topics_ptr);
  params.save(a.out);
  if (!a.log_path.empty()) write_training_log(a.log_path, result.log);
  for (const EpochStats& e : result.log)
    std::cerr << "epoch " << e.epoch << ": train_ce=" << e.train_ce << " valid_ce=" << e.valid_ce
              << "\n";
  std::cerr << "checkpoint written to " << a.out << "\n";
  return 0;
}

struct BuildMemoryArgs {
  std::string checkpoint, poems, out;
};

int run_build_memory(const BuildMemoryArgs& a) {
  const ModelParams params = ModelParams::load(a.checkpoint);
  LoadResult loaded = load_corpus(a.poems);
  if (loaded.poems.empty()) throw DataError("memory corpus is empty");
  const MemoryBank bank = MemoryBank::build(params, loaded.poems);
  bank.save(a.out);
  std::cerr << "bank with " << bank.size() << " elements from " << loaded.poems.size()
            << " poems written to " << a.out << "\n";
  return 0;
}

struct GenerateArgs {
  std::string topic, checkpoint, bank, decode = "beam", constraints = "off";
  std::string pattern, lexicon, genre = "five-char", trace_out, policy = "lenient";
  double beta = 0.0, temperature = 1.0;
  int beam_width = 4;
  uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  const ModelParams params = ModelParams::load(a.checkpoint);
  MemoryBank bank;
  GenerationConfig config;
  config.genre = genre_from_flag(a.genre);
  if (a.decode == "greedy") {
    config.decode = DecodeKind::Greedy;
  } else if (a.decode == "beam") {
    config.decode = DecodeKind::Beam;
  } else if (a.decode == "sample") {
    config.decode = DecodeKind::Sample;
  } else {
    throw ConfigError("decode must be greedy, beam, or sample");
  }
  config.beam_width = a.beam_width;
  config.temperature = a.temperature;
  config.seed = a.seed;
  config.beta = a.beta;
  if (!a.bank.empty()) {
    bank = MemoryBank::load(a.bank);
    config.bank = &bank;
  }
  if (a.constraints == "off") {
    config.constraints = ConstraintMode::Off;
  } else if (a.constraints == "mask") {
    config.constraints = ConstraintMode::Mask;
  } else if (a.constraints == "rerank") {
    config.constraints = ConstraintMode::Rerank;
  } else {
    throw ConfigError("constraints must be off, mask, or rerank");
  }
  config.policy = a.policy == "strict" ? TonePolicy::Strict : TonePolicy::Lenient;
  TonePattern pattern;
  ToneLexicon lexicon;
  if (!a.pattern.empty()) {
    pattern = TonePattern::load(a.pattern);
    config.pattern = &pattern;
  }
  if (!a.lexicon.empty()) {
    lexicon = ToneLexicon::load(a.lexicon);
    config.lexicon = &lexicon;
  }

  const GenerationResult result = generate(utf8_chars(a.topic), params, config);
  for (int i = 0; i < 4; ++i) std::cout << result.poem.line_text(i) << "\n";

  if (!a.trace_out.empty()) {
    json steps = json::array();
    char hex[17];
    for (const StepRecord& s : result.trace.steps) {
      json top5 = json::array();
      for (const auto& [id, p] : s.top5)
        top5.push_back({{"token", id}, {"char", params.vocab.char_of(id)}, {"p", p}});
      std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(s.state_digest));
      json rec = {{"step", s.step},
                  {"chosen", s.chosen},
                  {"char", params.vocab.char_of(s.chosen)},
                  {"state_digest", hex},
                  {"top5", top5},
                  {"memory_norm", s.memory_norm},
                  {"mask_fallback", s.mask_fallback}};
      if (s.has_query) {
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(s.query_digest));
        rec["query_digest"] = hex;
      }
      steps.push_back(std::move(rec));
    }
    json trace = {{"log_prob", result.log_prob}, {"steps", steps}};
    std::ofstream f(a.trace_out, std::ios::binary);
    if (!f) throw DataError("cannot open " + a.trace_out);
    f << trace.dump(2) << "\n";
  }
  return 0;
}

struct ValidateArgs {
  std::string poems, pattern, lexicon, policy = "strict";
};

int run_validate(const ValidateArgs& a) {
  const TonePattern pattern = TonePattern::load(a.pattern);
  const ToneLexicon lexicon = ToneLexicon::load(a.lexicon);
  const TonePolicy policy = a.policy == "lenient" ? TonePolicy::Lenient : TonePolicy::Strict;
  LoadResult loaded = load_corpus(a.poems);
  json out = json::array();
  for (size_t i = 0; i < loaded.poems.size(); ++i) {
    const Poem& poem = loaded.poems[i];
    if (poem.genre != pattern.genre) {
      out.push_back({{"poem", i}, {"error", "genre does not match pattern"}});
      continue;
    }
    const ComplianceReport r = compliance_score(poem, pattern, lexicon, policy);
    json violations = json::array();
    for (const ToneViolation& v : r.tonal_violations)
      violations.push_back({{"line", v.line},
                            {"position", v.position},
                            {"expected", std::string(1, mark_letter(v.expected))},
                            {"got", std::string(1, tone_letter(v.got))}});
    const char* rhyme = r.rhyme == RhymeCheck::Ok
                            ? "ok"
                            : (r.rhyme == RhymeCheck::Violated ? "violated" : "indeterminate");
    out.push_back({{"poem", i},
                   {"structure_ok", r.structure_ok},
                   {"tonal_violations", violations},
                   {"rhyme", rhyme},
                   {"rhyme_ok", r.rhyme_ok},
                   {"score", r.score}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string spec, out;
};

int run_eval(const EvalArgs& a) {
  const ExperimentReport report = experiment_run(a.spec);
  if (a.out.empty()) {
    std::cout << report.csv;
  } else {
    write_file(a.out, report.csv);
  }
  std::cerr << report.summary;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memory-augmented quatrain generator"};
  app.require_subcommand(1);

  VocabArgs vocab_args;
  auto* vocab_cmd = app.add_subcommand("vocab", "build a vocabulary from a corpus");
  vocab_cmd->add_option("--corpus", vocab_args.corpus, "JSON-lines corpus")->required();
  vocab_cmd->add_option("--out", vocab_args.out, "output vocabulary JSON (default stdout)");
  vocab_cmd->add_option("--report", vocab_args.report, "rejection report path");
  vocab_cmd->add_option("--min-count", vocab_args.min_count, "minimum character count");
  vocab_cmd->add_option("--filter-threshold", vocab_args.filter_threshold,
                        "low-frequency threshold");
  vocab_cmd->add_option("--filter-mode", vocab_args.filter_mode, "all-rare, any-rare, or off");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a checkpoint");
  train_cmd->add_option("--corpus", train_args.corpus, "JSON-lines corpus")->required();
  train_cmd->add_option("--out", train_args.out, "checkpoint output path")->required();
  train_cmd->add_option("--log", train_args.log_path, "training log CSV path");
  train_cmd->add_option("--topics", train_args.topics_path,
                        "sidecar topics file (one line per training poem)");
  train_cmd->add_option("--regime", train_args.regime, "c1 or cinf");
  train_cmd->add_option("--train-count", train_args.train_count,
                        "poems used for training (rest validate; default all)");
  train_cmd->add_option("--max-epochs", train_args.max_epochs, "epoch cap (cinf)");
  train_cmd->add_option("--stop-loss", train_args.stop_loss, "train CE stop threshold (cinf)");
  train_cmd->add_option("--batch-size", train_args.batch_size, "poems per update");
  train_cmd->add_option("--seed", train_args.seed, "random seed");
  train_cmd->add_option("--rho", train_args.rho, "AdaDelta decay");
  train_cmd->add_option("--eps", train_args.eps, "AdaDelta stabilizer");
  train_cmd->add_option("--min-count", train_args.min_count, "vocabulary minimum count");
  train_cmd->add_option("--d-embed", train_args.d_embed, "embedding width");
  train_cmd->add_option("--d-hidden", train_args.d_hidden, "encoder width per direction");
  train_cmd->add_option("--d-state", train_args.d_state, "decoder state width");
  train_cmd->add_option("--d-att", train_args.d_att, "attention width");

  BuildMemoryArgs memory_args;
  auto* memory_cmd = app.add_subcommand("build-memory", "build a memory bank from poems");
  memory_cmd->add_option("--checkpoint", memory_args.checkpoint, "trained checkpoint")->required();
  memory_cmd->add_option("--poems", memory_args.poems, "JSON-lines memory poems")->required();
  memory_cmd->add_option("--out", memory_args.out, "bank output path")->required();

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "generate a quatrain for a topic");
  gen_cmd->add_option("topic", gen_args.topic, "topic characters")->required();
  gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "trained checkpoint")->required();
  gen_cmd->add_option("--bank", gen_args.bank, "memory bank");
  gen_cmd->add_option("--beta", gen_args.beta, "memory weighting factor");
  gen_cmd->add_option("--decode", gen_args.decode, "greedy, beam, or sample");
  gen_cmd->add_option("--beam-width", gen_args.beam_width, "beam width");
  gen_cmd->add_option("--temperature", gen_args.temperature, "sampling temperature");
  gen_cmd->add_option("--seed", gen_args.seed, "sampling seed");
  gen_cmd->add_option("--constraints", gen_args.constraints, "off, mask, or rerank");
  gen_cmd->add_option("--pattern", gen_args.pattern, "tonal pattern file");
  gen_cmd->add_option("--lexicon", gen_args.lexicon, "tone lexicon TSV");
  gen_cmd->add_option("--policy", gen_args.policy, "strict or lenient unknown-tone policy");
  gen_cmd->add_option("--genre", gen_args.genre, "five-char or seven-char");
  gen_cmd->add_option("--trace-out", gen_args.trace_out, "per-step trace JSON path");

  ValidateArgs val_args;
  auto* val_cmd = app.add_subcommand("validate", "score poems against tonal regulations");
  val_cmd->add_option("--poems", val_args.poems, "JSON-lines poems")->required();
  val_cmd->add_option("--pattern", val_args.pattern, "tonal pattern file")->required();
  val_cmd->add_option("--lexicon", val_args.lexicon, "tone lexicon TSV")->required();
  val_cmd->add_option("--policy", val_args.policy, "strict or lenient");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "run an experiment spec");
  eval_cmd->add_option("spec", eval_args.spec, "experiment spec JSON")->required();
  eval_cmd->add_option("--out", eval_args.out, "report CSV path (default stdout)");

  try {
    app.parse(argc, argv);
    if (*vocab_cmd) return run_vocab(vocab_args);
    if (*train_cmd) return run_train(train_args);
    if (*memory_cmd) return run_build_memory(memory_args);
    if (*gen_cmd) return run_generate(gen_args);
    if (*val_cmd) return run_validate(val_args);
    if (*eval_cmd) return run_eval(eval_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mempoet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mempoet::UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mempoet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
