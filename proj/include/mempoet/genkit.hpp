#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mempoet/constraints.hpp"
#include "mempoet/corpus.hpp"
#include "mempoet/memory.hpp"
#include "mempoet/model.hpp"

namespace mempoet {

enum class DecodeKind { Greedy, Beam, Sample };
enum class ConstraintMode { Off, Mask, Rerank };

struct GenerationConfig {
  Genre genre = Genre::FiveChar;
  DecodeKind decode = DecodeKind::Beam;
  int beam_width = 4;
  double temperature = 1.0;
  uint64_t seed = 0;
  double beta = 0.0;
  const MemoryBank* bank = nullptr;
  ConstraintMode constraints = ConstraintMode::Off;
  const TonePattern* pattern = nullptr;
  const ToneLexicon* lexicon = nullptr;
  TonePolicy policy = TonePolicy::Lenient;
  int max_tokens = 0;  // 0 = genre sequence length, the hard cap

  void validate(const ModelParams& params) const;  // throws ConfigError
};

struct StepRecord {
  int step;
  int chosen;
  uint64_t state_digest;
  uint64_t query_digest;  // 0 when memory is off
  bool has_query;
  std::vector<std::pair<int, double>> top5;  // (token, fused probability)
  double memory_norm;                        // beta * |v_t|
  bool mask_fallback;
};

struct GenerationTrace {
  std::vector<StepRecord> steps;
};

struct GenerationResult {
  Poem poem;
  std::vector<int> tokens;  // emitted sequence, without BOS
  double log_prob;          // sum of ln p(token) under the fused distribution
  GenerationTrace trace;
};

GenerationResult generate(const std::vector<std::string>& topic_chars, const ModelParams& params,
                          const GenerationConfig& config);

struct BeamExtension {
  int beam;
  int token;
  double log_prob;  // cumulative
};

// Keeps the `width` highest cumulative log-probability extensions over all
// (beam, token) pairs; masked tokens are excluded before ranking and ties
// break by token id ascending, then beam index.
std::vector<BeamExtension> beam_step(const std::vector<double>& beam_log_probs,
                                     const std::vector<std::vector<double>>& log_distributions,
                                     int width, const std::vector<std::vector<uint8_t>>& masks);
std::vector<BeamExtension> beam_step(const std::vector<double>& beam_log_probs,
                                     const std::vector<std::vector<double>>& log_distributions,
                                     int width, const std::vector<uint8_t>& mask);

struct NoveltyScore {
  int max_match;                         // longest in-line run also found in a reference line
  std::map<int, double> novel_fraction;  // per n; 1.0 when the poem has no n-grams of size n
};

// Exact substring statistics against the reference lines; matching never
// crosses line boundaries on either side.
NoveltyScore novelty_score(const Poem& poem, const std::vector<Poem>& reference, int n_min = 3,
                           int n_max = 6);

// Mean over the poems' characters of ln(P_style(c) / P_background(c)) with
// add-one smoothed unigram models over the union alphabet.
double style_shift(const std::vector<Poem>& poems, const std::vector<Poem>& style,
                   const std::vector<Poem>& background);
double style_shift(const Poem& poem, const std::vector<Poem>& style,
                   const std::vector<Poem>& background);

struct ExperimentReport {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string csv;      // byte-stable for identical spec + seeds
  std::string summary;  // per-config means, human oriented
};

// Runs the topic x config grid described by a JSON spec file. All artifacts
// are loaded and cross-checked before the first generation.
ExperimentReport experiment_run(const std::string& spec_path);

}  // namespace mempoet
