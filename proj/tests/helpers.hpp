#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mempoet/constraints.hpp"
#include "mempoet/corpus.hpp"
#include "mempoet/model.hpp"
#include "mempoet/rng.hpp"

namespace testkit {

using namespace mempoet;

// Desk-scale alphabet: three thematic groups plus a shared neutral set, so
// style sub-corpora have visibly different character distributions.
inline const std::vector<std::string>& group_chars(int g) {
  static const std::vector<std::vector<std::string>> groups = {
      {"山", "水", "田", "园", "林", "溪", "云", "松", "竹", "花", "草", "渔", "樵", "牧"},
      {"军", "马", "刀", "枪", "弓", "箭", "战", "旗", "鼓", "角", "烽", "燧", "甲", "兵"},
      {"红", "妆", "帘", "香", "烛", "眉", "黛", "裙", "钗", "梦", "愁", "泪", "绣", "娥"},
      {"日", "月", "天", "地", "风", "雨", "春", "秋", "朝", "暮", "年", "岁", "人", "心"},
  };
  return groups[static_cast<size_t>(g)];
}

inline std::vector<std::string> full_alphabet() {
  std::vector<std::string> all;
  for (int g = 0; g < 4; ++g)
    for (const auto& ch : group_chars(g)) all.push_back(ch);
  return all;
}

// Every alphabet character gets a tone and a rhyme group; pairs of adjacent
// characters share a group so each group holds both tones.
inline ToneLexicon fixture_lexicon() {
  ToneLexicon lex;
  const std::vector<std::string> all = full_alphabet();
  for (size_t i = 0; i < all.size(); ++i) {
    const Tone tone = i % 2 == 0 ? Tone::Level : Tone::Downward;
    const std::string group = "g" + std::to_string((i / 2) % 4);
    lex.add(all[i], tone, group);
  }
  return lex;
}

inline TonePattern toy_pattern() {
  return TonePattern::parse(
      "five-char\n"
      "* Z P P Z\n"
      "P P * Z P\n"
      "* P P Z Z\n"
      "* Z Z P P\n");
}

// One poem with characters drawn mostly from `group` (group 3 = neutral mix).
inline Poem toy_poem(int group, Rng& rng) {
  Poem p;
  p.genre = Genre::FiveChar;
  for (int line = 0; line < 4; ++line) {
    std::vector<std::string> chars;
    for (int pos = 0; pos < 5; ++pos) {
      const bool own = group == 3 || rng.next_double() < 0.8;
      const auto& pool = group_chars(own ? group : 3);
      chars.push_back(pool[static_cast<size_t>(rng.next_below(static_cast<int>(pool.size())))]);
    }
    p.lines.push_back(std::move(chars));
  }
  return p;
}

struct ToyCorpus {
  std::vector<Poem> train;              // 20 poems: groups 0..2 x5, neutral x5
  std::vector<Poem> valid;              // 5 poems
  std::vector<std::vector<Poem>> style; // the three 5-poem style sub-corpora
};

inline ToyCorpus make_toy_corpus(uint64_t seed = 17) {
  ToyCorpus out;
  out.style.resize(3);
  Rng rng(seed);
  std::vector<std::string> first_lines;
  auto fresh = [&](int group) {
    // Distinct first lines keep the topic -> poem mapping unambiguous.
    while (true) {
      Poem p = toy_poem(group, rng);
      std::string head = p.line_text(0);
      bool dup = false;
      for (const auto& f : first_lines) dup = dup || f == head;
      if (!dup) {
        first_lines.push_back(head);
        return p;
      }
    }
  };
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < 5; ++i) {
      Poem p = fresh(g);
      out.style[static_cast<size_t>(g)].push_back(p);
      out.train.push_back(p);
    }
  }
  for (int i = 0; i < 5; ++i) out.train.push_back(fresh(3));
  for (int i = 0; i < 5; ++i) out.valid.push_back(fresh(3));
  return out;
}

inline std::vector<EncodedPoem> encode_all(const std::vector<Poem>& poems,
                                           const Vocabulary& vocab) {
  std::vector<EncodedPoem> out;
  for (size_t i = 0; i < poems.size(); ++i)
    out.push_back(encode_poem(poems[i], vocab, static_cast<int>(i)));
  return out;
}

inline Dims toy_dims() {
  Dims d;
  d.d_embed = 16;
  d.d_hidden = 32;
  d.d_state = 32;
  d.d_att = 32;
  return d;
}

// Scratch directory under the test runner's working directory.
inline std::string tmp_path(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path("test_tmp");
  fs::create_directories(dir);
  return (dir / name).string();
}

inline Matrix random_matrix(int rows, int cols, Rng& rng, double range = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.a) x = rng.uniform(-range, range);
  return m;
}

}  // namespace testkit
