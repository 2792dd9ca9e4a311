#include "mempoet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mempoet/errors.hpp"
#include "mempoet/rng.hpp"

namespace mempoet {

using nlohmann::json;

int line_length(Genre g) { return g == Genre::FiveChar ? 5 : 7; }

int encoded_length(Genre g) { return 4 * line_length(g) + 6; }

int emitted_length(Genre g) { return encoded_length(g) - 1; }

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char b = static_cast<unsigned char>(s[i]);
    size_t len = 0;
    if (b < 0x80) {
      len = 1;
    } else if ((b & 0xE0) == 0xC0) {
      len = 2;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3;
    } else if ((b & 0xF8) == 0xF0) {
      len = 4;
    } else {
      throw DataError("utf8_chars: invalid lead byte");
    }
    if (i + len > s.size()) throw DataError("utf8_chars: truncated sequence");
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80)
        throw DataError("utf8_chars: invalid continuation byte");
    }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string Poem::text(const std::string& line_sep) const {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out += line_sep;
    for (const auto& ch : lines[i]) out += ch;
  }
  return out;
}

std::string Poem::line_text(int i) const {
  std::string out;
  for (const auto& ch : lines[static_cast<size_t>(i)]) out += ch;
  return out;
}

namespace {

const std::vector<std::string>& special_names() {
  static const std::vector<std::string> names = {"<bos>", "<eos>", "<sep>", "<unk>"};
  return names;
}

// Builds a Poem from raw line strings; throws DataError on shape problems.
Poem poem_from_lines(const std::optional<std::string>& title,
                     const std::vector<std::string>& raw_lines) {
  if (raw_lines.size() != 4)
    throw DataError("expected 4 lines, got " + std::to_string(raw_lines.size()));
  Poem p;
  p.title = title;
  p.lines.reserve(4);
  for (const auto& raw : raw_lines) p.lines.push_back(utf8_chars(raw));
  const size_t len = p.lines[0].size();
  if (len != 5 && len != 7)
    throw DataError("line length must be 5 or 7, got " + std::to_string(len));
  for (const auto& line : p.lines) {
    if (line.size() != len)
      throw DataError("all lines must have equal length " + std::to_string(len));
  }
  p.genre = len == 5 ? Genre::FiveChar : Genre::SevenChar;
  return p;
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<Poem>& poems, int64_t min_count) {
  if (poems.empty()) throw UsageError("Vocabulary::build: empty corpus");
  std::map<std::string, int64_t> counts;
  for (const auto& p : poems) {
    for (const auto& line : p.lines) {
      for (const auto& ch : line) ++counts[ch];
    }
  }
  std::vector<std::pair<std::string, int64_t>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [ch, n] : counts) {
    if (n >= min_count) ranked.emplace_back(ch, n);
  }
  // Descending count, ties by code point; UTF-8 byte order equals code point order.
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return from_entries(ranked);
}

Vocabulary Vocabulary::from_entries(const std::vector<std::pair<std::string, int64_t>>& entries) {
  Vocabulary v;
  v.id_to_char_ = special_names();
  for (const auto& [ch, count] : entries) {
    if (v.char_to_id_.count(ch)) throw DataError("Vocabulary: duplicate character " + ch);
    v.char_to_id_[ch] = static_cast<int>(v.id_to_char_.size());
    v.id_to_char_.push_back(ch);
    v.counts_[ch] = count;
  }
  return v;
}

std::vector<std::pair<std::string, int64_t>> Vocabulary::entries() const {
  std::vector<std::pair<std::string, int64_t>> out;
  for (size_t id = kSpecials; id < id_to_char_.size(); ++id) {
    const std::string& ch = id_to_char_[id];
    out.emplace_back(ch, counts_.at(ch));
  }
  return out;
}

int Vocabulary::id_of(const std::string& ch) const {
  auto it = char_to_id_.find(ch);
  return it == char_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& ch) const { return char_to_id_.count(ch) != 0; }

const std::string& Vocabulary::char_of(int id) const {
  if (id < 0 || id >= size()) throw UsageError("Vocabulary::char_of: id out of range");
  return id_to_char_[static_cast<size_t>(id)];
}

int64_t Vocabulary::count_of(const std::string& ch) const {
  auto it = counts_.find(ch);
  return it == counts_.end() ? 0 : it->second;
}

Slot slot_at(int step, Genre g) {
  const int L = line_length(g);
  const int block = L + 1;
  if (step < 0 || step >= emitted_length(g)) throw UsageError("slot_at: step out of range");
  if (step == 4 * block) return {SlotKind::Eos, -1, -1};
  const int line = step / block;
  const int off = step % block;
  if (off == L) return {SlotKind::Sep, line, -1};
  return {SlotKind::Char, line, off};
}

LoadResult parse_corpus(const std::string& content) {
  LoadResult result;
  std::istringstream in(content);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw DataError("record is not a JSON object");
      if (!j.contains("lines") || !j["lines"].is_array())
        throw DataError("missing \"lines\" array");
      std::vector<std::string> raw;
      for (const auto& item : j["lines"]) {
        if (!item.is_string()) throw DataError("line entries must be strings");
        raw.push_back(item.get<std::string>());
      }
      std::optional<std::string> title;
      if (j.contains("title") && j["title"].is_string()) title = j["title"].get<std::string>();
      Poem p = poem_from_lines(title, raw);
      result.poems.push_back(std::move(p));
    } catch (const json::exception& e) {
      result.rejected.push_back({line_number, std::string("invalid JSON: ") + e.what()});
    } catch (const DataError& e) {
      result.rejected.push_back({line_number, e.what()});
    }
  }
  return result;
}

LoadResult load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_corpus: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

void write_rejection_report(const std::string& path, const std::vector<RejectedRecord>& rejected) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_rejection_report: cannot open " + path);
  for (const auto& r : rejected) out << r.line_number << '\t' << r.reason << '\n';
}

void save_corpus(const std::string& path, const std::vector<Poem>& poems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_corpus: cannot open " + path);
  for (const auto& p : poems) {
    json j;
    if (p.title) j["title"] = *p.title;
    j["lines"] = json::array();
    for (int i = 0; i < 4; ++i) j["lines"].push_back(p.line_text(i));
    out << j.dump() << '\n';
  }
}

std::vector<Poem> filter_low_frequency(const std::vector<Poem>& poems, int64_t threshold,
                                       FilterMode mode) {
  std::map<std::string, int64_t> counts;
  for (const auto& p : poems) {
    for (const auto& line : p.lines) {
      for (const auto& ch : line) ++counts[ch];
    }
  }
  std::vector<Poem> kept;
  for (const auto& p : poems) {
    int rare = 0;
    int total = 0;
    for (const auto& line : p.lines) {
      for (const auto& ch : line) {
        ++total;
        if (counts[ch] < threshold) ++rare;
      }
    }
    const bool drop = mode == FilterMode::AllRare ? rare == total : rare > 0;
    if (!drop) kept.push_back(p);
  }
  return kept;
}

EncodedPoem encode_poem(const Poem& poem, const Vocabulary& vocab, int poem_index) {
  EncodedPoem e;
  e.poem_index = poem_index;
  e.tokens.reserve(static_cast<size_t>(encoded_length(poem.genre)));
  e.tokens.push_back(Vocabulary::kBos);
  for (const auto& line : poem.lines) {
    for (const auto& ch : line) e.tokens.push_back(vocab.id_of(ch));
    e.tokens.push_back(Vocabulary::kSep);
  }
  e.tokens.push_back(Vocabulary::kEos);
  return e;
}

Poem decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab) {
  const size_t n = tokens.size();
  Genre genre;
  if (n == static_cast<size_t>(encoded_length(Genre::FiveChar))) {
    genre = Genre::FiveChar;
  } else if (n == static_cast<size_t>(encoded_length(Genre::SevenChar))) {
    genre = Genre::SevenChar;
  } else {
    throw DataError("decode_tokens: sequence length " + std::to_string(n) +
                    " matches no genre");
  }
  if (tokens[0] != Vocabulary::kBos) throw DataError("decode_tokens: missing BOS");
  Poem p;
  p.genre = genre;
  for (size_t i = 1; i < n; ++i) {
    const int tok = tokens[i];
    const Slot slot = slot_at(static_cast<int>(i) - 1, genre);
    switch (slot.kind) {
      case SlotKind::Char:
        if (Vocabulary::is_special(tok))
          throw DataError("decode_tokens: special token at character position");
        if (static_cast<size_t>(slot.line) == p.lines.size()) p.lines.emplace_back();
        p.lines[static_cast<size_t>(slot.line)].push_back(vocab.char_of(tok));
        break;
      case SlotKind::Sep:
        if (tok != Vocabulary::kSep) throw DataError("decode_tokens: misplaced SEP slot");
        break;
      case SlotKind::Eos:
        if (tok != Vocabulary::kEos) throw DataError("decode_tokens: missing EOS");
        break;
    }
  }
  return p;
}

std::pair<std::vector<Poem>, std::vector<Poem>> split_train_validation(
    const std::vector<Poem>& poems, size_t train_count, uint64_t seed) {
  if (train_count > poems.size())
    throw UsageError("split_train_validation: train_count exceeds corpus size");
  std::vector<size_t> order(poems.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Poem> train;
  std::vector<Poem> validation;
  train.reserve(train_count);
  validation.reserve(poems.size() - train_count);
  for (size_t i = 0; i < order.size(); ++i) {
    (i < train_count ? train : validation).push_back(poems[order[i]]);
  }
  return {std::move(train), std::move(validation)};
}

}  // namespace mempoet
