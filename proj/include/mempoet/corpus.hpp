#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mempoet {

enum class Genre { FiveChar, SevenChar };

int line_length(Genre g);

// Tokens per encoded poem: BOS + 4 lines, each line followed by SEP, + EOS.
int encoded_length(Genre g);
// Tokens a generator emits (everything after BOS).
int emitted_length(Genre g);

// Splits a UTF-8 string into code points (each returned as a string).
// Malformed bytes raise DataError.
std::vector<std::string> utf8_chars(const std::string& s);

// A quatrain: exactly 4 lines of 5 or 7 characters.
struct Poem {
  std::optional<std::string> title;
  std::vector<std::vector<std::string>> lines;
  Genre genre = Genre::FiveChar;

  std::string text(const std::string& line_sep = "\n") const;
  std::string line_text(int i) const;
};

// Character <-> id map. Ids 0..3 are reserved specials; the rest are corpus
// characters ordered by descending count, ties broken by code point.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSpecials = 4;

  static Vocabulary build(const std::vector<Poem>& poems, int64_t min_count = 1);

  int size() const { return static_cast<int>(id_to_char_.size()); }
  int id_of(const std::string& ch) const;  // kUnk when absent
  bool contains(const std::string& ch) const;
  const std::string& char_of(int id) const;
  int64_t count_of(const std::string& ch) const;
  static bool is_special(int id) { return id < kSpecials; }

  // Used by checkpoint io; entries must be (non-special char, count) in id order.
  static Vocabulary from_entries(const std::vector<std::pair<std::string, int64_t>>& entries);
  std::vector<std::pair<std::string, int64_t>> entries() const;

 private:
  std::vector<std::string> id_to_char_;
  std::map<std::string, int> char_to_id_;
  std::map<std::string, int64_t> counts_;
};

struct EncodedPoem {
  std::vector<int> tokens;
  int poem_index = -1;
};

// Generation slot layout over the emitted sequence (positions after BOS).
enum class SlotKind { Char, Sep, Eos };
struct Slot {
  SlotKind kind;
  int line = -1;      // valid for Char and Sep
  int position = -1;  // valid for Char
};
Slot slot_at(int step, Genre g);

struct RejectedRecord {
  int line_number;
  std::string reason;
};

struct LoadResult {
  std::vector<Poem> poems;
  std::vector<RejectedRecord> rejected;
};

// JSON-lines corpus: one {"title": optional, "lines": [4 strings]} per line.
// Malformed records land in the rejection report instead of being dropped.
LoadResult load_corpus(const std::string& path);
LoadResult parse_corpus(const std::string& content);
void write_rejection_report(const std::string& path, const std::vector<RejectedRecord>& rejected);
void save_corpus(const std::string& path, const std::vector<Poem>& poems);

enum class FilterMode { AllRare, AnyRare };

// Drops poems made of low-frequency characters; counts are taken over the
// full input corpus. AllRare (the default) removes a poem only when every
// character is below the threshold.
std::vector<Poem> filter_low_frequency(const std::vector<Poem>& poems, int64_t threshold = 100,
                                       FilterMode mode = FilterMode::AllRare);

EncodedPoem encode_poem(const Poem& poem, const Vocabulary& vocab, int poem_index = -1);
Poem decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab);

std::pair<std::vector<Poem>, std::vector<Poem>> split_train_validation(
    const std::vector<Poem>& poems, size_t train_count, uint64_t seed);

}  // namespace mempoet
