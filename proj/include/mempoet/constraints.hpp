#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mempoet/corpus.hpp"

namespace mempoet {

enum class Tone { Level, Downward, Both, Unknown };  // P, Z, B
enum class ToneMark { Level, Downward, Any };        // template symbols P, Z, *
enum class TonePolicy { Strict, Lenient };           // unknown tone fails / passes
enum class RhymeCheck { Ok, Violated, Indeterminate };

char tone_letter(Tone t);
char mark_letter(ToneMark m);

// Per-character tone and rhyme-group data, loaded from a TSV of
// char<TAB>tone(P|Z|B)<TAB>rhyme_group(optional).
class ToneLexicon {
 public:
  static ToneLexicon load(const std::string& path);
  static ToneLexicon parse(const std::string& content);

  void add(const std::string& ch, Tone tone, std::optional<std::string> rhyme_group = {});
  Tone tone_of(const std::string& ch) const;  // Unknown for absent characters
  const std::string* rhyme_group(const std::string& ch) const;
  size_t size() const { return tones_.size(); }

 private:
  std::map<std::string, Tone> tones_;
  std::map<std::string, std::string> rhyme_groups_;
};

// Per-genre tonal template: one {P,Z,*} symbol per character position.
struct TonePattern {
  Genre genre = Genre::FiveChar;
  std::array<std::vector<ToneMark>, 4> lines;

  static TonePattern load(const std::string& path);
  static TonePattern parse(const std::string& content);
  static TonePattern all_free(Genre g);

  ToneMark at(int line, int position) const;
};

struct ToneViolation {
  int line;
  int position;
  ToneMark expected;
  Tone got;
};

// Positions marked * never violate; B satisfies both marks; unknown tones
// violate under Strict and pass under Lenient.
std::vector<ToneViolation> validate_tonal(const Poem& poem, const TonePattern& pattern,
                                          const ToneLexicon& lexicon, TonePolicy policy);

// Rhyme-group equality of the line-2 and line-4 final characters. Missing
// group data yields Indeterminate, never Violated.
RhymeCheck validate_rhyme(const Poem& poem, const ToneLexicon& lexicon);

struct ComplianceReport {
  bool structure_ok = false;
  std::vector<ToneViolation> tonal_violations;
  RhymeCheck rhyme = RhymeCheck::Indeterminate;
  bool rhyme_ok = false;  // rhyme != Violated
  int checks_total = 0;
  int checks_passed = 0;
  double score = 0.0;  // checks_passed / checks_total; 1.0 iff fully compliant
};

ComplianceReport compliance_score(const Poem& poem, const TonePattern& pattern,
                                  const ToneLexicon& lexicon,
                                  TonePolicy policy = TonePolicy::Strict);

// Vocabulary mask for one generation step. Char slots admit non-special
// characters whose tone satisfies the template (and, at the line-4 final
// position, whose rhyme group matches line 2's when both are known);
// SEP/EOS slots admit only SEP/EOS.
std::vector<uint8_t> allowed_chars(int step, const std::vector<int>& emitted,
                                   const TonePattern& pattern, const ToneLexicon& lexicon,
                                   const Vocabulary& vocab, TonePolicy policy);

// Structure-only mask: specials at their slots, any character elsewhere.
std::vector<uint8_t> structure_mask(int step, Genre genre, const Vocabulary& vocab);

}  // namespace mempoet
