#include "mempoet/constraints.hpp"

#include <fstream>
#include <sstream>

#include "mempoet/errors.hpp"

namespace mempoet {

char tone_letter(Tone t) {
  switch (t) {
    case Tone::Level: return 'P';
    case Tone::Downward: return 'Z';
    case Tone::Both: return 'B';
    default: return '?';
  }
}

char mark_letter(ToneMark m) {
  switch (m) {
    case ToneMark::Level: return 'P';
    case ToneMark::Downward: return 'Z';
    default: return '*';
  }
}

namespace {

Tone parse_tone(const std::string& s) {
  if (s == "P") return Tone::Level;
  if (s == "Z") return Tone::Downward;
  if (s == "B") return Tone::Both;
  throw DataError("tone lexicon: bad tone symbol '" + s + "'");
}

ToneMark parse_mark(const std::string& s) {
  if (s == "P") return ToneMark::Level;
  if (s == "Z") return ToneMark::Downward;
  if (s == "*") return ToneMark::Any;
  throw DataError("tone pattern: bad symbol '" + s + "'");
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Satisfaction of a template mark by a character tone, before policy.
bool mark_satisfied(ToneMark mark, Tone tone, TonePolicy policy) {
  if (mark == ToneMark::Any) return true;
  switch (tone) {
    case Tone::Both: return true;
    case Tone::Unknown: return policy == TonePolicy::Lenient;
    case Tone::Level: return mark == ToneMark::Level;
    case Tone::Downward: return mark == ToneMark::Downward;
  }
  return false;
}

}  // namespace

ToneLexicon ToneLexicon::parse(const std::string& content) {
  ToneLexicon lex;
  std::istringstream in(content);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2)
      throw DataError("tone lexicon: line " + std::to_string(line_number) + " needs char<TAB>tone");
    std::optional<std::string> group;
    if (fields.size() >= 3 && !fields[2].empty()) group = fields[2];
    lex.add(fields[0], parse_tone(fields[1]), group);
  }
  return lex;
}

ToneLexicon ToneLexicon::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tone lexicon: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void ToneLexicon::add(const std::string& ch, Tone tone, std::optional<std::string> rhyme_group) {
  tones_[ch] = tone;
  if (rhyme_group) rhyme_groups_[ch] = *rhyme_group;
}

Tone ToneLexicon::tone_of(const std::string& ch) const {
  auto it = tones_.find(ch);
  return it == tones_.end() ? Tone::Unknown : it->second;
}

const std::string* ToneLexicon::rhyme_group(const std::string& ch) const {
  auto it = rhyme_groups_.find(ch);
  return it == rhyme_groups_.end() ? nullptr : &it->second;
}

TonePattern TonePattern::parse(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw DataError("tone pattern: empty file");
  line = strip_cr(line);
  TonePattern p;
  if (line == "five-char") {
    p.genre = Genre::FiveChar;
  } else if (line == "seven-char") {
    p.genre = Genre::SevenChar;
  } else {
    throw DataError("tone pattern: genre header must be five-char or seven-char");
  }
  const int expected = line_length(p.genre);
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(in, line)) throw DataError("tone pattern: expected 4 template lines");
    std::istringstream ls(strip_cr(line));
    std::string sym;
    while (ls >> sym) p.lines[static_cast<size_t>(i)].push_back(parse_mark(sym));
    if (static_cast<int>(p.lines[static_cast<size_t>(i)].size()) != expected)
      throw DataError("tone pattern: line " + std::to_string(i + 1) + " must have " +
                      std::to_string(expected) + " symbols");
  }
  return p;
}

TonePattern TonePattern::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tone pattern: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

TonePattern TonePattern::all_free(Genre g) {
  TonePattern p;
  p.genre = g;
  for (auto& line : p.lines) line.assign(static_cast<size_t>(line_length(g)), ToneMark::Any);
  return p;
}

ToneMark TonePattern::at(int line, int position) const {
  return lines[static_cast<size_t>(line)][static_cast<size_t>(position)];
}

std::vector<ToneViolation> validate_tonal(const Poem& poem, const TonePattern& pattern,
                                          const ToneLexicon& lexicon, TonePolicy policy) {
  if (poem.genre != pattern.genre) throw UsageError("validate_tonal: genre mismatch");
  std::vector<ToneViolation> violations;
  for (int line = 0; line < 4; ++line) {
    const auto& chars = poem.lines[static_cast<size_t>(line)];
    for (int pos = 0; pos < static_cast<int>(chars.size()); ++pos) {
      const ToneMark mark = pattern.at(line, pos);
      const Tone tone = lexicon.tone_of(chars[static_cast<size_t>(pos)]);
      if (!mark_satisfied(mark, tone, policy)) violations.push_back({line, pos, mark, tone});
    }
  }
  return violations;
}

RhymeCheck validate_rhyme(const Poem& poem, const ToneLexicon& lexicon) {
  const std::string& end2 = poem.lines[1].back();
  const std::string& end4 = poem.lines[3].back();
  const std::string* g2 = lexicon.rhyme_group(end2);
  const std::string* g4 = lexicon.rhyme_group(end4);
  if (end2 == end4) return RhymeCheck::Ok;
  if (!g2 || !g4) return RhymeCheck::Indeterminate;
  return *g2 == *g4 ? RhymeCheck::Ok : RhymeCheck::Violated;
}

ComplianceReport compliance_score(const Poem& poem, const TonePattern& pattern,
                                  const ToneLexicon& lexicon, TonePolicy policy) {
  ComplianceReport r;
  const int L = line_length(pattern.genre);
  r.structure_ok = poem.genre == pattern.genre && poem.lines.size() == 4;
  if (r.structure_ok) {
    for (const auto& line : poem.lines)
      if (static_cast<int>(line.size()) != L) r.structure_ok = false;
  }
  if (r.structure_ok) r.tonal_violations = validate_tonal(poem, pattern, lexicon, policy);
  if (r.structure_ok) r.rhyme = validate_rhyme(poem, lexicon);
  r.rhyme_ok = r.rhyme != RhymeCheck::Violated;

  // One check per character position, plus structure and rhyme.
  r.checks_total = 4 * L + 2;
  r.checks_passed = 0;
  if (r.structure_ok) {
    r.checks_passed = 1 + (4 * L - static_cast<int>(r.tonal_violations.size())) +
                      (r.rhyme_ok ? 1 : 0);
  }
  r.score = static_cast<double>(r.checks_passed) / static_cast<double>(r.checks_total);
  return r;
}

std::vector<uint8_t> structure_mask(int step, Genre genre, const Vocabulary& vocab) {
  const Slot slot = slot_at(step, genre);
  std::vector<uint8_t> mask(static_cast<size_t>(vocab.size()), 0);
  switch (slot.kind) {
    case SlotKind::Char:
      for (int id = Vocabulary::kSpecials; id < vocab.size(); ++id)
        mask[static_cast<size_t>(id)] = 1;
      break;
    case SlotKind::Sep:
      mask[Vocabulary::kSep] = 1;
      break;
    case SlotKind::Eos:
      mask[Vocabulary::kEos] = 1;
      break;
  }
  return mask;
}

std::vector<uint8_t> allowed_chars(int step, const std::vector<int>& emitted,
                                   const TonePattern& pattern, const ToneLexicon& lexicon,
                                   const Vocabulary& vocab, TonePolicy policy) {
  const Genre genre = pattern.genre;
  std::vector<uint8_t> mask = structure_mask(step, genre, vocab);
  const Slot slot = slot_at(step, genre);
  if (slot.kind != SlotKind::Char) return mask;

  const ToneMark mark = pattern.at(slot.line, slot.position);
  const int L = line_length(genre);
  // Rhyme constraint applies at the final character of line 4; line 2's
  // final character sits at emitted index 2L (line 1 + SEP + L-1 chars).
  const std::string* required_group = nullptr;
  if (slot.line == 3 && slot.position == L - 1) {
    const int line2_final_step = 2 * L;
    if (line2_final_step < static_cast<int>(emitted.size())) {
      const int id = emitted[static_cast<size_t>(line2_final_step)];
      if (!Vocabulary::is_special(id)) required_group = lexicon.rhyme_group(vocab.char_of(id));
    }
  }
  for (int id = Vocabulary::kSpecials; id < vocab.size(); ++id) {
    const std::string& ch = vocab.char_of(id);
    if (!mark_satisfied(mark, lexicon.tone_of(ch), policy)) {
      mask[static_cast<size_t>(id)] = 0;
      continue;
    }
    if (required_group) {
      const std::string* group = lexicon.rhyme_group(ch);
      if (group == nullptr || *group != *required_group) mask[static_cast<size_t>(id)] = 0;
    }
  }
  return mask;
}

}  // namespace mempoet
