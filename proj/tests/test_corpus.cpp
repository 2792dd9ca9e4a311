#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "helpers.hpp"
#include "mempoet/corpus.hpp"
#include "mempoet/errors.hpp"

using namespace mempoet;

namespace {

Poem make_poem(const std::string& l1, const std::string& l2, const std::string& l3,
               const std::string& l4) {
  LoadResult r = parse_corpus("{\"lines\": [\"" + l1 + "\",\"" + l2 + "\",\"" + l3 + "\",\"" +
                              l4 + "\"]}");
  REQUIRE(r.poems.size() == 1);
  return r.poems[0];
}

}  // namespace

TEST_CASE("utf8_chars splits code points") {
  const auto chars = utf8_chars("山abc水");
  REQUIRE(chars.size() == 5);
  CHECK(chars[0] == "山");
  CHECK(chars[1] == "a");
  CHECK(chars[4] == "水");
  CHECK_THROWS_AS(utf8_chars(std::string("\xE5\x31")), DataError);
}

TEST_CASE("load_corpus accepts valid records and reports malformed ones") {
  const std::string good =
      "{\"title\": \"t\", \"lines\": [\"春风吹绿野\",\"秋月照寒山\",\"白云归远岫\",\"红叶落空潭\"]}";
  LoadResult one = parse_corpus(good + "\n");
  CHECK(one.poems.size() == 1);
  CHECK(one.rejected.empty());
  CHECK(one.poems[0].genre == Genre::FiveChar);
  CHECK(one.poems[0].title == "t");

  LoadResult empty = parse_corpus("");
  CHECK(empty.poems.empty());
  CHECK(empty.rejected.empty());

  // A 3-line record is rejected with its line number, not dropped silently.
  const std::string three_lines = "{\"lines\": [\"春风吹绿野\",\"秋月照寒山\",\"白云归远岫\"]}";
  LoadResult mixed = parse_corpus(good + "\n" + three_lines + "\nnot json\n" + good + "\n");
  CHECK(mixed.poems.size() == 2);
  REQUIRE(mixed.rejected.size() == 2);
  CHECK(mixed.rejected[0].line_number == 2);
  CHECK(mixed.rejected[1].line_number == 3);

  CHECK_THROWS_AS(load_corpus("does_not_exist.jsonl"), DataError);
}

TEST_CASE("load_corpus rejects wrong line lengths and ragged poems") {
  LoadResult r = parse_corpus(
      "{\"lines\": [\"四字而已\",\"四字而已\",\"四字而已\",\"四字而已\"]}\n"
      "{\"lines\": [\"五字五字五\",\"五字五字五\",\"五字五字五\",\"七字七字七字七\"]}\n");
  CHECK(r.poems.empty());
  CHECK(r.rejected.size() == 2);
}

TEST_CASE("filter_low_frequency keeps rich corpora intact") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  // Every character in this corpus clears a threshold of 1.
  CHECK(filter_low_frequency(toy.train, 1).size() == toy.train.size());
}

TEST_CASE("filter_low_frequency removes a single-poem corpus in all-rare mode") {
  const Poem p = make_poem("春风吹绿野", "秋月照寒山", "白云归远岫", "红叶落空潭");
  CHECK(filter_low_frequency({p}, 100, FilterMode::AllRare).empty());
}

TEST_CASE("filter_low_frequency matches a per-poem recount oracle") {
  // Three poems: one whose characters are all rare, two sharing characters
  // that clear the threshold.
  const Poem common1 = make_poem("山山山山山", "水水水水水", "山山山山山", "水水水水水");
  const Poem common2 = make_poem("水水水水水", "山山山山山", "水水水水水", "山山山山山");
  const Poem rare = make_poem("军军军军军", "马马马马马", "刀刀刀刀刀", "枪枪枪枪枪");
  const std::vector<Poem> corpus = {common1, rare, common2};

  const auto kept = filter_low_frequency(corpus, 15, FilterMode::AllRare);

  // Oracle: recount characters by hand.
  std::map<std::string, int> counts;
  for (const Poem& p : corpus)
    for (const auto& line : p.lines)
      for (const auto& ch : line) counts[ch]++;
  std::vector<Poem> expected;
  for (const Poem& p : corpus) {
    bool all_rare = true;
    for (const auto& line : p.lines)
      for (const auto& ch : line) all_rare = all_rare && counts[ch] < 15;
    if (!all_rare) expected.push_back(p);
  }
  REQUIRE(kept.size() == expected.size());
  CHECK(kept.size() == 2);
  for (size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].text() == expected[i].text());

  // any-rare mode drops poems containing any rare character.
  const auto strict = filter_low_frequency(corpus, 15, FilterMode::AnyRare);
  CHECK(strict.size() == 2);
}

TEST_CASE("filter_low_frequency is idempotent") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  const auto once = filter_low_frequency(toy.train, 10);
  const auto twice = filter_low_frequency(once, 10);
  REQUIRE(once.size() == twice.size());
  for (size_t i = 0; i < once.size(); ++i) CHECK(once[i].text() == twice[i].text());
}

TEST_CASE("build_vocab sizes, determinism, and ranking") {
  // One poem, 20 distinct characters: 20 + 4 specials.
  const Poem p = make_poem("春风吹绿野", "秋月照寒山", "白云归远岫", "红叶落空潭");
  const Vocabulary v = Vocabulary::build({p});
  CHECK(v.size() == 24);

  CHECK_THROWS_AS(Vocabulary::build({}), UsageError);

  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  const Vocabulary a = Vocabulary::build(toy.train);
  std::vector<Poem> reordered = toy.train;
  std::reverse(reordered.begin(), reordered.end());
  const Vocabulary b = Vocabulary::build(reordered);
  REQUIRE(a.size() == b.size());
  for (int id = 0; id < a.size(); ++id) CHECK(a.char_of(id) == b.char_of(id));

  // Frequency ranking agrees with an independent counting pass.
  std::map<std::string, int64_t> counts;
  for (const Poem& poem : toy.train)
    for (const auto& line : poem.lines)
      for (const auto& ch : line) counts[ch]++;
  for (int id = Vocabulary::kSpecials; id < a.size(); ++id) {
    CHECK(a.count_of(a.char_of(id)) == counts[a.char_of(id)]);
    if (id > Vocabulary::kSpecials) {
      const int64_t prev = counts[a.char_of(id - 1)];
      const int64_t cur = counts[a.char_of(id)];
      const bool ordered = prev > cur || (prev == cur && a.char_of(id - 1) < a.char_of(id));
      CHECK(ordered);
    }
  }
}

TEST_CASE("build_vocab maps sub-threshold characters to UNK") {
  const Poem p = make_poem("山山山山水", "山山山山山", "山山山山山", "山山山山山");
  const Vocabulary v = Vocabulary::build({p}, 2);
  CHECK(v.size() == 5);  // specials + one kept character
  CHECK(v.id_of("山") == 4);
  CHECK(v.id_of("水") == Vocabulary::kUnk);
}

TEST_CASE("encode_poem token counts") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  const Vocabulary v = Vocabulary::build(toy.train);
  const EncodedPoem five = encode_poem(toy.train[0], v);
  CHECK(five.tokens.size() == 26);

  LoadResult seven = parse_corpus(
      "{\"lines\": [\"七字七字七字七\",\"七字七字七字七\",\"七字七字七字七\",\"七字七字七字七\"]}");
  REQUIRE(seven.poems.size() == 1);
  const Vocabulary v7 = Vocabulary::build(seven.poems);
  CHECK(encode_poem(seven.poems[0], v7).tokens.size() == 34);
}

TEST_CASE("encoded poems have BOS, EOS, and SEP at the line terminator slots") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  const Vocabulary v = Vocabulary::build(toy.train);
  for (const Poem& p : toy.train) {
    const EncodedPoem e = encode_poem(p, v);
    CHECK(e.tokens.front() == Vocabulary::kBos);
    CHECK(e.tokens.back() == Vocabulary::kEos);
    int seps = 0;
    for (size_t i = 1; i + 1 < e.tokens.size(); ++i) {
      const Slot slot = slot_at(static_cast<int>(i) - 1, p.genre);
      if (e.tokens[i] == Vocabulary::kSep) {
        ++seps;
        CHECK(slot.kind == SlotKind::Sep);
      } else {
        CHECK(slot.kind == SlotKind::Char);
      }
    }
    CHECK(seps == 4);
  }
}

TEST_CASE("encode/decode round-trip over random synthetic poems") {
  Rng rng(21);
  std::vector<Poem> poems;
  for (int i = 0; i < 100; ++i) poems.push_back(testkit::toy_poem(rng.next_below(4), rng));
  const Vocabulary v = Vocabulary::build(poems);
  for (const Poem& p : poems) {
    const Poem back = decode_tokens(encode_poem(p, v).tokens, v);
    CHECK(back.text() == p.text());
    CHECK(back.genre == p.genre);
  }
}

TEST_CASE("decode_tokens rejects malformed structure") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  const Vocabulary v = Vocabulary::build(toy.train);
  EncodedPoem e = encode_poem(toy.train[0], v);

  auto broken = e.tokens;
  std::swap(broken[5], broken[6]);  // SEP into a char slot
  CHECK_THROWS_AS(decode_tokens(broken, v), DataError);

  auto no_eos = e.tokens;
  no_eos.pop_back();
  CHECK_THROWS_AS(decode_tokens(no_eos, v), DataError);

  auto bad_eos = e.tokens;
  bad_eos.back() = Vocabulary::kSep;
  CHECK_THROWS_AS(decode_tokens(bad_eos, v), DataError);
}

TEST_CASE("split_train_validation is disjoint, exhaustive, deterministic") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  auto [train, valid] = split_train_validation(toy.train, 15, 42);
  CHECK(train.size() == 15);
  CHECK(valid.size() == 5);

  std::multiset<std::string> all;
  for (const Poem& p : toy.train) all.insert(p.text());
  std::multiset<std::string> split;
  for (const Poem& p : train) split.insert(p.text());
  for (const Poem& p : valid) split.insert(p.text());
  CHECK(all == split);

  auto [train2, valid2] = split_train_validation(toy.train, 15, 42);
  for (size_t i = 0; i < train.size(); ++i) CHECK(train[i].text() == train2[i].text());
  for (size_t i = 0; i < valid.size(); ++i) CHECK(valid[i].text() == valid2[i].text());

  auto [all_train, none] = split_train_validation(toy.train, toy.train.size(), 1);
  CHECK(none.empty());
  CHECK(all_train.size() == toy.train.size());
  CHECK_THROWS_AS(split_train_validation(toy.train, toy.train.size() + 1, 1), UsageError);
}

TEST_CASE("split sizes match the documented corpus proportions") {
  // 9,195 poems with 9,000 for training leaves 195 for validation.
  std::vector<Poem> poems(9195, make_poem("春风吹绿野", "秋月照寒山", "白云归远岫", "红叶落空潭"));
  auto [train, valid] = split_train_validation(poems, 9000, 3);
  CHECK(train.size() == 9000);
  CHECK(valid.size() == 195);
}

TEST_CASE("rejection report format") {
  const std::string path = testkit::tmp_path("rejects.txt");
  write_rejection_report(path, {{7, "bad record"}, {9, "worse"}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "7\tbad record");
  std::getline(in, line);
  CHECK(line == "9\tworse");
}

TEST_CASE("save_corpus round-trips through load_corpus") {
  testkit::ToyCorpus toy = testkit::make_toy_corpus();
  const std::string path = testkit::tmp_path("corpus_roundtrip.jsonl");
  save_corpus(path, toy.train);
  LoadResult r = load_corpus(path);
  CHECK(r.rejected.empty());
  REQUIRE(r.poems.size() == toy.train.size());
  for (size_t i = 0; i < r.poems.size(); ++i) CHECK(r.poems[i].text() == toy.train[i].text());
}
