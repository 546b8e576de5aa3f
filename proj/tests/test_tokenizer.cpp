#include <algorithm>

#include "doctest.h"
#include "testutil.hpp"
#include "xlit/tokenizer.hpp"

using namespace xlit;
using namespace xlit::tokenizer;
using testutil::TempDir;

namespace {

Vocab train_on(const std::string& corpus, int size) {
  TempDir tmp("vocab");
  testutil::write_file(tmp.file("c.txt"), corpus);
  return Vocab::train({tmp.file("c.txt")}, size, 0);
}

bool has_token(const Vocab& v, const std::string& t) {
  for (int i = 0; i < v.size(); ++i)
    if (v.token(i) == t) return true;
  return false;
}

}  // namespace

TEST_SUITE("tokenizer") {

TEST_CASE("bpe merges the repeated pair first") {
  // Hand-run: pieces are "aa", " aa", " aa"; pair (a,a) has count 3 while
  // (space,a) has count 2, so the first merge is "aa".
  const Vocab v = train_on("aa aa aa\n", 8);
  CHECK(v.size() == 8);
  CHECK(has_token(v, "aa"));
  CHECK(has_token(v, " "));
  CHECK(has_token(v, "a"));
}

TEST_CASE("vocab size below specials is rejected") {
  CHECK_THROWS_AS(train_on("aa aa aa\n", 5), DataError);
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(train_on("", 32), DataError);
  CHECK_THROWS_AS(train_on("\n\n", 32), DataError);
}

TEST_CASE("training is deterministic") {
  const std::string corpus = "the cat sat\nthe dog ran\nthe cat ran away\n";
  const Vocab a = train_on(corpus, 48);
  const Vocab b = train_on(corpus, 48);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) CHECK(a.token(i) == b.token(i));
}

TEST_CASE("merging stops when no pair repeats") {
  // One occurrence of everything: only the byte alphabet is learnable.
  const Vocab v = train_on("abc\n", 64);
  CHECK(v.size() == 5 + 4);  // specials + {space, a, b, c}
}

TEST_CASE("encode shape contract") {
  const Vocab v = train_on("aa bb aa bb\n", 16);

  SUBCASE("empty text is CLS SEP PAD...") {
    const EncodedSequence seq = encode("", v, 8);
    CHECK(seq.ids == std::vector<int>{kClsId, kSepId, kPadId, kPadId, kPadId,
                                      kPadId, kPadId, kPadId});
    CHECK(seq.attention == std::vector<int>{1, 1, 0, 0, 0, 0, 0, 0});
    CHECK(seq.special_flags == std::vector<int>{1, 1, 1, 1, 1, 1, 1, 1});
  }
  SUBCASE("long text truncates to max_len with SEP last") {
    const EncodedSequence seq = encode("aa bb aa bb aa bb aa bb", v, 6);
    CHECK(seq.length() == 6);
    CHECK(seq.ids[0] == kClsId);
    CHECK(seq.ids[5] == kSepId);
    CHECK(seq.real_len() == 6);
  }
  SUBCASE("max_len below 3 is rejected") {
    CHECK_THROWS_AS(encode("aa", v, 2), DataError);
  }
}

TEST_CASE("decode round-trips in-vocab text") {
  const std::string corpus =
      "the cat sat on the mat\nthe dog sat on the log\ncats and dogs\n";
  const Vocab v = train_on(corpus, 64);
  for (const std::string text :
       {"the cat sat", "dogs and cats sat on the log", "the  cat   sat ",
        "mat log dog"}) {
    const EncodedSequence seq = encode(text, v, 64);
    CHECK(decode(seq, v) == normalize(text));
  }
}

TEST_CASE("unknown bytes fall back to UNK") {
  const Vocab v = train_on("aa bb\n", 16);
  const EncodedSequence seq = encode("aaq", v, 8);
  CHECK(std::count(seq.ids.begin(), seq.ids.end(), kUnkId) == 1);
}

TEST_CASE("vocab save/load round trip incl. non-ascii tokens") {
  TempDir tmp("vocab");
  testutil::write_file(tmp.file("c.txt"), "αβ αβ γδ γδ κακο κακο\n");
  const Vocab v = Vocab::train({tmp.file("c.txt")}, 40, 0);
  v.save(tmp.file("v.txt"));
  const Vocab loaded = Vocab::load(tmp.file("v.txt"));
  REQUIRE(loaded.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));
  // The file itself holds escaped bytes, one token per line.
  const std::string raw = read_file(tmp.file("v.txt"));
  CHECK(raw.find("[PAD]") == 0);
  CHECK(raw.find("<0x") != std::string::npos);
}

TEST_CASE("vocab load validates the special header") {
  TempDir tmp("vocab");
  testutil::write_file(tmp.file("v.txt"), "[PAD]\n[UNK]\nx\n");
  CHECK_THROWS_AS(Vocab::load(tmp.file("v.txt")), DataError);
}

TEST_CASE("masking edge probabilities") {
  const Vocab v = train_on("aa bb cc dd ee ff\n", 32);
  const EncodedSequence seq = encode("aa bb cc dd ee ff", v, 32);
  Rng rng(7);

  SUBCASE("prob 0 changes nothing") {
    const MaskedItem item = mask_tokens(seq, 0.0, v, rng);
    CHECK(item.input.ids == seq.ids);
    CHECK(item.mask_positions().empty());
    for (int l : item.labels) CHECK(l == kIgnoreId);
  }
  SUBCASE("prob 1 selects every content position") {
    const MaskedItem item = mask_tokens(seq, 1.0, v, rng);
    int content = 0;
    for (int i = 0; i < seq.length(); ++i)
      if (seq.special_flags[static_cast<size_t>(i)] == 0) ++content;
    CHECK(static_cast<int>(item.mask_positions().size()) == content);
  }
}

TEST_CASE("special positions are never masked and labels sit on M") {
  const Vocab v = train_on("aa bb cc\n", 16);
  const EncodedSequence seq = encode("aa bb cc", v, 16);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const MaskedItem item = mask_tokens(seq, 0.5, v, rng);
    for (int i = 0; i < seq.length(); ++i) {
      const bool special = seq.special_flags[static_cast<size_t>(i)] != 0;
      const bool labeled = item.labels[static_cast<size_t>(i)] != kIgnoreId;
      if (special) {
        CHECK_FALSE(labeled);
        CHECK(item.input.ids[static_cast<size_t>(i)] ==
              seq.ids[static_cast<size_t>(i)]);
      }
      if (labeled)
        CHECK(item.labels[static_cast<size_t>(i)] ==
              seq.ids[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("masking statistics match the 15% rate and 80/10/10 split") {
  const Vocab v = train_on("aa bb cc dd ee ff gg hh\n", 64);
  // One long sequence template, masked repeatedly.
  const EncodedSequence seq = encode(
      "aa bb cc dd ee ff gg hh aa bb cc dd ee ff gg hh aa bb cc dd", v, 64);
  int eligible_per_seq = 0;
  for (int i = 0; i < seq.length(); ++i)
    if (seq.special_flags[static_cast<size_t>(i)] == 0) ++eligible_per_seq;
  REQUIRE(eligible_per_seq >= 20);

  Rng rng(42);
  long long eligible = 0, selected = 0, became_mask = 0, unchanged = 0,
            randomized = 0;
  const int repeats = 120000 / eligible_per_seq;
  for (int r = 0; r < repeats; ++r) {
    const MaskedItem item = mask_tokens(seq, 0.15, v, rng);
    eligible += eligible_per_seq;
    for (int i = 0; i < seq.length(); ++i) {
      if (item.labels[static_cast<size_t>(i)] == kIgnoreId) continue;
      ++selected;
      const int now = item.input.ids[static_cast<size_t>(i)];
      const int was = seq.ids[static_cast<size_t>(i)];
      if (now == kMaskId) ++became_mask;
      else if (now == was) ++unchanged;
      else ++randomized;
    }
  }
  REQUIRE(eligible >= 100000);
  const double rate = static_cast<double>(selected) / eligible;
  CHECK(rate > 0.14);
  CHECK(rate < 0.16);
  const double p_mask = static_cast<double>(became_mask) / selected;
  const double p_keep = static_cast<double>(unchanged) / selected;
  const double p_rand = static_cast<double>(randomized) / selected;
  CHECK(p_mask == doctest::Approx(0.8).epsilon(0.025));
  CHECK(p_keep == doctest::Approx(0.1).epsilon(0.2));
  CHECK(p_rand == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("masking is deterministic given the seed") {
  const Vocab v = train_on("aa bb cc dd\n", 32);
  const EncodedSequence seq = encode("aa bb cc dd aa bb", v, 32);
  Rng r1(99), r2(99);
  const MaskedItem a = mask_tokens(seq, 0.3, v, r1);
  const MaskedItem b = mask_tokens(seq, 0.3, v, r2);
  CHECK(a.input.ids == b.input.ids);
  CHECK(a.labels == b.labels);
}

}  // TEST_SUITE
