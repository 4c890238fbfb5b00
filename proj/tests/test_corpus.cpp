#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adlm/corpus.hpp"
#include "adlm/errors.hpp"
#include "adlm/rng.hpp"

#include <cstdio>
#include <fstream>
#include <set>

using namespace adlm;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/adlm_test_") + name;
}

void write_temp(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("vocabulary construction in both modes") {
  const Vocab char_vocab = build_vocab_from_text("ab", TokenizerMode::Char);
  CHECK(char_vocab.size() == 3);
  CHECK(char_vocab.symbols == std::vector<std::string>{"a", "b", kMaskSymbol});
  CHECK(char_vocab.mask_id() == 2);

  const Vocab ws_vocab =
      build_vocab_from_text("a a b", TokenizerMode::Whitespace);
  CHECK(ws_vocab.size() == 3);
  CHECK(ws_vocab.symbols == std::vector<std::string>{"a", "b", kMaskSymbol});

  CHECK_THROWS_AS(build_vocab_from_text("", TokenizerMode::Char), format_error);
  CHECK_THROWS_AS(build_vocab_from_text("a <mask> b", TokenizerMode::Whitespace),
                  format_error);
}

TEST_CASE("vocabulary size matches an independent distinct-symbol count") {
  // Synthetic corpus over 26 letters plus space.
  Rng rng(99);
  std::string corpus;
  corpus.reserve(100000);
  for (int i = 0; i < 100000; ++i) {
    const int r = rng.uniform_int(27);
    corpus += r == 26 ? ' ' : static_cast<char>('a' + r);
  }
  std::set<char> distinct(corpus.begin(), corpus.end());
  const Vocab vocab = build_vocab_from_text(corpus, TokenizerMode::Char);
  CHECK(vocab.size() == static_cast<int>(distinct.size()) + 1);
  CHECK(vocab.size() == 28);
}

TEST_CASE("vocabulary built across multiple files") {
  const std::string a = temp_path("corpus_a.txt");
  const std::string b = temp_path("corpus_b.txt");
  write_temp(a, "alpha beta");
  write_temp(b, "beta gamma");
  const Vocab vocab = build_vocab({a, b}, TokenizerMode::Whitespace);
  CHECK(vocab.symbols ==
        std::vector<std::string>{"alpha", "beta", "gamma", kMaskSymbol});
  CHECK_THROWS_AS(build_vocab({temp_path("missing.txt")}, TokenizerMode::Char),
                  format_error);
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("tokenize windows and drop the tail") {
  const Vocab vocab = build_vocab_from_text("ab", TokenizerMode::Char);
  const auto windows = tokenize("abab", vocab, 2);
  REQUIRE(windows.size() == 2);
  CHECK(windows[0](0) == 0);
  CHECK(windows[0](1) == 1);
  CHECK(windows[1](0) == 0);

  const auto dropped = tokenize("aba", vocab, 2);
  REQUIRE(dropped.size() == 1);
  CHECK(dropped[0](1) == 1);

  std::string text(1000, 'a');
  CHECK(tokenize(text, vocab, 128).size() == 7);

  CHECK_THROWS_AS(tokenize("abc", vocab, 2), format_error);
}

TEST_CASE("round trip through detokenize on full windows") {
  const std::string text = "the quick brown fox jumps over the lazy dog";
  const Vocab vocab = build_vocab_from_text(text, TokenizerMode::Whitespace);
  const auto windows = tokenize(text, vocab, 3);
  for (const TokenSeq& w : windows) {
    const auto again = tokenize(detokenize(w, vocab), vocab, 3);
    REQUIRE(again.size() == 1);
    CHECK(again[0] == w);
  }
}

TEST_CASE("anchor positions by occurrence count") {
  TokenSeq seq(4);
  seq << 0, 0, 0, 1;  // (a,a,a,b)
  const AnchorMask one = anchor_mask(seq, 1);
  CHECK_FALSE(one.important(0));
  CHECK_FALSE(one.important(1));
  CHECK_FALSE(one.important(2));
  CHECK(one.important(3));
  CHECK(one.targets(3) == 1);

  const AnchorMask all = anchor_mask(seq, 5);
  for (int l = 0; l < 4; ++l) CHECK(all.important(l));

  const AnchorMask none = anchor_mask(seq, 0);
  for (int l = 0; l < 4; ++l) CHECK_FALSE(none.important(l));

  CHECK_THROWS(anchor_mask(seq, -1));
}

TEST_CASE("anchor flags agree with a brute-force recount and permute") {
  Rng rng(7);
  TokenSeq seq(128);
  for (int l = 0; l < 128; ++l) seq(l) = rng.uniform_int(27);
  const int tau = 5;
  const AnchorMask mask = anchor_mask(seq, tau);
  for (int l = 0; l < 128; ++l) {
    int count = 0;
    for (int j = 0; j < 128; ++j)
      if (seq(j) == seq(l)) ++count;
    CHECK(mask.important(l) == (count <= tau));
  }

  // Permutation equivariance: shuffle positions and compare flags.
  std::vector<int> perm(128);
  for (int l = 0; l < 128; ++l) perm[l] = l;
  for (int l = 127; l > 0; --l) std::swap(perm[l], perm[rng.uniform_int(l + 1)]);
  TokenSeq shuffled(128);
  for (int l = 0; l < 128; ++l) shuffled(l) = seq(perm[l]);
  const AnchorMask shuffled_mask = anchor_mask(shuffled, tau);
  for (int l = 0; l < 128; ++l)
    CHECK(shuffled_mask.important(l) == mask.important(perm[l]));
}

TEST_CASE("vocabulary file round trip") {
  const std::string path = temp_path("vocab.txt");
  Vocab vocab = build_vocab_from_text("ab c\nd\te", TokenizerMode::Char);
  save_vocab(vocab, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("advocab v1 K=", 0) == 0);

  const Vocab loaded = load_vocab(path);
  CHECK(loaded.symbols == vocab.symbols);
  CHECK(loaded.mode == vocab.mode);
  CHECK(vocab_hash(loaded) == vocab_hash(vocab));
  std::remove(path.c_str());
}

TEST_CASE("vocabulary loader rejects malformed input") {
  const std::string path = temp_path("vocab_bad.txt");
  write_temp(path, "advocab v2 K=1\n<mask>\n");
  CHECK_THROWS_AS(load_vocab(path), format_error);
  write_temp(path, "something else\n");
  CHECK_THROWS_AS(load_vocab(path), format_error);
  write_temp(path, "advocab v1 K=2 mode=char\na\nb\n");
  CHECK_THROWS_AS(load_vocab(path), format_error);  // mask not last
  std::remove(path.c_str());
}
