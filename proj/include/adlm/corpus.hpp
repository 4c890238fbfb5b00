#pragma once

#include "adlm/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace adlm {

enum class TokenizerMode { Char, Whitespace };

inline const char* kMaskSymbol = "<mask>";

// Dense token ids in first-occurrence order; the mask symbol is always the
// last id. No corpus text ever tokenizes to the mask.
struct Vocab {
  std::vector<std::string> symbols;
  TokenizerMode mode = TokenizerMode::Char;

  int size() const { return static_cast<int>(symbols.size()); }
  int mask_id() const { return size() - 1; }
};

std::string read_text_file(const std::string& path);

// Splits text into token strings: one UTF-8 code point per token in char
// mode, whitespace-separated words otherwise.
std::vector<std::string> split_symbols(const std::string& text,
                                       TokenizerMode mode);

Vocab build_vocab_from_text(const std::string& text, TokenizerMode mode);
Vocab build_vocab(const std::vector<std::string>& corpus_paths,
                  TokenizerMode mode);

// Non-overlapping windows of exactly window_len tokens; a trailing partial
// window is dropped. Throws on out-of-vocabulary tokens.
std::vector<TokenSeq> tokenize(const std::string& text, const Vocab& vocab,
                               int window_len);

std::string detokenize(const TokenSeq& seq, const Vocab& vocab);

// Positions whose token occurs at most tau times within the sequence are
// important; targets copy the sequence there.
AnchorMask anchor_mask(const TokenSeq& seq, int tau);

// Line-oriented vocabulary file: `advocab v1 K=<int> mode=<m>` header, one
// escaped symbol per line, mask last.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

std::uint64_t vocab_hash(const Vocab& vocab);

}  // namespace adlm
