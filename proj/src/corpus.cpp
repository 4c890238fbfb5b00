#include "adlm/corpus.hpp"

#include "adlm/errors.hpp"
#include "adlm/rng.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace adlm {

namespace {

std::unordered_map<std::string, int> symbol_index(const Vocab& vocab) {
  std::unordered_map<std::string, int> index;
  index.reserve(vocab.symbols.size());
  for (int i = 0; i < vocab.size(); ++i) index.emplace(vocab.symbols[i], i);
  return index;
}

std::string escape_symbol(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_symbol(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    ++i;
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      default: out += '\\'; out += s[i];
    }
  }
  return out;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_symbols(const std::string& text,
                                       TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::Whitespace) {
    std::string cur;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }
  // Char mode: one UTF-8 code point per symbol.
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char b = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (b >= 0xF0) len = 4;
    else if (b >= 0xE0) len = 3;
    else if (b >= 0xC0) len = 2;
    if (i + len > text.size()) len = text.size() - i;
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Vocab build_vocab_from_text(const std::string& text, TokenizerMode mode) {
  const std::vector<std::string> tokens = split_symbols(text, mode);
  if (tokens.empty()) throw format_error("empty corpus");
  Vocab vocab;
  vocab.mode = mode;
  std::unordered_map<std::string, int> seen;
  for (const std::string& tok : tokens) {
    if (tok == kMaskSymbol)
      throw format_error("corpus contains the reserved mask symbol");
    if (seen.emplace(tok, 1).second) vocab.symbols.push_back(tok);
  }
  vocab.symbols.push_back(kMaskSymbol);
  return vocab;
}

Vocab build_vocab(const std::vector<std::string>& corpus_paths,
                  TokenizerMode mode) {
  std::string all;
  for (const std::string& path : corpus_paths) {
    all += read_text_file(path);
    if (mode == TokenizerMode::Whitespace) all += '\n';
  }
  return build_vocab_from_text(all, mode);
}

std::vector<TokenSeq> tokenize(const std::string& text, const Vocab& vocab,
                               int window_len) {
  require(window_len >= 1, "window length must be positive");
  const auto index = symbol_index(vocab);
  const std::vector<std::string> tokens = split_symbols(text, vocab.mode);
  std::vector<TokenSeq> windows;
  const std::size_t n_full = tokens.size() / window_len;
  windows.reserve(n_full);
  TokenSeq cur(window_len);
  int fill = 0;
  for (const std::string& tok : tokens) {
    const auto it = index.find(tok);
    if (it == index.end() || it->second == vocab.mask_id())
      throw format_error("out-of-vocabulary token: '" + escape_symbol(tok) + "'");
    cur(fill++) = it->second;
    if (fill == window_len) {
      windows.push_back(cur);
      fill = 0;
    }
  }
  return windows;
}

std::string detokenize(const TokenSeq& seq, const Vocab& vocab) {
  require(valid_token_seq(seq, vocab.size()), "token id outside vocabulary");
  std::string out;
  for (Eigen::Index l = 0; l < seq.size(); ++l) {
    if (vocab.mode == TokenizerMode::Whitespace && l > 0) out += ' ';
    out += vocab.symbols[seq(l)];
  }
  return out;
}

AnchorMask anchor_mask(const TokenSeq& seq, int tau) {
  require(tau >= 0, "tau must be nonnegative");
  const Eigen::Index n = seq.size();
  int max_id = -1;
  for (Eigen::Index l = 0; l < n; ++l) max_id = std::max(max_id, seq(l));
  std::vector<int> counts(static_cast<std::size_t>(max_id) + 1, 0);
  for (Eigen::Index l = 0; l < n; ++l) ++counts[seq(l)];
  AnchorMask mask;
  mask.important = BoolArray(n);
  mask.targets = seq;
  for (Eigen::Index l = 0; l < n; ++l)
    mask.important(l) = counts[seq(l)] <= tau;
  return mask;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot write file: " + path);
  out << "advocab v1 K=" << vocab.size() << " mode="
      << (vocab.mode == TokenizerMode::Char ? "char" : "whitespace") << "\n";
  for (const std::string& s : vocab.symbols) out << escape_symbol(s) << "\n";
  if (!out) throw format_error("failed writing vocabulary: " + path);
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot read file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw format_error("empty vocabulary file");
  std::istringstream hs(header);
  std::string magic, version, kfield;
  hs >> magic >> version >> kfield;
  if (magic != "advocab") throw format_error("not a vocabulary file: " + path);
  if (version != "v1")
    throw format_error("unsupported vocabulary version: " + version);
  if (kfield.rfind("K=", 0) != 0)
    throw format_error("malformed vocabulary header: " + header);
  const int expected_k = std::stoi(kfield.substr(2));
  Vocab vocab;
  std::string mfield;
  if (hs >> mfield && mfield.rfind("mode=", 0) == 0) {
    const std::string m = mfield.substr(5);
    if (m == "char") vocab.mode = TokenizerMode::Char;
    else if (m == "whitespace") vocab.mode = TokenizerMode::Whitespace;
    else throw format_error("unknown tokenizer mode: " + m);
  }
  std::string line;
  while (std::getline(in, line)) vocab.symbols.push_back(unescape_symbol(line));
  if (vocab.size() != expected_k)
    throw format_error("vocabulary size disagrees with header");
  if (vocab.symbols.empty() || vocab.symbols.back() != kMaskSymbol)
    throw format_error("vocabulary must end with the mask symbol");
  return vocab;
}

std::uint64_t vocab_hash(const Vocab& vocab) {
  std::uint64_t h = fnv1a64(vocab.mode == TokenizerMode::Char ? "char" : "ws");
  for (const std::string& s : vocab.symbols) {
    h ^= fnv1a64(s);
    h = splitmix64(h);
  }
  return h;
}

}  // namespace adlm
