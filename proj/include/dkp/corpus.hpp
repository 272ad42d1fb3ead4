// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_CORPUS_HPP_
#define DKP_CORPUS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dkp {

inline constexpr std::string_view kUnknownToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

using TokenId = std::int32_t;

class Vocab {
 public:
  Vocab();  // only <unk>
  explicit Vocab(std::vector<std::string> tokens);  // tokens[0] must be <unk>

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // 0 when unknown
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Whitespace split, with <eos> appended after every line.
std::vector<std::string> tokenize(std::string_view text);

// Keeps the max_size - 1 most frequent tokens (ties lexicographic) after
// <unk>. Throws ConfigError on an empty stream.
Vocab build_vocab(const std::vector<std::string>& stream, std::size_t max_size);

std::vector<TokenId> encode(const Vocab& v,
                            const std::vector<std::string>& stream);

struct Corpus {
  Vocab vocab;
  std::vector<TokenId> train;
  std::vector<TokenId> valid;
  std::vector<TokenId> test;
};

struct TextSplits {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
};

// A directory holding train.txt / valid.txt / test.txt, or one text file
// whose lines are split 90/5/5 in order.
TextSplits read_text_splits(const std::string& path);

Corpus make_corpus(const TextSplits& text, const Vocab& vocab);
Corpus load_corpus(const std::string& path, std::size_t max_vocab);

}  // namespace dkp

#endif  // DKP_CORPUS_HPP_
