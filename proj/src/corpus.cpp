// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dkp/error.hpp"

namespace dkp {

Vocab::Vocab() : Vocab(std::vector<std::string>{std::string(kUnknownToken)}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_[0] != kUnknownToken)
    throw FormatError("vocab: id 0 must be " + std::string(kUnknownToken));
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw FormatError("vocab: duplicate token '" + tokens_[i] + "'");
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? 0 : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw ShapeError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::istringstream line{std::string(text.substr(pos, eol - pos))};
    bool any = false;
    for (std::string w; line >> w;) {
      out.push_back(std::move(w));
      any = true;
    }
    if (any) out.emplace_back(kEosToken);
    pos = eol + 1;
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& stream,
                  std::size_t max_size) {
  if (stream.empty()) throw ConfigError("build_vocab: empty token stream");
  if (max_size < 1) throw ConfigError("build_vocab: max_size must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : stream)
    if (t != kUnknownToken) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> order(counts.begin(),
                                                          counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  std::vector<std::string> tokens{std::string(kUnknownToken)};
  for (const auto& [t, n] : order) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(t);
  }
  return Vocab(std::move(tokens));
}

std::vector<TokenId> encode(const Vocab& v,
                            const std::vector<std::string>& stream) {
  std::vector<TokenId> out;
  out.reserve(stream.size());
  for (const auto& t : stream) out.push_back(v.id(t));
  return out;
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TextSplits read_text_splits(const std::string& path) {
  namespace fs = std::filesystem;
  TextSplits s;
  if (fs::is_directory(path)) {
    const fs::path dir(path);
    s.train = tokenize(slurp(dir / "train.txt"));
    s.valid = tokenize(slurp(dir / "valid.txt"));
    s.test = tokenize(slurp(dir / "test.txt"));
    return s;
  }
  if (!fs::exists(path)) throw ConfigError("data path not found: " + path);
  const std::string text = slurp(path);
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    lines.push_back(std::string_view(text).substr(pos, eol - pos));
    pos = eol + 1;
  }
  const std::size_t n = lines.size();
  const std::size_t a = n * 90 / 100, b = n * 95 / 100;
  auto join = [&](std::size_t lo, std::size_t hi) {
    std::string t;
    for (std::size_t i = lo; i < hi; ++i) (t += lines[i]) += '\n';
    return tokenize(t);
  };
  s.train = join(0, a);
  s.valid = join(a, b);
  s.test = join(b, n);
  return s;
}

Corpus make_corpus(const TextSplits& text, const Vocab& vocab) {
  return {vocab, encode(vocab, text.train), encode(vocab, text.valid),
          encode(vocab, text.test)};
}

Corpus load_corpus(const std::string& path, std::size_t max_vocab) {
  const TextSplits text = read_text_splits(path);
  return make_corpus(text, build_vocab(text.train, max_vocab));
}

}  // namespace dkp
