#include "relcap/vocab.hpp"

#include <algorithm>

#include "relcap/error.hpp"

namespace relcap::data {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<unk>", "<start>", "<end>"}) push(t);
}

void Vocab::push(const std::string& token) {
  if (index_.contains(token)) throw DataError("vocab: duplicate token " + token);
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::from_counts(const std::map<std::string, int>& counts, int min_count) {
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [word, n] : counts) {
    if (n >= min_count) kept.emplace_back(word, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (const auto& [word, n] : kept) {
    if (!v.contains(word)) v.push(word);
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  if (tokens.size() < kNumSpecial) throw DataError("vocab: token list shorter than the special tokens");
  for (int i = 0; i < kNumSpecial; ++i) {
    if (tokens[static_cast<std::size_t>(i)] != v.tokens_[static_cast<std::size_t>(i)]) {
      throw DataError("vocab: special token mismatch at index " + std::to_string(i));
    }
  }
  for (std::size_t i = kNumSpecial; i < tokens.size(); ++i) v.push(tokens[i]);
  return v;
}

int Vocab::index(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return index_.contains(token); }

const std::string& Vocab::token(int index) const {
  if (index < 0 || index >= size()) throw DataError("vocab: index " + std::to_string(index) + " out of range");
  return tokens_[static_cast<std::size_t>(index)];
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) h = fnv1a(t + '\n', h);
  return h;
}

}  // namespace relcap::data
