#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace relcap::data {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kStart = 2;
  static constexpr int kEnd = 3;
  static constexpr int kNumSpecial = 4;

  Vocab();
  // Words with count >= min_count, by descending count then alphabetically.
  static Vocab from_counts(const std::map<std::string, int>& counts, int min_count);
  static Vocab from_tokens(const std::vector<std::string>& tokens);  // includes specials

  [[nodiscard]] int index(const std::string& token) const;  // kUnk when unknown
  [[nodiscard]] bool contains(const std::string& token) const;
  [[nodiscard]] const std::string& token(int index) const;
  [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
  [[nodiscard]] std::uint64_t hash() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL);

}  // namespace relcap::data
