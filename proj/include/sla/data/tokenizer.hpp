#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/tensor/ops.hpp"

namespace sla {

/// Lowercases and collapses runs of whitespace to single spaces; trims both ends.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string norm = normalize_text(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    auto end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    words.push_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

/// Word-level tokenizer over a closed vocabulary. Ids 0..2 are reserved for
/// padding, end-of-sequence and unknown words; kIgnore is a loss-mask sentinel
/// and never a vocabulary id.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kIgnore = -1;
  static constexpr std::string_view kPadText = "<pad>";
  static constexpr std::string_view kEosText = "<eos>";
  static constexpr std::string_view kUnkText = "<unk>";

  /// `words` excludes the specials; duplicates and empty words are rejected.
  explicit Tokenizer(const std::vector<std::string>& words) {
    for (auto s : {kPadText, kEosText, kUnkText}) add(std::string(s));
    for (const auto& w : words) {
      const auto norm = normalize_text(w);
      if (norm.empty() || norm.find(' ') != std::string::npos) {
        throw ContractError("vocabulary entry '" + w + "' is not a single word");
      }
      if (index_.contains(norm)) throw ContractError("duplicate vocabulary entry '" + norm + "'");
      add(norm);
    }
  }

  static Tokenizer load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary " + path);
    std::vector<std::string> words;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      if (lineno < 3) {
        const std::string_view expected = lineno == 0 ? kPadText : lineno == 1 ? kEosText : kUnkText;
        if (line != expected) throw FormatError("vocabulary " + path + " must start with the special tokens", lineno);
      } else if (!line.empty()) {
        words.push_back(line);
      }
      ++lineno;
    }
    return Tokenizer(words);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path);
    for (const auto& w : words_) out << w << '\n';
  }

  std::size_t size() const { return words_.size(); }

  TokenId id(std::string_view word) const {
    const auto it = index_.find(normalize_text(word));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view word) const { return index_.contains(normalize_text(word)); }

  const std::string& word(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
      throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(words_.size()));
    }
    return words_[static_cast<std::size_t>(id)];
  }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (auto id : ids) {
      if (!out.empty()) out.push_back(' ');
      out += word(id);
    }
    return out;
  }

  const std::vector<std::string>& words() const { return words_; }

 private:
  void add(std::string w) {
    index_.emplace(w, static_cast<TokenId>(words_.size()));
    words_.push_back(std::move(w));
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace sla
