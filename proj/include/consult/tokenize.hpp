#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace consult {

// Shared word tokenizer backing every length statistic and ROUGE score in
// the harness: lowercase, split on any non-alphanumeric byte, drop empties.
// No stemming, no stopword removal.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::size_t word_count(std::string_view text) {
  return tokenize(text).size();
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// True when `needle` occurs as a contiguous run inside `haystack`.
inline bool contains_subsequence(const std::vector<std::string>& haystack,
                                 const std::vector<std::string>& needle) {
  if (needle.empty()) return true;
  if (needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (haystack[i + j] != needle[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace consult
