#pragma once

#include <array>
#include <cctype>
#include <string>
#include <string_view>

namespace consult {

// A doctor turn ends the consultation when it asks nothing: no question mark
// and no interrogative opener at any sentence start. Pure function of the
// text; the orchestrator applies it to every doctor utterance.
inline bool detect_termination(std::string_view doctor_text) {
  if (doctor_text.find('?') != std::string_view::npos) return false;

  static constexpr std::array<std::string_view, 13> openers = {
      "what", "when", "where", "how",  "do",  "does", "did",
      "have", "has",  "is",    "are",  "can", "could"};

  bool at_sentence_start = true;
  std::size_t i = 0;
  while (i < doctor_text.size()) {
    unsigned char c = doctor_text[i];
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '.' || c == '!' || c == '?') {
      at_sentence_start = true;
      ++i;
      continue;
    }
    if (std::isalpha(c)) {
      std::string word;
      while (i < doctor_text.size() &&
             std::isalpha(static_cast<unsigned char>(doctor_text[i]))) {
        word.push_back(static_cast<char>(
            std::tolower(static_cast<unsigned char>(doctor_text[i]))));
        ++i;
      }
      if (at_sentence_start) {
        for (auto opener : openers)
          if (word == opener) return false;
      }
      at_sentence_start = false;
    } else {
      at_sentence_start = false;
      ++i;
    }
  }
  return true;
}

}  // namespace consult
