#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "consult/agents.hpp"
#include "consult/jsonio.hpp"
#include "consult/model.hpp"
#include "consult/tokenize.hpp"

namespace consult {

struct RawMCQ {
  std::string id;
  std::string stem;
  std::vector<AnswerOption> options;
  std::string answer_label;
};

inline std::vector<RawMCQ> read_raw_mcqs(const std::string& path) {
  std::vector<RawMCQ> out;
  int line_no = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line_no;
    RawMCQ m;
    m.id = j.at("id").get<std::string>();
    m.stem = j.at("stem").get<std::string>();
    for (const auto& o : j.at("options"))
      m.options.push_back(AnswerOption{o.at("label").get<std::string>(),
                                       o.at("text").get<std::string>()});
    m.answer_label = j.at("answer").get<std::string>();
    out.push_back(std::move(m));
  }
  return out;
}

// Drops later MCQs whose stem is an exact duplicate of an earlier one.
inline std::vector<RawMCQ> dedup_mcqs(const std::vector<RawMCQ>& mcqs) {
  std::vector<RawMCQ> out;
  std::set<std::string> seen;
  for (const auto& m : mcqs) {
    if (seen.insert(m.stem).second) out.push_back(m);
  }
  return out;
}

struct CorpusStats {
  std::size_t n_instances = 0;
  double mean_options_per_question = 0.0;
  double mean_words_per_medical_info = 0.0;
  double mean_words_per_initial_request = 0.0;
  double mean_items_per_medical_info = 0.0;
};

struct KeyFrequency {
  std::string key;
  std::size_t count = 0;

  bool operator==(const KeyFrequency&) const = default;
};

// --- sentence splitting and MCQ reformulation --------------------------------

// Sentence boundary: '.', '?' or '!' followed by whitespace or end of text.
// A '.' followed by a non-space (e.g. "39.1") does not end a sentence.
inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> sentences;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    current.push_back(c);
    if ((c == '.' || c == '?' || c == '!') &&
        (i + 1 == text.size() ||
         std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      std::string trimmed = trim(current);
      if (!trimmed.empty()) sentences.push_back(trimmed);
      current.clear();
    }
  }
  std::string trimmed = trim(current);
  if (!trimmed.empty()) sentences.push_back(trimmed);
  return sentences;
}

inline std::string join_sentences(const std::vector<std::string>& sentences,
                                  std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += sentences[i];
  }
  return out;
}

struct SplitStem {
  std::string medical_info;
  std::string task_question;
};

// Splits an exam stem into the patient background and the question to solve:
// the task is the last interrogative sentence plus anything after it (the
// last sentence when nothing is interrogative). Stems with no informational
// part are filtered out.
inline SplitStem split_mcq_stem(const std::string& stem) {
  auto sentences = split_sentences(stem);
  std::size_t task_begin = sentences.size();
  for (std::size_t i = sentences.size(); i > 0; --i) {
    if (sentences[i - 1].back() == '?') {
      task_begin = i - 1;
      break;
    }
  }
  if (task_begin == sentences.size()) {
    // No interrogative sentence: the last sentence is the task.
    task_begin = sentences.empty() ? 0 : sentences.size() - 1;
  }
  if (task_begin == 0)
    throw std::runtime_error("no informational part");
  return SplitStem{join_sentences(sentences, 0, task_begin),
                   join_sentences(sentences, task_begin, sentences.size())};
}

inline std::pair<std::string, TaskSpec> split_mcq(const RawMCQ& mcq) {
  SplitStem split = split_mcq_stem(mcq.stem);
  TaskSpec task;
  task.question = split.task_question;
  task.options = mcq.options;
  task.answer_label = mcq.answer_label;
  return {split.medical_info, task};
}

// --- fact extraction ----------------------------------------------------------

inline constexpr std::string_view kExtractorPromptTemplate =
    "Extract the main medical information from the text below as a list of "
    "key-value pairs.\n"
    "Write one pair per line in the form \"key: value\".\n"
    "Keys are short descriptors such as \"age\" or \"temperature\"; values "
    "quote patient-specific details from the text.\n"
    "\n"
    "Text:\n"
    "{{medical_info}}";

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",   "an",  "the", "and", "or",  "of",   "in",   "on",  "at",
      "to",  "for", "with", "is", "are", "was",  "were", "he",  "she",
      "his", "her", "it",  "its", "as",  "by",   "that", "this"};
  return words;
}

inline bool is_grounded(const std::string& value,
                        const std::vector<std::string>& info_tokens) {
  for (const auto& tok : tokenize(value)) {
    if (stopwords().count(tok)) continue;
    if (std::find(info_tokens.begin(), info_tokens.end(), tok) !=
        info_tokens.end())
      return true;
  }
  return false;
}

inline std::vector<MedicalFact> parse_fact_lines(const std::string& output) {
  std::vector<MedicalFact> facts;
  std::size_t pos = 0;
  while (pos <= output.size()) {
    auto nl = output.find('\n', pos);
    std::string line = trim(output.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos));
    pos = nl == std::string::npos ? output.size() + 1 : nl + 1;
    if (line.empty()) continue;
    if (line.front() == '-' || line.front() == '*')
      line = trim(line.substr(1));
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = normalize_key(line.substr(0, colon));
    std::string value = trim(line.substr(colon + 1));
    if (!key.empty() && !value.empty()) facts.push_back({key, value});
  }
  return facts;
}

// Position of the value's first mention in the medical info, for ordering.
inline std::size_t first_mention(const std::vector<std::string>& info_tokens,
                                 const std::string& value) {
  auto value_tokens = tokenize(value);
  // Prefer a verbatim (contiguous) occurrence.
  if (!value_tokens.empty() && value_tokens.size() <= info_tokens.size()) {
    for (std::size_t i = 0; i + value_tokens.size() <= info_tokens.size();
         ++i) {
      bool match = true;
      for (std::size_t j = 0; j < value_tokens.size(); ++j) {
        if (info_tokens[i + j] != value_tokens[j]) { match = false; break; }
      }
      if (match) return i;
    }
  }
  for (const auto& tok : value_tokens) {
    if (stopwords().count(tok)) continue;
    auto it = std::find(info_tokens.begin(), info_tokens.end(), tok);
    if (it != info_tokens.end())
      return static_cast<std::size_t>(it - info_tokens.begin());
  }
  return info_tokens.size();
}

// Agent-backed key-value extraction with a grounding post-filter: a pair
// survives only when its value shares a content word with the medical info.
// Surviving facts are ordered by first mention.
inline std::vector<MedicalFact> extract_facts(const std::string& medical_info,
                                              ChatAgent& extractor,
                                              int retries = 2) {
  if (trim(medical_info).empty())
    throw std::invalid_argument("extract_facts: empty medical_info");
  std::string prompt =
      substitute(kExtractorPromptTemplate, {{"medical_info", medical_info}});
  std::string raw;
  std::vector<MedicalFact> parsed;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    raw = extractor.complete({{"user", prompt}});
    parsed = parse_fact_lines(raw);
    if (!parsed.empty()) break;
  }
  if (parsed.empty())
    throw std::runtime_error("extractor output unparseable: " + raw);

  auto info_tokens = tokenize(medical_info);
  std::vector<MedicalFact> grounded;
  std::set<std::string> seen_keys;
  for (const auto& fact : parsed) {
    if (!seen_keys.insert(fact.key).second) continue;
    if (is_grounded(fact.value, info_tokens)) grounded.push_back(fact);
  }
  if (grounded.empty()) throw std::runtime_error("extraction empty");
  std::stable_sort(grounded.begin(), grounded.end(),
                   [&](const MedicalFact& a, const MedicalFact& b) {
                     return first_mention(info_tokens, a.value) <
                            first_mention(info_tokens, b.value);
                   });
  return grounded;
}

// --- initial request ----------------------------------------------------------

inline constexpr std::string_view kInitialRequestPromptTemplate =
    "You are the patient described below. Write the first thing you would "
    "say to a doctor: a rough, colloquial description of your main symptom "
    "and a request for help, in the first person, under 25 words. Do not "
    "mention test results, exam findings, or other medical details.\n"
    "\n"
    "Medical information:\n"
    "{{medical_info}}";

// Keys whose values may appear verbatim in the opening request.
inline const std::set<std::string>& allowed_opening_keys() {
  static const std::set<std::string> keys = {"age", "sex", "gender",
                                             "chief complaint", "duration"};
  return keys;
}

inline std::vector<std::string> leaked_opening_values(
    const std::string& request, const std::vector<MedicalFact>& facts) {
  std::vector<std::string> leaks;
  auto req_tokens = tokenize(request);
  for (const auto& fact : facts) {
    if (allowed_opening_keys().count(fact.key)) continue;
    auto value_tokens = tokenize(fact.value);
    if (!value_tokens.empty() &&
        contains_subsequence(req_tokens, value_tokens))
      leaks.push_back(fact.key);
  }
  return leaks;
}

struct InitialRequest {
  std::string text;
  bool truncated = false;  // over length after retries, cut at a sentence
};

inline constexpr std::size_t kInitialRequestMaxWords = 25;

inline InitialRequest generate_initial_request(
    const std::string& medical_info, const std::vector<MedicalFact>& facts,
    ChatAgent& generator, int retries = 2) {
  if (trim(medical_info).empty())
    throw std::invalid_argument("generate_initial_request: empty medical_info");
  std::string prompt = substitute(kInitialRequestPromptTemplate,
                                  {{"medical_info", medical_info}});
  std::string text;
  bool length_ok = false;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    text = trim(generator.complete({{"user", prompt}}));
    if (!leaked_opening_values(text, facts).empty()) {
      if (attempt == retries)
        throw std::runtime_error(
            "initial request leaks disallowed values: " + text);
      continue;
    }
    if (word_count(text) <= kInitialRequestMaxWords) {
      length_ok = true;
      break;
    }
  }
  InitialRequest result;
  if (!length_ok) {
    // Cut at a sentence boundary, keeping at least one sentence.
    auto sentences = split_sentences(text);
    std::string kept;
    for (const auto& s : sentences) {
      std::string next = kept.empty() ? s : kept + " " + s;
      if (!kept.empty() && word_count(next) > kInitialRequestMaxWords) break;
      kept = next;
    }
    result.text = kept;
    result.truncated = true;
  } else {
    result.text = text;
  }
  return result;
}

// --- golden dialogue ----------------------------------------------------------

inline constexpr std::string_view kGoldenQuestionPromptTemplate =
    "You are a doctor generating a training consultation. Ask the patient "
    "exactly one short question eliciting the following item of medical "
    "information.\n"
    "Item key: {{key}}\n"
    "Dialogue so far:\n"
    "{{dialog_history}}";

inline constexpr std::string_view kGoldenAnswerPromptTemplate =
    "You are the patient in a training consultation. Answer the doctor's "
    "question truthfully in one short sentence using this item of your "
    "medical information.\n"
    "Item: {{key}}: {{value}}\n"
    "Question: {{question}}";

inline constexpr std::string_view kGoldenAnalysisPromptTemplate =
    "You are a doctor concluding a training consultation. Provide a brief "
    "analysis and your conclusion, stated without asking further questions.\n"
    "Dialogue:\n"
    "{{dialog_history}}\n"
    "Correct answer: {{answer}}";

inline constexpr std::string_view kGoldenClosingLine = "Thank you, doctor.";

// One doctor question per fact in fact order, one final analysis turn, one
// patient acknowledgement; total turns = 2 * |facts| + 3.
inline Transcript generate_golden_dialogue(const ConsultationCase& c,
                                           ChatAgent& doctor,
                                           ChatAgent& patient,
                                           const std::string& doctor_policy_id,
                                           const std::string& patient_policy_id) {
  if (c.facts.empty())
    throw std::invalid_argument("generate_golden_dialogue: case has no facts");
  Transcript t;
  t.case_id = c.id;
  t.doctor_policy_id = doctor_policy_id;
  t.patient_policy_id = patient_policy_id;
  t.turns.push_back(Turn::make(0, Role::patient, c.initial_request));
  int index = 1;
  try {
    for (const auto& fact : c.facts) {
      std::string question = trim(doctor.complete(
          {{"user",
            substitute(kGoldenQuestionPromptTemplate,
                       {{"key", fact.key},
                        {"dialog_history", render_dialog_history(t.turns)}})}}));
      t.turns.push_back(Turn::make(index++, Role::doctor, question));
      std::string answer = trim(patient.complete(
          {{"user", substitute(kGoldenAnswerPromptTemplate,
                               {{"key", fact.key},
                                {"value", fact.value},
                                {"question", question}})}}));
      t.turns.push_back(Turn::make(index++, Role::patient, answer));
    }
    std::string answer_text;
    for (const auto& opt : c.task.options)
      if (opt.label == c.task.answer_label) answer_text = opt.text;
    std::string analysis = trim(doctor.complete(
        {{"user",
          substitute(kGoldenAnalysisPromptTemplate,
                     {{"dialog_history", render_dialog_history(t.turns)},
                      {"answer", answer_text}})}}));
    t.turns.push_back(Turn::make(index++, Role::doctor, analysis));
  } catch (const std::exception& e) {
    throw std::runtime_error("golden dialogue for case " + c.id +
                             " failed at turn " + std::to_string(index) +
                             ": " + e.what());
  }
  t.turns.push_back(
      Turn::make(index++, Role::patient, std::string(kGoldenClosingLine)));
  t.termination = Termination::doctor_stopped;
  return t;
}

// --- corpus statistics ----------------------------------------------------------

inline CorpusStats compute_corpus_stats(
    const std::vector<ConsultationCase>& corpus) {
  CorpusStats stats;
  stats.n_instances = corpus.size();
  if (corpus.empty()) return stats;
  double options = 0, info_words = 0, request_words = 0, items = 0;
  for (const auto& c : corpus) {
    options += static_cast<double>(c.task.options.size());
    info_words += static_cast<double>(word_count(c.medical_info));
    request_words += static_cast<double>(word_count(c.initial_request));
    items += static_cast<double>(c.facts.size());
  }
  double n = static_cast<double>(corpus.size());
  stats.mean_options_per_question = options / n;
  stats.mean_words_per_medical_info = info_words / n;
  stats.mean_words_per_initial_request = request_words / n;
  stats.mean_items_per_medical_info = items / n;
  return stats;
}

inline std::vector<KeyFrequency> top_key_frequencies(
    const std::vector<ConsultationCase>& corpus, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : corpus)
    for (const auto& f : c.facts) counts[normalize_key(f.key)]++;
  std::vector<KeyFrequency> freqs;
  for (const auto& [key, count] : counts) freqs.push_back({key, count});
  std::sort(freqs.begin(), freqs.end(),
            [](const KeyFrequency& a, const KeyFrequency& b) {
              if (a.count != b.count) return a.count > b.count;
              return a.key < b.key;
            });
  if (freqs.size() > n) freqs.resize(n);
  return freqs;
}

// --- rule-based builder stand-ins ---------------------------------------------

// Pattern-matching extraction over common exam-stem phrasings. Used by the
// offline build path and as a deterministic test double for the LLM
// extractor; it emits the same "key: value" wire format.
inline std::vector<MedicalFact> rule_based_facts(const std::string& text) {
  struct PatternRule {
    std::regex pattern;
    std::vector<std::pair<std::string, int>> keys;  // key -> capture group
  };
  static const std::vector<PatternRule> rules = [] {
    auto icase = std::regex::icase;
    std::vector<PatternRule> r;
    r.push_back({std::regex(R"((\d+-year-old))"), {{"age", 1}}});
    r.push_back({std::regex(R"(\d+-year-old (man|woman|boy|girl|male|female))",
                            icase),
                 {{"sex", 1}}});
    r.push_back({std::regex(R"(because of ([^.]+?) for ([^.]+?)\.)", icase),
                 {{"chief complaint", 1}, {"duration", 2}}});
    r.push_back({std::regex(R"(presents with ([^.]+?) for ([^.]+?)\.)", icase),
                 {{"chief complaint", 1}, {"duration", 2}}});
    r.push_back({std::regex(R"(history of ([^.]+?)\.)", icase),
                 {{"medical history", 1}}});
    r.push_back(
        {std::regex(R"(smokes ([^.]+?)\.)", icase), {{"smoking", 1}}});
    r.push_back({std::regex(R"(drinks ([^.]+?)\.)", icase), {{"alcohol", 1}}});
    r.push_back({std::regex(R"(takes ([^.]+?) daily)", icase),
                 {{"medications", 1}}});
    r.push_back({std::regex(R"(temperature (?:is|of) ([\d.]+°C))", icase),
                 {{"temperature", 1}}});
    r.push_back({std::regex(R"(pulse is (\d+/min))", icase), {{"pulse", 1}}});
    r.push_back(
        {std::regex(R"(blood pressure is (\d+/\d+ mm ?Hg))", icase),
         {{"blood pressure", 1}}});
    r.push_back({std::regex(R"(examination shows ([^.]+?)\.)", icase),
                 {{"examination findings", 1}}});
    r.push_back({std::regex(R"(An ECG shows ([^.]+?)\.)"),
                 {{"ecg findings", 1}}});
    r.push_back({std::regex(R"(also reports ([^.]+?)\.)", icase),
                 {{"associated symptoms", 1}}});
    r.push_back({std::regex(R"(works as ([^.]+?)\.)", icase),
                 {{"occupation", 1}}});
    return r;
  }();

  std::vector<std::pair<std::size_t, MedicalFact>> found;
  for (const auto& rule : rules) {
    std::smatch match;
    if (std::regex_search(text, match, rule.pattern)) {
      for (const auto& [key, group] : rule.keys) {
        if (match[group].matched) {
          found.push_back({static_cast<std::size_t>(match.position(group)),
                           {key, trim(match[group].str())}});
        }
      }
    }
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<MedicalFact> facts;
  std::set<std::string> seen;
  for (auto& [pos, fact] : found) {
    if (seen.insert(fact.key).second) facts.push_back(std::move(fact));
  }
  return facts;
}

namespace detail {

// Pulls the payload after a marker line out of a rendered prompt.
inline std::optional<std::string> after_marker(const std::string& text,
                                               std::string_view marker) {
  auto pos = text.find(marker);
  if (pos == std::string::npos) return std::nullopt;
  return text.substr(pos + marker.size());
}

}  // namespace detail

// Deterministic stand-in for the LLM extractor: recovers the medical info
// from the rendered prompt and answers with rule-based "key: value" lines.
class ScriptedExtractorAgent : public ChatAgent {
 public:
  std::string complete(const std::vector<ChatMessage>& messages) override {
    auto info = detail::after_marker(messages.back().content, "Text:\n");
    if (!info) throw std::runtime_error("extractor prompt missing text block");
    std::string out;
    for (const auto& fact : rule_based_facts(trim(*info)))
      out += fact.key + ": " + fact.value + "\n";
    return out;
  }
};

// Deterministic stand-in for the initial-request generator. Only values of
// allowed opening keys (age, sex, chief complaint, duration) are used.
class ScriptedRequestAgent : public ChatAgent {
 public:
  std::string complete(const std::vector<ChatMessage>& messages) override {
    auto info = detail::after_marker(messages.back().content,
                                     "Medical information:\n");
    if (!info)
      throw std::runtime_error("request prompt missing medical information");
    std::map<std::string, std::string> byKey;
    for (const auto& fact : rule_based_facts(trim(*info)))
      byKey.emplace(fact.key, fact.value);
    std::string out = "Hi doctor, I'm a";
    if (byKey.count("age")) out += " " + byKey["age"];
    if (byKey.count("sex")) out += " " + byKey["sex"];
    if (!byKey.count("age") && !byKey.count("sex")) out += " patient";
    if (byKey.count("chief complaint")) {
      out += " and I've been having " + byKey["chief complaint"];
      if (byKey.count("duration")) out += " for " + byKey["duration"];
    } else {
      out += " and I'm not feeling well at all";
    }
    out += ". Can you help me?";
    return out;
  }
};

// Deterministic stand-ins for golden-dialogue generation.
class ScriptedGoldenDoctorAgent : public ChatAgent {
 public:
  std::string complete(const std::vector<ChatMessage>& messages) override {
    const std::string& prompt = messages.back().content;
    if (auto key = detail::after_marker(prompt, "Item key: ")) {
      auto nl = key->find('\n');
      return "Can you tell me about " +
             trim(nl == std::string::npos ? *key : key->substr(0, nl)) + "?";
    }
    if (auto answer = detail::after_marker(prompt, "Correct answer: ")) {
      return "After reviewing everything you told me, my assessment is: " +
             trim(*answer) + ".";
    }
    throw std::runtime_error("unrecognized golden doctor prompt");
  }
};

class ScriptedGoldenPatientAgent : public ChatAgent {
 public:
  std::string complete(const std::vector<ChatMessage>& messages) override {
    const std::string& prompt = messages.back().content;
    auto item = detail::after_marker(prompt, "Item: ");
    if (!item) throw std::runtime_error("unrecognized golden patient prompt");
    auto nl = item->find('\n');
    std::string line = nl == std::string::npos ? *item : item->substr(0, nl);
    auto colon = line.find(": ");
    if (colon == std::string::npos)
      throw std::runtime_error("golden patient prompt missing item value");
    return "My " + trim(line.substr(0, colon)) + " is " +
           trim(line.substr(colon + 2)) + ".";
  }
};

}  // namespace consult
