#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include "consult/rouge.hpp"
#include "consult/tokenize.hpp"

namespace consult {

// Lowercases and collapses internal whitespace; fact keys are always stored
// in this form so frequency counts and coverage references line up.
inline std::string normalize_key(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return std::string(s.substr(begin, end - begin));
}

struct MedicalFact {
  std::string key;    // normalized short descriptor, e.g. "temperature"
  std::string value;  // patient-specific detail, e.g. "39.1°C"

  bool operator==(const MedicalFact&) const = default;
};

struct AnswerOption {
  std::string label;
  std::string text;

  bool operator==(const AnswerOption&) const = default;
};

struct TaskSpec {
  std::string question;
  std::vector<AnswerOption> options;
  std::string answer_label;

  bool operator==(const TaskSpec&) const = default;
};

struct ConsultationCase {
  std::string id;
  std::string source;
  std::string medical_info;
  std::vector<MedicalFact> facts;  // empty only for raw (pre-extraction) cases
  std::string initial_request;
  TaskSpec task;

  bool operator==(const ConsultationCase&) const = default;
};

enum class Role { doctor, patient };

inline const char* role_name(Role r) {
  return r == Role::doctor ? "doctor" : "patient";
}

struct Turn {
  int index = 0;
  Role role = Role::patient;
  std::string text;
  int word_count = 0;

  static Turn make(int index, Role role, std::string text) {
    Turn t;
    t.index = index;
    t.role = role;
    t.word_count = static_cast<int>(consult::word_count(text));
    t.text = std::move(text);
    return t;
  }

  bool operator==(const Turn&) const = default;
};

enum class Termination { doctor_stopped, max_turns, error };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::doctor_stopped: return "doctor_stopped";
    case Termination::max_turns: return "max_turns";
    case Termination::error: return "error";
  }
  return "?";
}

struct Transcript {
  std::string case_id;
  std::vector<Turn> turns;  // turns[0] is the patient's initial request
  Termination termination = Termination::doctor_stopped;
  std::string doctor_policy_id;
  std::string patient_policy_id;
  std::string config_digest;

  std::vector<Turn> doctor_turns() const {
    std::vector<Turn> out;
    for (const auto& t : turns)
      if (t.role == Role::doctor) out.push_back(t);
    return out;
  }

  std::vector<Turn> patient_turns() const {
    std::vector<Turn> out;
    for (const auto& t : turns)
      if (t.role == Role::patient) out.push_back(t);
    return out;
  }

  bool operator==(const Transcript&) const = default;
};

struct EvalRecord {
  std::string case_id;
  RougeScore patient_scores;
  RougeScore doctor_scores;
  double patient_avg_len = 0.0;
  double doctor_avg_len = 0.0;
  int turn_count = 0;  // number of doctor turns
  std::optional<std::string> solver_choice;
  bool correct = false;
  // Mean pairwise similarity of the doctor's queries, absent when the
  // doctor produced fewer than two turns.
  std::optional<double> diversity_rouge1;
  std::optional<double> diversity_rouge2;
  std::optional<double> diversity_rougeL;
  bool error = false;
  std::string error_message;
  bool has_dialogue = true;        // false for bound-mode records
  bool has_patient_scores = true;  // lower bound scores the initial request
};

inline std::vector<std::string> validate_case(const ConsultationCase& c,
                                              bool require_facts = false) {
  std::vector<std::string> violations;
  if (trim(c.id).empty()) violations.push_back("id empty");
  if (trim(c.medical_info).empty()) violations.push_back("medical_info empty");
  if (trim(c.initial_request).empty())
    violations.push_back("initial_request empty");
  if (c.task.options.size() < 2) violations.push_back("options < 2");
  for (std::size_t i = 0; i < c.task.options.size(); ++i) {
    for (std::size_t j = i + 1; j < c.task.options.size(); ++j) {
      if (c.task.options[i].label == c.task.options[j].label) {
        violations.push_back("duplicate option label: " +
                             c.task.options[i].label);
      }
    }
  }
  bool answer_found = false;
  for (const auto& opt : c.task.options)
    if (opt.label == c.task.answer_label) answer_found = true;
  if (!answer_found) violations.push_back("answer not among labels");
  for (const auto& f : c.facts) {
    if (trim(f.key).empty()) violations.push_back("fact with empty key");
    if (f.key != normalize_key(f.key))
      violations.push_back("fact key not normalized: " + f.key);
    if (trim(f.value).empty())
      violations.push_back("fact with empty value (key: " + f.key + ")");
  }
  if (require_facts && c.facts.empty())
    violations.push_back("built case has no facts");
  return violations;
}

inline std::vector<std::string> validate_transcript(const Transcript& t) {
  std::vector<std::string> violations;
  if (t.turns.empty()) {
    violations.push_back("transcript has no turns");
    return violations;
  }
  if (t.turns[0].role != Role::patient)
    violations.push_back("turn 0 is not the patient");
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const Turn& turn = t.turns[i];
    if (turn.index != static_cast<int>(i))
      violations.push_back("turn index not consecutive at " +
                           std::to_string(i));
    Role expected = (i % 2 == 0) ? Role::patient : Role::doctor;
    if (turn.role != expected)
      violations.push_back("roles do not alternate at turn " +
                           std::to_string(i));
    if (turn.word_count != static_cast<int>(consult::word_count(turn.text)))
      violations.push_back("word_count mismatch at turn " + std::to_string(i));
  }
  return violations;
}

}  // namespace consult
