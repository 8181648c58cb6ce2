#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "consult/gateway.hpp"
#include "consult/model.hpp"
#include "consult/termination.hpp"
#include "consult/tokenize.hpp"

namespace consult {

// --- policies ---------------------------------------------------------------

enum class AgentRole { doctor, patient, solver };
enum class AgentKind { llm, scripted };
enum class OracleOrder { direct, random_order, reverse };
enum class DoctorPromptVariant { long_form, short_form };

inline const char* oracle_order_name(OracleOrder o) {
  switch (o) {
    case OracleOrder::direct: return "direct";
    case OracleOrder::random_order: return "random";
    case OracleOrder::reverse: return "reverse";
  }
  return "?";
}

struct AgentPolicy {
  std::string id;
  AgentRole role = AgentRole::doctor;
  AgentKind kind = AgentKind::scripted;
  std::optional<ModelRef> model_ref;                    // required for llm
  std::optional<DoctorPromptVariant> prompt_variant;    // llm doctors
  std::optional<OracleOrder> order;                     // oracle doctors
  std::uint64_t seed = 0;                               // random oracle order
  std::string prompt_file;                              // llm agents

  // The long-form doctor prompt advertises at most 10 questions; the short
  // form leaves the count to the model.
  int question_budget() const {
    if (prompt_variant && *prompt_variant == DoctorPromptVariant::long_form)
      return 10;
    return 0;  // unbudgeted
  }
};

inline std::vector<std::string> validate_policy(const AgentPolicy& p) {
  std::vector<std::string> violations;
  if (p.id.empty()) violations.push_back("policy id empty");
  if (p.kind == AgentKind::llm && !p.model_ref)
    violations.push_back("llm policy without model_ref: " + p.id);
  if (p.kind == AgentKind::scripted && p.role == AgentRole::doctor && !p.order)
    violations.push_back("oracle doctor without order: " + p.id);
  return violations;
}

// --- prompt rendering -------------------------------------------------------

// Patient prompt template; also shipped verbatim as prompts/patient.txt.
inline constexpr std::string_view kPatientPromptTemplate =
    "Marv is a patient that interacts with doctor to get medical help. "
    "Marv's condition can be summarized as {{medical_info}}.\n"
    "At each Round Marv responds in less than 15 words.\n"
    "At each Round Marv gives only one point of information.\n"
    "Marv always talks colloquially.\n"
    "\n"
    "{{dialog_history}}\n"
    "Marv:";

inline std::string substitute(
    std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    std::string name(tpl.substr(open + 2, close - open - 2));
    auto it = values.find(name);
    if (it == values.end())
      throw std::runtime_error("unbound prompt placeholder: " + name);
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

// "Doctor: ..." / "Marv: ..." lines, in turn order.
inline std::string render_dialog_history(const std::vector<Turn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out.push_back('\n');
    out += (t.role == Role::doctor) ? "Doctor: " : "Marv: ";
    out += t.text;
  }
  return out;
}

inline std::string render_patient_prompt(const std::string& medical_info,
                                         const std::string& dialog_history) {
  return substitute(kPatientPromptTemplate,
                    {{"medical_info", medical_info},
                     {"dialog_history", dialog_history}});
}

// --- oracle doctor ----------------------------------------------------------

// Seed-deterministic Fisher-Yates; std::shuffle is not pinned across
// standard library implementations.
inline std::vector<std::size_t> seeded_permutation(std::size_t n,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

inline std::vector<std::string> oracle_question_sequence(
    const std::vector<MedicalFact>& facts, OracleOrder order,
    std::uint64_t seed) {
  if (facts.empty())
    throw std::invalid_argument("oracle_question_sequence: no facts");
  std::vector<std::size_t> idx;
  switch (order) {
    case OracleOrder::direct:
      for (std::size_t i = 0; i < facts.size(); ++i) idx.push_back(i);
      break;
    case OracleOrder::reverse:
      for (std::size_t i = facts.size(); i > 0; --i) idx.push_back(i - 1);
      break;
    case OracleOrder::random_order:
      idx = seeded_permutation(facts.size(), seed);
      break;
  }
  std::vector<std::string> questions;
  for (auto i : idx)
    questions.push_back("Can you tell me about " + facts[i].key + "?");
  return questions;
}

inline constexpr std::string_view kOracleClosingLine =
    "Thank you for telling me everything. Let me now review your information "
    "and give you my assessment.";

// --- agent interfaces -------------------------------------------------------

struct DoctorUtterance {
  std::string text;
  bool is_terminal = false;
};

struct PatientReply {
  std::string text;
  bool verbosity_violation = false;        // over the 15-word advisory limit
  std::vector<std::string> leaked_keys;    // values revealed without being asked
};

class DoctorAgent {
 public:
  virtual ~DoctorAgent() = default;
  // history holds every turn so far, starting with the initial request.
  virtual DoctorUtterance query(const std::vector<Turn>& history) = 0;
};

class PatientAgent {
 public:
  virtual ~PatientAgent() = default;
  // pre: the last turn in history is a doctor turn.
  virtual PatientReply respond(const std::vector<Turn>& history) = 0;
};

class SolverAgent {
 public:
  virtual ~SolverAgent() = default;
  // nullopt = unparseable output, scored as incorrect (distinct from errors,
  // which throw).
  virtual std::optional<std::string> solve(const ConsultationCase& c,
                                           const std::string& context) = 0;
};

class ChatAgent {
 public:
  virtual ~ChatAgent() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

class LlmChatAgent : public ChatAgent {
 public:
  LlmChatAgent(Gateway& gateway, ModelRef ref)
      : gateway_(gateway), ref_(std::move(ref)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    return gateway_.chat(ref_, messages);
  }

 private:
  Gateway& gateway_;
  ModelRef ref_;
};

// --- patient reply auditing -------------------------------------------------

// Flags a fact as leaked when its value appears in the reply although no
// doctor question so far shares a token with its key.
inline PatientReply audit_patient_reply(std::string text,
                                        const std::vector<MedicalFact>& facts,
                                        const std::vector<Turn>& history) {
  PatientReply reply;
  reply.verbosity_violation = word_count(text) > 15;
  auto reply_tokens = tokenize(text);
  std::vector<std::string> asked_tokens;
  for (const auto& t : history) {
    if (t.role != Role::doctor) continue;
    for (auto& tok : tokenize(t.text)) asked_tokens.push_back(tok);
  }
  for (const auto& fact : facts) {
    auto value_tokens = tokenize(fact.value);
    if (value_tokens.empty()) continue;
    if (!contains_subsequence(reply_tokens, value_tokens)) continue;
    bool key_asked = false;
    for (const auto& key_tok : tokenize(fact.key)) {
      if (std::find(asked_tokens.begin(), asked_tokens.end(), key_tok) !=
          asked_tokens.end()) {
        key_asked = true;
        break;
      }
    }
    if (!key_asked) reply.leaked_keys.push_back(fact.key);
  }
  reply.text = std::move(text);
  return reply;
}

// --- scripted agents --------------------------------------------------------

// Rule-based doctor asking "Can you tell me about {key}?" over the fact keys
// in a fixed order, then a closing statement.
class OracleDoctor : public DoctorAgent {
 public:
  OracleDoctor(const std::vector<MedicalFact>& facts, OracleOrder order,
               std::uint64_t seed)
      : questions_(oracle_question_sequence(facts, order, seed)) {}

  DoctorUtterance query(const std::vector<Turn>& history) override {
    std::size_t asked = 0;
    for (const auto& t : history)
      if (t.role == Role::doctor) ++asked;
    if (asked < questions_.size()) return {questions_[asked], false};
    return {std::string(kOracleClosingLine), true};
  }

  const std::vector<std::string>& questions() const { return questions_; }

 private:
  std::vector<std::string> questions_;
};

// Deterministic patient: reveals exactly the asked fact via
// "My {key} is {value}." so coverage-recall properties are exact.
class ScriptedPatient : public PatientAgent {
 public:
  explicit ScriptedPatient(std::vector<MedicalFact> facts)
      : facts_(std::move(facts)) {}

  PatientReply respond(const std::vector<Turn>& history) override {
    if (history.empty() || history.back().role != Role::doctor)
      throw std::invalid_argument("patient asked to respond out of turn");
    const MedicalFact* fact = match_fact(history.back().text);
    std::string text = fact ? "My " + fact->key + " is " + fact->value + "."
                            : std::string("I'm not sure about that.");
    return audit_patient_reply(std::move(text), facts_, history);
  }

  // Fact whose key has maximal token overlap with the question; ties go to
  // fact order; below one shared token there is no match.
  const MedicalFact* match_fact(const std::string& question) const {
    auto q_tokens = tokenize(question);
    const MedicalFact* best = nullptr;
    std::size_t best_overlap = 0;
    for (const auto& fact : facts_) {
      std::size_t overlap = 0;
      for (const auto& key_tok : tokenize(fact.key)) {
        if (std::find(q_tokens.begin(), q_tokens.end(), key_tok) !=
            q_tokens.end())
          ++overlap;
      }
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = &fact;
      }
    }
    return best_overlap >= 1 ? best : nullptr;
  }

 private:
  std::vector<MedicalFact> facts_;
};

// --- LLM agents -------------------------------------------------------------

class LlmDoctor : public DoctorAgent {
 public:
  LlmDoctor(Gateway& gateway, ModelRef ref, std::string system_prompt,
            int question_budget)
      : gateway_(gateway),
        ref_(std::move(ref)),
        system_prompt_(std::move(system_prompt)),
        budget_(question_budget) {}

  DoctorUtterance query(const std::vector<Turn>& history) override {
    std::vector<ChatMessage> messages;
    messages.push_back({"system", system_prompt_});
    for (const auto& t : history) {
      messages.push_back(
          {t.role == Role::doctor ? "assistant" : "user", t.text});
    }
    std::string text = gateway_.chat(ref_, messages);
    std::size_t asked = 0;
    for (const auto& t : history)
      if (t.role == Role::doctor) ++asked;
    bool budget_exhausted =
        budget_ > 0 && static_cast<int>(asked) + 1 >= budget_;
    return {text, detect_termination(text) || budget_exhausted};
  }

 private:
  Gateway& gateway_;
  ModelRef ref_;
  std::string system_prompt_;
  int budget_;
};

class LlmPatient : public PatientAgent {
 public:
  LlmPatient(Gateway& gateway, ModelRef ref, std::string medical_info,
             std::vector<MedicalFact> facts)
      : gateway_(gateway),
        ref_(std::move(ref)),
        medical_info_(std::move(medical_info)),
        facts_(std::move(facts)) {}

  PatientReply respond(const std::vector<Turn>& history) override {
    if (history.empty() || history.back().role != Role::doctor)
      throw std::invalid_argument("patient asked to respond out of turn");
    std::string prompt =
        render_patient_prompt(medical_info_, render_dialog_history(history));
    std::string text = gateway_.chat(ref_, {{"user", prompt}});
    // Models sometimes echo the cue line.
    if (text.rfind("Marv:", 0) == 0) text = trim(text.substr(5));
    return audit_patient_reply(std::move(text), facts_, history);
  }

 private:
  Gateway& gateway_;
  ModelRef ref_;
  std::string medical_info_;
  std::vector<MedicalFact> facts_;
};

// --- solvers ----------------------------------------------------------------

// First pass: standalone option letters; all occurrences must agree or the
// output is ambiguous. Fallback: exactly one option whose text appears.
inline std::optional<std::string> parse_solver_choice(
    const std::string& output, const std::vector<AnswerOption>& options) {
  std::vector<std::string> found;
  for (const auto& opt : options) {
    const std::string& label = opt.label;
    std::size_t pos = 0;
    while ((pos = output.find(label, pos)) != std::string::npos) {
      bool left_ok =
          pos == 0 || !std::isalnum(static_cast<unsigned char>(output[pos - 1]));
      std::size_t end = pos + label.size();
      bool right_ok = end >= output.size() ||
                      !std::isalnum(static_cast<unsigned char>(output[end]));
      if (left_ok && right_ok) {
        found.push_back(label);
        break;  // one hit per label is enough
      }
      ++pos;
    }
  }
  if (found.size() == 1) return found[0];
  if (found.size() > 1) return std::nullopt;

  auto out_tokens = tokenize(output);
  std::vector<std::string> text_matches;
  for (const auto& opt : options) {
    auto opt_tokens = tokenize(opt.text);
    if (!opt_tokens.empty() && contains_subsequence(out_tokens, opt_tokens))
      text_matches.push_back(opt.label);
  }
  if (text_matches.size() == 1) return text_matches[0];
  return std::nullopt;
}

// Offline stand-in: answers correctly iff at least `threshold` of the fact
// values appear in the solver context.
class MockSolver : public SolverAgent {
 public:
  explicit MockSolver(double threshold = 0.8) : threshold_(threshold) {}

  std::optional<std::string> solve(const ConsultationCase& c,
                                   const std::string& context) override {
    auto ctx_tokens = tokenize(context);
    std::size_t present = 0;
    for (const auto& fact : c.facts) {
      if (contains_subsequence(ctx_tokens, tokenize(fact.value))) ++present;
    }
    double fraction =
        c.facts.empty() ? 0.0
                        : static_cast<double>(present) / c.facts.size();
    if (fraction >= threshold_) return c.task.answer_label;
    for (const auto& opt : c.task.options) {
      if (opt.label != c.task.answer_label) return opt.label;
    }
    return std::nullopt;
  }

 private:
  double threshold_;
};

class LlmSolver : public SolverAgent {
 public:
  LlmSolver(Gateway& gateway, ModelRef ref, std::string prompt_template)
      : gateway_(gateway),
        ref_(std::move(ref)),
        prompt_template_(std::move(prompt_template)) {}

  // `context` arrives fully rendered: dialogue, task question, and options.
  std::optional<std::string> solve(const ConsultationCase& c,
                                   const std::string& context) override {
    std::string prompt = substitute(prompt_template_, {{"context", context}});
    std::string output = gateway_.chat(ref_, {{"user", prompt}});
    return parse_solver_choice(output, c.task.options);
  }

 private:
  Gateway& gateway_;
  ModelRef ref_;
  std::string prompt_template_;
};

}  // namespace consult
