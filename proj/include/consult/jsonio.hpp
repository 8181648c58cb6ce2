#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "consult/model.hpp"

namespace consult {

using json = nlohmann::json;

inline json to_json(const MedicalFact& f) {
  return json{{"key", f.key}, {"value", f.value}};
}

inline MedicalFact fact_from_json(const json& j) {
  return MedicalFact{j.at("key").get<std::string>(),
                     j.at("value").get<std::string>()};
}

inline json to_json(const TaskSpec& t) {
  json options = json::array();
  for (const auto& o : t.options)
    options.push_back(json{{"label", o.label}, {"text", o.text}});
  return json{{"question", t.question},
              {"options", options},
              {"answer", t.answer_label}};
}

inline TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.question = j.at("question").get<std::string>();
  for (const auto& o : j.at("options"))
    t.options.push_back(AnswerOption{o.at("label").get<std::string>(),
                                     o.at("text").get<std::string>()});
  t.answer_label = j.at("answer").get<std::string>();
  return t;
}

inline json to_json(const ConsultationCase& c) {
  json facts = json::array();
  for (const auto& f : c.facts) facts.push_back(to_json(f));
  return json{{"id", c.id},
              {"source", c.source},
              {"medical_info", c.medical_info},
              {"facts", facts},
              {"initial_request", c.initial_request},
              {"task", to_json(c.task)}};
}

inline ConsultationCase case_from_json(const json& j) {
  ConsultationCase c;
  c.id = j.at("id").get<std::string>();
  c.source = j.at("source").get<std::string>();
  c.medical_info = j.at("medical_info").get<std::string>();
  for (const auto& f : j.at("facts")) c.facts.push_back(fact_from_json(f));
  c.initial_request = j.at("initial_request").get<std::string>();
  c.task = task_from_json(j.at("task"));
  return c;
}

inline json to_json(const Turn& t) {
  return json{{"index", t.index},
              {"role", role_name(t.role)},
              {"text", t.text},
              {"word_count", t.word_count}};
}

inline Turn turn_from_json(const json& j) {
  Turn t;
  t.index = j.at("index").get<int>();
  std::string role = j.at("role").get<std::string>();
  if (role == "doctor") {
    t.role = Role::doctor;
  } else if (role == "patient") {
    t.role = Role::patient;
  } else {
    throw std::runtime_error("unknown turn role: " + role);
  }
  t.text = j.at("text").get<std::string>();
  t.word_count = j.at("word_count").get<int>();
  return t;
}

inline json to_json(const Transcript& t) {
  json turns = json::array();
  for (const auto& turn : t.turns) turns.push_back(to_json(turn));
  return json{{"case_id", t.case_id},
              {"turns", turns},
              {"termination", termination_name(t.termination)},
              {"doctor_policy_id", t.doctor_policy_id},
              {"patient_policy_id", t.patient_policy_id},
              {"config_digest", t.config_digest}};
}

inline Transcript transcript_from_json(const json& j) {
  Transcript t;
  t.case_id = j.at("case_id").get<std::string>();
  for (const auto& turn : j.at("turns")) t.turns.push_back(turn_from_json(turn));
  std::string term = j.at("termination").get<std::string>();
  if (term == "doctor_stopped") {
    t.termination = Termination::doctor_stopped;
  } else if (term == "max_turns") {
    t.termination = Termination::max_turns;
  } else if (term == "error") {
    t.termination = Termination::error;
  } else {
    throw std::runtime_error("unknown termination: " + term);
  }
  t.doctor_policy_id = j.at("doctor_policy_id").get<std::string>();
  t.patient_policy_id = j.at("patient_policy_id").get<std::string>();
  t.config_digest = j.at("config_digest").get<std::string>();
  return t;
}

inline json to_json(const RougeScore& s) {
  return json{{"recall", s.recall}, {"precision", s.precision}, {"f1", s.f1}};
}

inline RougeScore rouge_from_json(const json& j) {
  RougeScore s;
  s.recall = j.at("recall").get<double>();
  s.precision = j.at("precision").get<double>();
  s.f1 = j.at("f1").get<double>();
  return s;
}

inline json to_json(const EvalRecord& r) {
  json j{{"case_id", r.case_id},
         {"patient_scores", to_json(r.patient_scores)},
         {"doctor_scores", to_json(r.doctor_scores)},
         {"patient_avg_len", r.patient_avg_len},
         {"doctor_avg_len", r.doctor_avg_len},
         {"turn_count", r.turn_count},
         {"correct", r.correct},
         {"error", r.error},
         {"has_dialogue", r.has_dialogue},
         {"has_patient_scores", r.has_patient_scores}};
  j["solver_choice"] = r.solver_choice ? json(*r.solver_choice) : json();
  j["diversity_rouge1"] = r.diversity_rouge1 ? json(*r.diversity_rouge1) : json();
  j["diversity_rouge2"] = r.diversity_rouge2 ? json(*r.diversity_rouge2) : json();
  j["diversity_rougeL"] = r.diversity_rougeL ? json(*r.diversity_rougeL) : json();
  if (r.error) j["error_message"] = r.error_message;
  return j;
}

inline EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  r.case_id = j.at("case_id").get<std::string>();
  r.patient_scores = rouge_from_json(j.at("patient_scores"));
  r.doctor_scores = rouge_from_json(j.at("doctor_scores"));
  r.patient_avg_len = j.at("patient_avg_len").get<double>();
  r.doctor_avg_len = j.at("doctor_avg_len").get<double>();
  r.turn_count = j.at("turn_count").get<int>();
  r.correct = j.at("correct").get<bool>();
  r.error = j.at("error").get<bool>();
  r.has_dialogue = j.at("has_dialogue").get<bool>();
  r.has_patient_scores = j.at("has_patient_scores").get<bool>();
  if (!j.at("solver_choice").is_null())
    r.solver_choice = j.at("solver_choice").get<std::string>();
  if (!j.at("diversity_rouge1").is_null())
    r.diversity_rouge1 = j.at("diversity_rouge1").get<double>();
  if (!j.at("diversity_rouge2").is_null())
    r.diversity_rouge2 = j.at("diversity_rouge2").get<double>();
  if (!j.at("diversity_rougeL").is_null())
    r.diversity_rougeL = j.at("diversity_rougeL").get<double>();
  if (j.contains("error_message")) r.error_message = j.at("error_message");
  return r;
}

// --- line-delimited files ---------------------------------------------------

inline std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<json> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": malformed record on line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

inline void write_jsonl(const std::vector<json>& records,
                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& r : records) out << r.dump() << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<ConsultationCase> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<ConsultationCase> cases;
  std::map<std::string, int> seen;  // id -> line
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ConsultationCase c;
    try {
      c = case_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": malformed record on line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    auto [it, inserted] = seen.emplace(c.id, line_no);
    if (!inserted) {
      throw std::runtime_error(path + ": duplicate case id '" + c.id +
                               "' on lines " + std::to_string(it->second) +
                               ", " + std::to_string(line_no));
    }
    auto violations = validate_case(c);
    if (!violations.empty()) {
      std::ostringstream msg;
      msg << path << ": invalid case '" << c.id << "' on line " << line_no
          << ":";
      for (const auto& v : violations) msg << " " << v << ";";
      throw std::runtime_error(msg.str());
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

inline void write_corpus(const std::vector<ConsultationCase>& cases,
                         const std::string& path) {
  std::vector<json> records;
  records.reserve(cases.size());
  for (const auto& c : cases) records.push_back(to_json(c));
  write_jsonl(records, path);
}

inline std::vector<Transcript> read_transcripts(const std::string& path) {
  std::vector<Transcript> out;
  for (const auto& j : read_jsonl(path)) out.push_back(transcript_from_json(j));
  return out;
}

inline void write_transcripts(const std::vector<Transcript>& transcripts,
                              const std::string& path) {
  std::vector<json> records;
  for (const auto& t : transcripts) records.push_back(to_json(t));
  write_jsonl(records, path);
}

inline std::vector<EvalRecord> read_records(const std::string& path) {
  std::vector<EvalRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(record_from_json(j));
  return out;
}

inline void write_records(const std::vector<EvalRecord>& records,
                          const std::string& path) {
  std::vector<json> out;
  for (const auto& r : records) out.push_back(to_json(r));
  write_jsonl(out, path);
}

}  // namespace consult
