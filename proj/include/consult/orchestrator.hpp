#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "consult/agents.hpp"
#include "consult/jsonio.hpp"
#include "consult/metrics.hpp"
#include "consult/model.hpp"
#include "consult/termination.hpp"

namespace consult {

enum class RunMode { consultation, upper_bound, lower_bound };

inline const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::consultation: return "consultation";
    case RunMode::upper_bound: return "upper_bound";
    case RunMode::lower_bound: return "lower_bound";
  }
  return "?";
}

inline RunMode run_mode_from_name(const std::string& name) {
  if (name == "consultation" || name == "consult") return RunMode::consultation;
  if (name == "upper_bound" || name == "upper") return RunMode::upper_bound;
  if (name == "lower_bound" || name == "lower") return RunMode::lower_bound;
  throw std::runtime_error("unknown run mode: " + name);
}

struct RunConfig {
  AgentPolicy doctor_policy;
  AgentPolicy patient_policy;
  AgentPolicy solver_policy;
  int max_turns = 10;  // cap on doctor turns
  int parallelism = 1;
  RunMode mode = RunMode::consultation;
  bool replay = false;
  // Whether the doctor's final (terminal) turn is rendered into the solver
  // context; keeping it matches the end-to-end pipeline, dropping it is the
  // noise ablation.
  bool include_final_doctor_turn = true;
  bool include_initial_request_in_patient_coverage = true;
};

inline json policy_to_json(const AgentPolicy& p) {
  json j{{"id", p.id},
         {"role", static_cast<int>(p.role)},
         {"kind", p.kind == AgentKind::llm ? "llm" : "scripted"},
         {"seed", p.seed},
         {"prompt_file", p.prompt_file}};
  if (p.model_ref) {
    j["model"] = p.model_ref->model;
    j["temperature"] = p.model_ref->params.temperature;
    j["max_tokens"] = p.model_ref->params.max_tokens;
    if (p.model_ref->params.seed) j["sampling_seed"] = *p.model_ref->params.seed;
  }
  if (p.prompt_variant)
    j["prompt_variant"] = *p.prompt_variant == DoctorPromptVariant::long_form
                              ? "long"
                              : "short";
  if (p.order) j["order"] = oracle_order_name(*p.order);
  return j;
}

inline json run_config_to_json(const RunConfig& c) {
  return json{{"doctor_policy", policy_to_json(c.doctor_policy)},
              {"patient_policy", policy_to_json(c.patient_policy)},
              {"solver_policy", policy_to_json(c.solver_policy)},
              {"max_turns", c.max_turns},
              {"mode", run_mode_name(c.mode)},
              {"include_final_doctor_turn", c.include_final_doctor_turn},
              {"include_initial_request_in_patient_coverage",
               c.include_initial_request_in_patient_coverage}};
}

// Stable over everything that can change agent behavior; parallelism and
// replay deliberately excluded (they must not change outputs).
inline std::string config_digest(const RunConfig& c) {
  return digest_hex(run_config_to_json(c).dump());
}

struct CaseResult {
  std::string case_id;
  RunMode mode = RunMode::consultation;
  std::optional<std::string> solver_choice;
  bool correct = false;
  bool error = false;
  std::string error_message;
};

inline json to_json(const CaseResult& r) {
  json j{{"case_id", r.case_id},
         {"mode", run_mode_name(r.mode)},
         {"correct", r.correct},
         {"error", r.error}};
  j["solver_choice"] = r.solver_choice ? json(*r.solver_choice) : json();
  if (r.error) j["error_message"] = r.error_message;
  return j;
}

inline CaseResult case_result_from_json(const json& j) {
  CaseResult r;
  r.case_id = j.at("case_id").get<std::string>();
  r.mode = run_mode_from_name(j.at("mode").get<std::string>());
  r.correct = j.at("correct").get<bool>();
  r.error = j.at("error").get<bool>();
  if (!j.at("solver_choice").is_null())
    r.solver_choice = j.at("solver_choice").get<std::string>();
  if (j.contains("error_message")) r.error_message = j.at("error_message");
  return r;
}

// --- solver context -----------------------------------------------------------

inline std::string render_solver_context(const Transcript& t,
                                         bool include_final_doctor_turn) {
  std::vector<Turn> turns = t.turns;
  if (!include_final_doctor_turn && !turns.empty() &&
      turns.back().role == Role::doctor) {
    turns.pop_back();
  }
  std::string out;
  for (const auto& turn : turns) {
    if (!out.empty()) out.push_back('\n');
    out += (turn.role == Role::doctor) ? "Doctor: " : "Patient: ";
    out += turn.text;
  }
  return out;
}

inline std::string render_solver_prompt_context(const std::string& dialogue,
                                                const TaskSpec& task) {
  std::string out = dialogue;
  out += "\n\nQuestion: " + task.question + "\nOptions:\n";
  for (const auto& opt : task.options)
    out += "(" + opt.label + ") " + opt.text + "\n";
  out += "Answer with the letter of the single best option.";
  return out;
}

// --- transcript truncation ------------------------------------------------------

// Keeps turn 0 plus the first max(1, floor(p * K)) doctor-patient exchanges,
// K being the total number of doctor turns.
inline Transcript truncate_transcript(const Transcript& t, double p) {
  if (!(p > 0.0 && p <= 1.0))
    throw std::invalid_argument("truncate_transcript: p outside (0, 1]");
  std::size_t k = 0;
  for (const auto& turn : t.turns)
    if (turn.role == Role::doctor) ++k;
  if (k == 0) return t;
  std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(p * static_cast<double>(k))));
  if (keep >= k) return t;

  Transcript out = t;
  out.turns.clear();
  std::size_t doctors_seen = 0;
  for (const auto& turn : t.turns) {
    if (turn.role == Role::doctor) {
      if (doctors_seen == keep) break;
      ++doctors_seen;
    }
    out.turns.push_back(turn);
  }
  return out;
}

// --- single-case execution -------------------------------------------------------

struct SessionAgents {
  std::function<std::unique_ptr<DoctorAgent>(const ConsultationCase&)>
      make_doctor;
  std::function<std::unique_ptr<PatientAgent>(const ConsultationCase&)>
      make_patient;
  std::shared_ptr<SolverAgent> solver;
};

// Runs the consultation loop: doctor query, patient response, until the
// doctor stops inquiring or the turn cap hits. `persist_transcript`, when
// set, is invoked before the solver runs.
inline std::pair<Transcript, CaseResult> run_consultation(
    const ConsultationCase& c, DoctorAgent& doctor, PatientAgent& patient,
    SolverAgent& solver, const RunConfig& config,
    const std::function<void(const Transcript&)>& persist_transcript = {}) {
  Transcript t;
  t.case_id = c.id;
  t.doctor_policy_id = config.doctor_policy.id;
  t.patient_policy_id = config.patient_policy.id;
  t.config_digest = config_digest(config);
  t.turns.push_back(Turn::make(0, Role::patient, c.initial_request));

  CaseResult result;
  result.case_id = c.id;
  result.mode = config.mode;

  int index = 1;
  int doctor_turns = 0;
  try {
    for (;;) {
      if (doctor_turns >= config.max_turns) {
        t.termination = Termination::max_turns;
        break;
      }
      DoctorUtterance utt = doctor.query(t.turns);
      t.turns.push_back(Turn::make(index++, Role::doctor, utt.text));
      ++doctor_turns;
      if (utt.is_terminal || detect_termination(utt.text)) {
        t.termination = Termination::doctor_stopped;
        break;
      }
      if (doctor_turns >= config.max_turns) {
        t.termination = Termination::max_turns;
        break;
      }
      PatientReply reply = patient.respond(t.turns);
      t.turns.push_back(Turn::make(index++, Role::patient, reply.text));
    }
  } catch (const std::exception& e) {
    t.termination = Termination::error;
    result.error = true;
    result.error_message = e.what();
    return {t, result};
  }

  if (persist_transcript) persist_transcript(t);

  try {
    std::string context = render_solver_prompt_context(
        render_solver_context(t, config.include_final_doctor_turn), c.task);
    result.solver_choice = solver.solve(c, context);
  } catch (const std::exception& e) {
    result.error = true;
    result.error_message = e.what();
    return {t, result};
  }
  result.correct =
      result.solver_choice && *result.solver_choice == c.task.answer_label;
  return {t, result};
}

// Bound modes: no dialogue occurs. Upper bound hands the solver the full
// medical information, lower bound only the initial request.
inline CaseResult run_bound(const ConsultationCase& c, SolverAgent& solver,
                            const RunConfig& config) {
  if (config.mode == RunMode::consultation)
    throw std::invalid_argument("run_bound called in consultation mode");
  CaseResult result;
  result.case_id = c.id;
  result.mode = config.mode;
  const std::string& base = config.mode == RunMode::upper_bound
                                ? c.medical_info
                                : c.initial_request;
  try {
    result.solver_choice =
        solver.solve(c, render_solver_prompt_context(base, c.task));
  } catch (const std::exception& e) {
    result.error = true;
    result.error_message = e.what();
    return result;
  }
  result.correct =
      result.solver_choice && *result.solver_choice == c.task.answer_label;
  return result;
}

// --- per-case metric record -------------------------------------------------------

inline EvalRecord make_eval_record(const ConsultationCase& c,
                                   const std::optional<Transcript>& transcript,
                                   const CaseResult& result,
                                   const RunConfig& config) {
  EvalRecord r;
  r.case_id = c.id;
  r.solver_choice = result.solver_choice;
  r.correct = result.correct;
  r.error = result.error;
  r.error_message = result.error_message;

  if (config.mode == RunMode::consultation && transcript) {
    const Transcript& t = *transcript;
    r.has_dialogue = true;
    r.has_patient_scores = true;
    r.patient_scores = patient_coverage(
        t, c.facts, config.include_initial_request_in_patient_coverage);
    r.doctor_scores = doctor_coverage(t, c.facts);
    r.patient_avg_len = mean_words_per_turn(t.patient_turns());
    r.doctor_avg_len = mean_words_per_turn(t.doctor_turns());
    auto doctors = t.doctor_turns();
    r.turn_count = static_cast<int>(doctors.size());
    std::vector<std::string> queries;
    for (const auto& turn : doctors) queries.push_back(turn.text);
    r.diversity_rouge1 = query_diversity(queries, RougeVariant::rouge1);
    r.diversity_rouge2 = query_diversity(queries, RougeVariant::rouge2);
    r.diversity_rougeL = query_diversity(queries, RougeVariant::rougeL);
  } else if (config.mode == RunMode::lower_bound) {
    r.has_dialogue = false;
    r.has_patient_scores = true;
    Transcript p0_only;
    p0_only.turns.push_back(Turn::make(0, Role::patient, c.initial_request));
    r.patient_scores = patient_coverage(p0_only, c.facts, true);
  } else {
    r.has_dialogue = false;
    r.has_patient_scores = false;
  }
  return r;
}

// --- batch driving -----------------------------------------------------------------

struct BatchOutput {
  std::vector<std::optional<Transcript>> transcripts;  // corpus order
  std::vector<CaseResult> results;
  std::vector<EvalRecord> records;
  RunReport report;
};

namespace detail {

struct CheckpointEntry {
  std::optional<Transcript> transcript;
  std::optional<CaseResult> result;
};

inline std::map<std::string, CheckpointEntry> load_checkpoint(
    const std::string& path, const std::string& digest) {
  std::map<std::string, CheckpointEntry> done;
  if (!std::filesystem::exists(path)) return done;
  for (const auto& j : read_jsonl(path)) {
    if (j.at("config_digest").get<std::string>() != digest) continue;
    auto& entry = done[j.at("case_id").get<std::string>()];
    if (j.contains("transcript") && !j.at("transcript").is_null())
      entry.transcript = transcript_from_json(j.at("transcript"));
    if (j.contains("result") && !j.at("result").is_null())
      entry.result = case_result_from_json(j.at("result"));
  }
  return done;
}

}  // namespace detail

// Runs a whole corpus with bounded case-level parallelism. Completed cases
// are checkpointed (and skipped on resume); all final outputs are assembled
// in corpus order, independent of completion order.
inline BatchOutput run_batch(const std::vector<ConsultationCase>& corpus,
                             const RunConfig& config,
                             const SessionAgents& agents,
                             const std::string& run_dir = "") {
  if (config.max_turns < 1)
    throw std::invalid_argument("run_batch: max_turns < 1");
  if (config.parallelism < 1)
    throw std::invalid_argument("run_batch: parallelism < 1");
  for (const auto& policy : {config.doctor_policy, config.patient_policy,
                             config.solver_policy}) {
    auto violations = validate_policy(policy);
    if (!violations.empty())
      throw std::invalid_argument("invalid policy: " + violations.front());
  }

  const std::string digest = config_digest(config);
  std::string checkpoint_path;
  std::map<std::string, detail::CheckpointEntry> done;
  std::ofstream checkpoint_out;
  std::mutex checkpoint_mutex;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    checkpoint_path = run_dir + "/checkpoint.jsonl";
    done = detail::load_checkpoint(checkpoint_path, digest);
    checkpoint_out.open(checkpoint_path, std::ios::app);
  }

  auto checkpoint_write = [&](const json& j) {
    if (!checkpoint_out.is_open()) return;
    std::lock_guard<std::mutex> lock(checkpoint_mutex);
    checkpoint_out << j.dump() << "\n";
    checkpoint_out.flush();
  };

  BatchOutput out;
  out.transcripts.resize(corpus.size());
  out.results.resize(corpus.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= corpus.size()) return;
      const ConsultationCase& c = corpus[i];

      auto it = done.find(c.id);
      if (it != done.end() && it->second.result) {
        out.transcripts[i] = it->second.transcript;
        out.results[i] = *it->second.result;
        continue;
      }

      std::optional<Transcript> transcript;
      CaseResult result;
      if (config.mode == RunMode::consultation) {
        auto persist = [&](const Transcript& t) {
          checkpoint_write(json{{"case_id", c.id},
                                {"config_digest", digest},
                                {"transcript", to_json(t)},
                                {"result", nullptr}});
        };
        try {
          auto doctor = agents.make_doctor(c);
          auto patient = agents.make_patient(c);
          auto [t, r] = run_consultation(c, *doctor, *patient, *agents.solver,
                                         config, persist);
          transcript = std::move(t);
          result = std::move(r);
        } catch (const std::exception& e) {
          result.case_id = c.id;
          result.mode = config.mode;
          result.error = true;
          result.error_message = e.what();
        }
      } else {
        result = run_bound(c, *agents.solver, config);
      }
      json entry{{"case_id", c.id},
                 {"config_digest", digest},
                 {"result", to_json(result)}};
      entry["transcript"] = transcript ? to_json(*transcript) : json();
      checkpoint_write(entry);

      out.transcripts[i] = std::move(transcript);
      out.results[i] = std::move(result);
    }
  };

  std::vector<std::thread> threads;
  int n_threads = std::min<int>(config.parallelism,
                                static_cast<int>(corpus.size()) > 0
                                    ? static_cast<int>(corpus.size())
                                    : 1);
  for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
  for (auto& th : threads) th.join();

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.records.push_back(
        make_eval_record(corpus[i], out.transcripts[i], out.results[i], config));
  }
  if (!corpus.empty()) out.report = aggregate_report(out.records);

  if (!run_dir.empty()) {
    std::vector<Transcript> transcripts;
    for (const auto& t : out.transcripts)
      if (t) transcripts.push_back(*t);
    write_transcripts(transcripts, run_dir + "/transcripts.jsonl");
    std::vector<json> result_lines;
    for (const auto& r : out.results) result_lines.push_back(to_json(r));
    write_jsonl(result_lines, run_dir + "/results.jsonl");
    write_records(out.records, run_dir + "/records.jsonl");
    std::ofstream config_out(run_dir + "/config.json", std::ios::trunc);
    json config_json = run_config_to_json(config);
    config_json["config_digest"] = digest;
    config_out << config_json.dump(2) << "\n";
    std::ofstream report_json(run_dir + "/report.json", std::ios::trunc);
    report_json << report_to_json(out.report).dump(2) << "\n";
    std::ofstream report_txt(run_dir + "/report.txt", std::ios::trunc);
    report_txt << render_report_table(config.doctor_policy.id, out.report);
  }
  return out;
}

}  // namespace consult
