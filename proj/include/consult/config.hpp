#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "consult/agents.hpp"
#include "consult/gateway.hpp"
#include "consult/orchestrator.hpp"

namespace consult {

struct HarnessConfig {
  std::string corpus_path;
  std::string run_dir = "runs/run";
  GatewayConfig gateway;
  AgentPolicy doctor;
  AgentPolicy patient;
  AgentPolicy solver;
  int max_turns = 10;
  int parallelism = 1;
  RunMode mode = RunMode::consultation;
  bool replay = false;
  bool offline = false;
  bool dedup = false;
  bool include_final_doctor_turn = true;
  bool include_initial_request_in_patient_coverage = true;
  std::uint64_t seed = 0;
  std::vector<double> percentages = {0.2, 0.4, 0.6, 0.8, 1.0};
  // LLM-backed dataset building.
  std::optional<ModelRef> extractor_model;
  std::optional<ModelRef> generator_model;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

namespace detail {

inline ModelRef parse_model_ref(const json& j, double default_temperature) {
  ModelRef ref;
  ref.model = j.at("model").get<std::string>();
  ref.params.temperature = j.value("temperature", default_temperature);
  ref.params.max_tokens = j.value("max_tokens", 512);
  if (j.contains("sampling_seed"))
    ref.params.seed = j.at("sampling_seed").get<int>();
  return ref;
}

inline AgentPolicy parse_policy(const json& j, AgentRole role) {
  AgentPolicy p;
  p.role = role;
  p.id = j.at("id").get<std::string>();
  std::string kind = j.value("kind", "scripted");
  p.kind = kind == "llm" ? AgentKind::llm : AgentKind::scripted;
  if (p.kind == AgentKind::llm) {
    // Non-paper defaults: temperature 0 for the solver, 0.7 for dialogue.
    p.model_ref =
        parse_model_ref(j, role == AgentRole::solver ? 0.0 : 0.7);
    p.prompt_file = j.value("prompt_file", std::string{});
  }
  if (j.contains("prompt_variant")) {
    std::string v = j.at("prompt_variant").get<std::string>();
    if (v == "long") {
      p.prompt_variant = DoctorPromptVariant::long_form;
    } else if (v == "short") {
      p.prompt_variant = DoctorPromptVariant::short_form;
    } else {
      throw std::runtime_error("unknown prompt_variant: " + v);
    }
  }
  if (j.contains("order")) {
    std::string o = j.at("order").get<std::string>();
    if (o == "direct") {
      p.order = OracleOrder::direct;
    } else if (o == "random") {
      p.order = OracleOrder::random_order;
    } else if (o == "reverse") {
      p.order = OracleOrder::reverse;
    } else {
      throw std::runtime_error("unknown oracle order: " + o);
    }
  }
  p.seed = j.value("seed", 0ull);
  return p;
}

}  // namespace detail

inline HarnessConfig load_harness_config(const std::string& path) {
  json j = json::parse(read_text_file(path));
  HarnessConfig c;
  c.corpus_path = j.value("corpus", std::string{});
  c.run_dir = j.value("run_dir", c.run_dir);
  if (j.contains("gateway")) {
    const json& g = j.at("gateway");
    c.gateway.base_url = g.value("base_url", std::string{});
    c.gateway.api_key_env = g.value("api_key_env", c.gateway.api_key_env);
    c.gateway.chat_path = g.value("chat_path", c.gateway.chat_path);
    c.gateway.max_retries = g.value("retries", c.gateway.max_retries);
    c.gateway.backoff_ms = g.value("backoff_ms", c.gateway.backoff_ms);
    c.gateway.requests_per_minute =
        g.value("rate_limit_rpm", c.gateway.requests_per_minute);
    c.gateway.cache_dir = g.value("cache_dir", std::string{});
  }
  c.doctor = detail::parse_policy(j.at("doctor"), AgentRole::doctor);
  c.patient = detail::parse_policy(j.at("patient"), AgentRole::patient);
  c.solver = detail::parse_policy(j.at("solver"), AgentRole::solver);
  if (j.contains("run")) {
    const json& r = j.at("run");
    c.max_turns = r.value("max_turns", c.max_turns);
    c.parallelism = r.value("parallelism", c.parallelism);
    c.replay = r.value("replay", c.replay);
    c.offline = r.value("offline", c.offline);
    c.seed = r.value("seed", c.seed);
    if (r.contains("mode"))
      c.mode = run_mode_from_name(r.at("mode").get<std::string>());
    c.include_final_doctor_turn =
        r.value("include_final_doctor_turn", c.include_final_doctor_turn);
    c.include_initial_request_in_patient_coverage =
        r.value("include_initial_request_in_patient_coverage",
                c.include_initial_request_in_patient_coverage);
  }
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    if (a.contains("percentages"))
      c.percentages = a.at("percentages").get<std::vector<double>>();
  }
  if (j.contains("builder")) {
    const json& b = j.at("builder");
    if (b.contains("extractor"))
      c.extractor_model = detail::parse_model_ref(b.at("extractor"), 0.0);
    if (b.contains("generator"))
      c.generator_model = detail::parse_model_ref(b.at("generator"), 0.7);
  }
  return c;
}

inline std::vector<std::string> validate_harness_config(
    const HarnessConfig& c) {
  std::vector<std::string> violations;
  for (const auto* p : {&c.doctor, &c.patient, &c.solver}) {
    for (auto& v : validate_policy(*p)) violations.push_back(v);
    if (p->kind == AgentKind::llm && !p->prompt_file.empty() &&
        !std::filesystem::exists(p->prompt_file))
      violations.push_back("prompt file missing: " + p->prompt_file);
  }
  for (std::size_t i = 0; i < c.percentages.size(); ++i) {
    if (!(c.percentages[i] > 0.0 && c.percentages[i] <= 1.0))
      violations.push_back("percentage outside (0, 1]");
    if (i > 0 && c.percentages[i] <= c.percentages[i - 1])
      violations.push_back("percentages not ascending");
  }
  if (c.max_turns < 1) violations.push_back("max_turns < 1");
  if (c.parallelism < 1) violations.push_back("parallelism < 1");
  if (c.offline) {
    for (const auto* p : {&c.doctor, &c.patient, &c.solver}) {
      if (p->kind == AgentKind::llm)
        violations.push_back("offline run with llm policy: " + p->id);
    }
  }
  return violations;
}

inline RunConfig make_run_config(const HarnessConfig& c) {
  RunConfig rc;
  rc.doctor_policy = c.doctor;
  rc.patient_policy = c.patient;
  rc.solver_policy = c.solver;
  rc.max_turns = c.max_turns;
  rc.parallelism = c.parallelism;
  rc.mode = c.mode;
  rc.replay = c.replay;
  rc.include_final_doctor_turn = c.include_final_doctor_turn;
  rc.include_initial_request_in_patient_coverage =
      c.include_initial_request_in_patient_coverage;
  return rc;
}

// Builds per-case agent factories. `gateway` may be null for fully scripted
// configurations (offline mode guarantees it).
inline SessionAgents make_session_agents(const HarnessConfig& c,
                                         Gateway* gateway) {
  SessionAgents agents;
  const AgentPolicy doctor = c.doctor;
  const AgentPolicy patient = c.patient;
  const AgentPolicy solver = c.solver;

  if (doctor.kind == AgentKind::scripted) {
    agents.make_doctor = [doctor](const ConsultationCase& cs) {
      return std::make_unique<OracleDoctor>(cs.facts, *doctor.order,
                                            doctor.seed);
    };
  } else {
    if (!gateway) throw std::runtime_error("llm doctor requires a gateway");
    std::string prompt = read_text_file(doctor.prompt_file);
    int budget = doctor.question_budget();
    agents.make_doctor = [gateway, doctor, prompt,
                          budget](const ConsultationCase&) {
      return std::make_unique<LlmDoctor>(*gateway, *doctor.model_ref, prompt,
                                         budget);
    };
  }

  if (patient.kind == AgentKind::scripted) {
    agents.make_patient = [](const ConsultationCase& cs) {
      return std::make_unique<ScriptedPatient>(cs.facts);
    };
  } else {
    if (!gateway) throw std::runtime_error("llm patient requires a gateway");
    agents.make_patient = [gateway, patient](const ConsultationCase& cs) {
      return std::make_unique<LlmPatient>(*gateway, *patient.model_ref,
                                          cs.medical_info, cs.facts);
    };
  }

  if (solver.kind == AgentKind::scripted) {
    agents.solver = std::make_shared<MockSolver>();
  } else {
    if (!gateway) throw std::runtime_error("llm solver requires a gateway");
    agents.solver = std::make_shared<LlmSolver>(
        *gateway, *solver.model_ref, read_text_file(solver.prompt_file));
  }
  return agents;
}

}  // namespace consult
