#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "consult/analysis.hpp"
#include "consult/config.hpp"
#include "consult/dataset.hpp"
#include "consult/jsonio.hpp"
#include "consult/orchestrator.hpp"

namespace consult {

struct BuildFailure {
  std::string id;
  std::string reason;
};

struct BuildOutcome {
  std::vector<ConsultationCase> cases;
  std::vector<BuildFailure> failures;
  CorpusStats stats;
  std::vector<KeyFrequency> top_keys;
};

// Reformulation pipeline: split stems, extract facts, generate initial
// requests, validate. Failures are collected per case, not fatal.
inline BuildOutcome build_corpus(const std::vector<RawMCQ>& raw,
                                 const std::string& source,
                                 ChatAgent& extractor, ChatAgent& generator) {
  BuildOutcome outcome;
  for (const auto& mcq : raw) {
    try {
      ConsultationCase c;
      c.id = mcq.id;
      c.source = source;
      auto [info, task] = split_mcq(mcq);
      c.medical_info = info;
      c.task = task;
      c.facts = extract_facts(c.medical_info, extractor);
      c.initial_request =
          generate_initial_request(c.medical_info, c.facts, generator).text;
      auto violations = validate_case(c, /*require_facts=*/true);
      if (!violations.empty())
        throw std::runtime_error("validation failed: " + violations.front());
      outcome.cases.push_back(std::move(c));
    } catch (const std::exception& e) {
      outcome.failures.push_back({mcq.id, e.what()});
    }
  }
  outcome.stats = compute_corpus_stats(outcome.cases);
  outcome.top_keys = top_key_frequencies(outcome.cases, 20);
  return outcome;
}

inline std::string render_stats(const CorpusStats& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "# of instances                        " << s.n_instances << "\n";
  out << "# of options per question             " << s.mean_options_per_question
      << "\n";
  out << "# of words per medical information    "
      << s.mean_words_per_medical_info << "\n";
  out << "# of words per initial request        "
      << s.mean_words_per_initial_request << "\n";
  out << "# of items per medical information    "
      << s.mean_items_per_medical_info << "\n";
  return out.str();
}

inline json stats_to_json(const CorpusStats& s) {
  return json{{"n_instances", s.n_instances},
              {"mean_options_per_question", s.mean_options_per_question},
              {"mean_words_per_medical_info", s.mean_words_per_medical_info},
              {"mean_words_per_initial_request",
               s.mean_words_per_initial_request},
              {"mean_items_per_medical_info", s.mean_items_per_medical_info}};
}

struct BuildOptions {
  std::string raw_path;
  std::string out_corpus;
  std::string source = "raw";
  bool dedup = false;
  bool offline = true;
  std::optional<HarnessConfig> config;  // for LLM-backed extraction
};

inline int cmd_build(const BuildOptions& opts, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  auto raw = read_raw_mcqs(opts.raw_path);
  if (opts.dedup) raw = dedup_mcqs(raw);

  std::unique_ptr<ChatAgent> extractor;
  std::unique_ptr<ChatAgent> generator;
  std::unique_ptr<Gateway> gateway;
  if (opts.offline) {
    extractor = std::make_unique<ScriptedExtractorAgent>();
    generator = std::make_unique<ScriptedRequestAgent>();
  } else {
    if (!opts.config || !opts.config->extractor_model)
      throw std::runtime_error(
          "LLM build requires a config with builder.extractor");
    gateway = std::make_unique<Gateway>(opts.config->gateway);
    extractor = std::make_unique<LlmChatAgent>(
        *gateway, *opts.config->extractor_model);
    generator = std::make_unique<LlmChatAgent>(
        *gateway, opts.config->generator_model
                      ? *opts.config->generator_model
                      : *opts.config->extractor_model);
  }

  auto outcome = build_corpus(raw, opts.source, *extractor, *generator);
  write_corpus(outcome.cases, opts.out_corpus);
  {
    std::ofstream stats_out(opts.out_corpus + ".stats.json", std::ios::trunc);
    json j = stats_to_json(outcome.stats);
    json keys = json::array();
    for (const auto& k : outcome.top_keys)
      keys.push_back({{"key", k.key}, {"count", k.count}});
    j["top_keys"] = keys;
    stats_out << j.dump(2) << "\n";
  }
  out << "built " << outcome.cases.size() << " cases -> " << opts.out_corpus
      << "\n\n";
  out << render_stats(outcome.stats) << "\n";
  out << "Top keys:\n";
  for (const auto& k : outcome.top_keys)
    out << "  " << k.key << "  " << k.count << "\n";
  if (!outcome.failures.empty()) {
    err << outcome.failures.size() << " case(s) failed:\n";
    for (const auto& f : outcome.failures)
      err << "  " << f.id << ": " << f.reason << "\n";
    return 1;
  }
  return 0;
}

inline int cmd_run(const HarnessConfig& config, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  auto violations = validate_harness_config(config);
  if (!violations.empty()) {
    for (const auto& v : violations) err << "config error: " << v << "\n";
    return 2;
  }
  auto corpus = read_corpus(config.corpus_path);

  std::unique_ptr<Gateway> gateway;
  bool needs_gateway = config.doctor.kind == AgentKind::llm ||
                       config.patient.kind == AgentKind::llm ||
                       config.solver.kind == AgentKind::llm;
  if (needs_gateway) {
    GatewayConfig gw = config.gateway;
    gw.replay = config.replay;
    gateway = std::make_unique<Gateway>(gw);
  }
  SessionAgents agents = make_session_agents(config, gateway.get());
  RunConfig rc = make_run_config(config);
  BatchOutput batch = run_batch(corpus, rc, agents, config.run_dir);

  out << render_report_table(config.doctor.id, batch.report);
  bool any_error = false;
  for (const auto& r : batch.results) {
    if (r.error) {
      any_error = true;
      err << "case " << r.case_id << " failed: " << r.error_message << "\n";
    }
  }
  return any_error ? 1 : 0;
}

struct AnalyzeOptions {
  std::string corpus_path;
  std::vector<std::string> run_dirs;
  std::vector<double> percentages = {0.2, 0.4, 0.6, 0.8, 1.0};
  std::string out_dir;  // defaults to the first run dir
};

inline int cmd_analyze(const AnalyzeOptions& opts,
                       std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  if (opts.run_dirs.empty()) {
    err << "analyze: no run directories given\n";
    return 2;
  }
  auto corpus = read_corpus(opts.corpus_path);
  std::map<std::string, std::size_t> case_index;
  for (std::size_t i = 0; i < corpus.size(); ++i) case_index[corpus[i].id] = i;

  std::string out_dir = opts.out_dir.empty() ? opts.run_dirs[0] : opts.out_dir;
  std::filesystem::create_directories(out_dir);

  MockSolver solver;  // offline re-solving for curve points
  std::vector<std::pair<std::string, RunReport>> diversity_rows;
  std::vector<std::pair<std::string, RunReport>> order_rows;

  for (const auto& run_dir : opts.run_dirs) {
    std::string transcripts_path = run_dir + "/transcripts.jsonl";
    if (!std::filesystem::exists(transcripts_path)) {
      err << "analyze: missing transcripts in " << run_dir << "\n";
      return 1;
    }
    json run_config = json::parse(read_text_file(run_dir + "/config.json"));
    std::string doctor_id =
        run_config.at("doctor_policy").at("id").get<std::string>();

    auto records = read_records(run_dir + "/records.jsonl");
    RunReport report = aggregate_report(records);
    diversity_rows.push_back({doctor_id, report});
    if (run_config.at("doctor_policy").contains("order")) {
      order_rows.push_back(
          {run_config.at("doctor_policy").at("order").get<std::string>(),
           report});
    }

    // Curve over transcript prefixes.
    auto transcripts = read_transcripts(transcripts_path);
    std::vector<std::optional<Transcript>> aligned(corpus.size());
    for (auto& t : transcripts) {
      auto it = case_index.find(t.case_id);
      if (it != case_index.end()) aligned[it->second] = std::move(t);
    }
    RunConfig rc;
    rc.include_final_doctor_turn =
        run_config.value("include_final_doctor_turn", true);
    rc.include_initial_request_in_patient_coverage = run_config.value(
        "include_initial_request_in_patient_coverage", true);
    auto curve = turn_curve(corpus, aligned, opts.percentages, solver, rc);
    std::vector<json> curve_lines;
    for (const auto& p : curve) curve_lines.push_back(to_json(p));
    write_jsonl(curve_lines, run_dir + "/curve.jsonl");
    out << run_dir << ": " << curve.size() << " curve points\n";

    // Complexity bins.
    auto bins = complexity_bins(corpus, records);
    std::ofstream bins_out(run_dir + "/bins.txt", std::ios::trunc);
    for (const auto& b : bins) {
      bins_out << bin_name(b.bin) << "  n=" << b.n_cases << "  acc="
               << detail::fmt_cell(b.accuracy, 100.0) << "\n";
    }
  }

  {
    std::ofstream div_out(out_dir + "/diversity.txt", std::ios::trunc);
    std::string table = render_diversity_table(diversity_rows);
    div_out << table;
    out << "\n" << table;
  }
  if (order_rows.size() >= 2) {
    std::ofstream ord_out(out_dir + "/orders.txt", std::ios::trunc);
    std::string table = render_order_comparison(order_rows);
    ord_out << table;
    out << "\n" << table;
  }
  return 0;
}

inline int cmd_report(const std::string& run_dir,
                      std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  std::string records_path = run_dir + "/records.jsonl";
  if (!std::filesystem::exists(records_path)) {
    err << "report: missing records in " << run_dir << "\n";
    return 1;
  }
  std::string label = "run";
  std::string config_path = run_dir + "/config.json";
  if (std::filesystem::exists(config_path)) {
    json run_config = json::parse(read_text_file(config_path));
    label = run_config.at("doctor_policy").at("id").get<std::string>();
  }
  RunReport report = aggregate_report(read_records(records_path));
  out << render_report_table(label, report);
  return 0;
}

}  // namespace consult
