#pragma once

#include <algorithm>
#include <array>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "consult/model.hpp"
#include "consult/rouge.hpp"
#include "consult/tokenize.hpp"

namespace consult {

inline std::vector<std::string> concat_tokens(
    const std::vector<std::string>& texts) {
  std::vector<std::string> out;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) out.push_back(std::move(tok));
  }
  return out;
}

// ROUGE-1 of everything the patient said against the extracted fact values:
// recall = information exposed, precision = information density.
inline RougeScore patient_coverage(const Transcript& t,
                                   const std::vector<MedicalFact>& facts,
                                   bool include_initial_request = true) {
  std::vector<std::string> texts;
  for (const auto& turn : t.turns) {
    if (turn.role != Role::patient) continue;
    if (turn.index == 0 && !include_initial_request) continue;
    texts.push_back(turn.text);
  }
  std::vector<std::string> values;
  for (const auto& f : facts) values.push_back(f.value);
  return rouge_n(concat_tokens(texts), concat_tokens(values), 1);
}

// ROUGE-1 of everything the doctor said against the extracted fact keys:
// recall tracks hallucination (concluding without asking), precision tracks
// how much of the doctor's output is on-topic inquiry.
inline RougeScore doctor_coverage(const Transcript& t,
                                  const std::vector<MedicalFact>& facts) {
  std::vector<std::string> texts;
  for (const auto& turn : t.turns)
    if (turn.role == Role::doctor) texts.push_back(turn.text);
  std::vector<std::string> keys;
  for (const auto& f : facts) keys.push_back(f.key);
  return rouge_n(concat_tokens(texts), concat_tokens(keys), 1);
}

// Mean pairwise similarity of one doctor's queries within a consultation,
// over all pairs i != j. Lower = more diverse. Undefined below two queries.
inline std::optional<double> query_diversity(
    const std::vector<std::string>& queries, RougeVariant variant) {
  const std::size_t k = queries.size();
  if (k < 2) return std::nullopt;
  std::vector<std::vector<std::string>> token_lists;
  token_lists.reserve(k);
  for (const auto& q : queries) token_lists.push_back(tokenize(q));
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      sum += rouge(token_lists[i], token_lists[j], variant).f1;
    }
  }
  return sum / static_cast<double>(k * (k - 1));
}

inline double mean_words_per_turn(const std::vector<Turn>& turns) {
  if (turns.empty()) return 0.0;
  double total = 0;
  for (const auto& t : turns) total += t.word_count;
  return total / static_cast<double>(turns.size());
}

// --- aggregation -------------------------------------------------------------

struct RunReport {
  std::size_t n_cases = 0;
  std::size_t n_errors = 0;
  double accuracy = 0.0;  // errors count as incorrect
  std::optional<double> patient_recall, patient_precision, patient_f1,
      patient_len;
  std::optional<double> doctor_recall, doctor_precision, doctor_f1, doctor_len;
  std::optional<double> mean_turns;
  std::optional<double> diversity_rouge1, diversity_rouge2, diversity_rougeL;
};

inline RunReport aggregate_report(const std::vector<EvalRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("aggregate_report: no records");
  RunReport report;
  report.n_cases = records.size();

  std::size_t correct = 0;
  double p_r = 0, p_p = 0, p_f = 0, p_len = 0;
  double d_r = 0, d_p = 0, d_f = 0, d_len = 0, turns = 0;
  std::size_t n_patient = 0, n_dialogue = 0;
  double div1 = 0, div2 = 0, divL = 0;
  std::size_t n_div1 = 0, n_div2 = 0, n_divL = 0;

  for (const auto& r : records) {
    if (r.error) {
      report.n_errors++;
      continue;
    }
    if (r.correct) ++correct;
    if (r.has_patient_scores) {
      p_r += r.patient_scores.recall;
      p_p += r.patient_scores.precision;
      p_f += r.patient_scores.f1;
      ++n_patient;
    }
    if (r.has_dialogue) {
      p_len += r.patient_avg_len;
      d_r += r.doctor_scores.recall;
      d_p += r.doctor_scores.precision;
      d_f += r.doctor_scores.f1;
      d_len += r.doctor_avg_len;
      turns += r.turn_count;
      ++n_dialogue;
    }
    if (r.diversity_rouge1) { div1 += *r.diversity_rouge1; ++n_div1; }
    if (r.diversity_rouge2) { div2 += *r.diversity_rouge2; ++n_div2; }
    if (r.diversity_rougeL) { divL += *r.diversity_rougeL; ++n_divL; }
  }

  report.accuracy = static_cast<double>(correct) / records.size();
  if (n_patient > 0) {
    report.patient_recall = p_r / n_patient;
    report.patient_precision = p_p / n_patient;
    report.patient_f1 = p_f / n_patient;
  }
  if (n_dialogue > 0) {
    report.patient_len = p_len / n_dialogue;
    report.doctor_recall = d_r / n_dialogue;
    report.doctor_precision = d_p / n_dialogue;
    report.doctor_f1 = d_f / n_dialogue;
    report.doctor_len = d_len / n_dialogue;
    report.mean_turns = turns / n_dialogue;
  }
  if (n_div1 > 0) report.diversity_rouge1 = div1 / n_div1;
  if (n_div2 > 0) report.diversity_rouge2 = div2 / n_div2;
  if (n_divL > 0) report.diversity_rougeL = divL / n_divL;
  return report;
}

namespace detail {

inline std::string fmt_cell(std::optional<double> value, double scale) {
  if (!value) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << (*value * scale);
  return out.str();
}

}  // namespace detail

// Plain-text table: scores x100, lengths and turns raw.
inline std::string render_report_table(const std::string& label,
                                       const RunReport& r) {
  using detail::fmt_cell;
  std::ostringstream out;
  out << std::left;
  const char* header_fmt = "Case        | Patient                        | "
                           "Doctor                         | Turn   | Acc.\n";
  out << header_fmt;
  out << "            | Rec.    Pre.    F1      Len.   | Rec.    Pre.    "
         "F1      Len.   |        |\n";
  auto row = [&](const std::string& name) {
    std::ostringstream line;
    line << std::left << std::setw(12) << name << "| ";
    line << std::setw(8) << fmt_cell(r.patient_recall, 100.0)
         << std::setw(8) << fmt_cell(r.patient_precision, 100.0)
         << std::setw(8) << fmt_cell(r.patient_f1, 100.0)
         << std::setw(7) << fmt_cell(r.patient_len, 1.0) << "| ";
    line << std::setw(8) << fmt_cell(r.doctor_recall, 100.0)
         << std::setw(8) << fmt_cell(r.doctor_precision, 100.0)
         << std::setw(8) << fmt_cell(r.doctor_f1, 100.0)
         << std::setw(7) << fmt_cell(r.doctor_len, 1.0) << "| ";
    line << std::setw(7) << fmt_cell(r.mean_turns, 1.0) << "| ";
    line << fmt_cell(r.accuracy, 100.0);
    return line.str();
  };
  out << row(label) << "\n";
  out << "cases: " << r.n_cases << ", errors: " << r.n_errors << "\n";
  return out.str();
}

inline nlohmann::json report_to_json(const RunReport& r) {
  auto opt = [](std::optional<double> v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  return nlohmann::json{{"n_cases", r.n_cases},
                        {"n_errors", r.n_errors},
                        {"accuracy", r.accuracy},
                        {"patient_recall", opt(r.patient_recall)},
                        {"patient_precision", opt(r.patient_precision)},
                        {"patient_f1", opt(r.patient_f1)},
                        {"patient_len", opt(r.patient_len)},
                        {"doctor_recall", opt(r.doctor_recall)},
                        {"doctor_precision", opt(r.doctor_precision)},
                        {"doctor_f1", opt(r.doctor_f1)},
                        {"doctor_len", opt(r.doctor_len)},
                        {"mean_turns", opt(r.mean_turns)},
                        {"diversity_rouge1", opt(r.diversity_rouge1)},
                        {"diversity_rouge2", opt(r.diversity_rouge2)},
                        {"diversity_rougeL", opt(r.diversity_rougeL)}};
}

// --- complexity bins -----------------------------------------------------------

enum class ComplexityBin { short_bin, medium_bin, long_bin };

inline const char* bin_name(ComplexityBin b) {
  switch (b) {
    case ComplexityBin::short_bin: return "short";
    case ComplexityBin::medium_bin: return "medium";
    case ComplexityBin::long_bin: return "long";
  }
  return "?";
}

struct ComplexityBinResult {
  ComplexityBin bin = ComplexityBin::short_bin;
  double accuracy = 0.0;
  std::size_t n_cases = 0;
};

// Cases sorted by fact count (ties by id) and cut into three contiguous
// groups whose sizes differ by at most one; earlier groups take the
// remainder.
inline std::vector<ComplexityBinResult> complexity_bins(
    const std::vector<ConsultationCase>& corpus,
    const std::vector<EvalRecord>& records) {
  if (corpus.size() < 3)
    throw std::invalid_argument("complexity_bins: corpus smaller than 3");
  std::map<std::string, bool> correct_by_id;
  for (const auto& r : records)
    correct_by_id[r.case_id] = r.correct && !r.error;

  std::vector<const ConsultationCase*> sorted;
  for (const auto& c : corpus) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const ConsultationCase* a, const ConsultationCase* b) {
              if (a->facts.size() != b->facts.size())
                return a->facts.size() < b->facts.size();
              return a->id < b->id;
            });

  std::size_t n = sorted.size();
  std::size_t base = n / 3, rem = n % 3;
  std::array<std::size_t, 3> sizes = {base + (rem > 0 ? 1 : 0),
                                      base + (rem > 1 ? 1 : 0), base};
  std::vector<ComplexityBinResult> results;
  std::size_t offset = 0;
  const ComplexityBin bins[3] = {ComplexityBin::short_bin,
                                 ComplexityBin::medium_bin,
                                 ComplexityBin::long_bin};
  for (int b = 0; b < 3; ++b) {
    ComplexityBinResult res;
    res.bin = bins[b];
    res.n_cases = sizes[b];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < sizes[b]; ++i) {
      auto it = correct_by_id.find(sorted[offset + i]->id);
      if (it != correct_by_id.end() && it->second) ++correct;
    }
    res.accuracy =
        sizes[b] > 0 ? static_cast<double>(correct) / sizes[b] : 0.0;
    offset += sizes[b];
    results.push_back(res);
  }
  return results;
}

}  // namespace consult
