#pragma once

#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "consult/metrics.hpp"
#include "consult/model.hpp"
#include "consult/orchestrator.hpp"

namespace consult {

struct TurnCurvePoint {
  double percentage = 0.0;
  double accuracy = 0.0;
  double patient_f1 = 0.0;
  double doctor_f1 = 0.0;
};

// Re-scores every transcript prefix at each percentage of rounds finished:
// coverage is recomputed on the truncated transcript and the task re-solved
// on the truncated context.
inline std::vector<TurnCurvePoint> turn_curve(
    const std::vector<ConsultationCase>& cases,
    const std::vector<std::optional<Transcript>>& transcripts,
    const std::vector<double>& percentages, SolverAgent& solver,
    const RunConfig& config) {
  if (cases.size() != transcripts.size())
    throw std::invalid_argument("turn_curve: cases/transcripts size mismatch");
  for (std::size_t i = 0; i < percentages.size(); ++i) {
    if (!(percentages[i] > 0.0 && percentages[i] <= 1.0))
      throw std::invalid_argument("turn_curve: percentage outside (0, 1]");
    if (i > 0 && percentages[i] <= percentages[i - 1])
      throw std::invalid_argument("turn_curve: percentages not ascending");
  }

  std::vector<TurnCurvePoint> curve;
  for (double p : percentages) {
    TurnCurvePoint point;
    point.percentage = p;
    double acc = 0, pf1 = 0, df1 = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (!transcripts[i]) continue;
      ++n;
      Transcript truncated = truncate_transcript(*transcripts[i], p);
      pf1 += patient_coverage(
                 truncated, cases[i].facts,
                 config.include_initial_request_in_patient_coverage)
                 .f1;
      df1 += doctor_coverage(truncated, cases[i].facts).f1;
      std::string context = render_solver_prompt_context(
          render_solver_context(truncated, config.include_final_doctor_turn),
          cases[i].task);
      auto choice = solver.solve(cases[i], context);
      if (choice && *choice == cases[i].task.answer_label) acc += 1.0;
    }
    if (n > 0) {
      point.accuracy = acc / n;
      point.patient_f1 = pf1 / n;
      point.doctor_f1 = df1 / n;
    }
    curve.push_back(point);
  }
  return curve;
}

inline json to_json(const TurnCurvePoint& p) {
  return json{{"percentage", p.percentage},
              {"accuracy", p.accuracy},
              {"patient_f1", p.patient_f1},
              {"doctor_f1", p.doctor_f1}};
}

// Table 3 shape: one row per doctor policy, one column per ROUGE variant.
inline std::string render_diversity_table(
    const std::vector<std::pair<std::string, RunReport>>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "Model" << std::setw(10) << "ROUGE-1"
      << std::setw(10) << "ROUGE-2" << std::setw(10) << "ROUGE-L" << "\n";
  for (const auto& [label, report] : rows) {
    out << std::setw(16) << label
        << std::setw(10) << detail::fmt_cell(report.diversity_rouge1, 100.0)
        << std::setw(10) << detail::fmt_cell(report.diversity_rouge2, 100.0)
        << std::setw(10) << detail::fmt_cell(report.diversity_rougeL, 100.0)
        << "\n";
  }
  return out.str();
}

// Oracle-order comparison: one row per consultation order.
inline std::string render_order_comparison(
    const std::vector<std::pair<std::string, RunReport>>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Order" << std::setw(10) << "Acc."
      << std::setw(10) << "Turn" << "\n";
  for (const auto& [order, report] : rows) {
    out << std::setw(12) << order
        << std::setw(10) << detail::fmt_cell(report.accuracy, 100.0)
        << std::setw(10) << detail::fmt_cell(report.mean_turns, 1.0) << "\n";
  }
  return out.str();
}

}  // namespace consult
