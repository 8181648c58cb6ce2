#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace consult {

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;

  static RougeScore from_rp(double recall, double precision) {
    RougeScore s;
    s.recall = recall;
    s.precision = precision;
    s.f1 = (recall + precision > 0.0)
               ? 2.0 * recall * precision / (recall + precision)
               : 0.0;
    return s;
  }
};

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + i,
                                    tokens.begin() + i + n)]++;
  }
  return counts;
}

}  // namespace detail

// ROUGE-N with clipped (multiset) n-gram matching. A side shorter than n
// contributes zero n-grams; an empty side yields a zero score.
inline RougeScore rouge_n(const std::vector<std::string>& candidate,
                          const std::vector<std::string>& reference, int n) {
  auto cand = detail::ngram_counts(candidate, n);
  auto ref = detail::ngram_counts(reference, n);
  long long cand_total = 0, ref_total = 0, matches = 0;
  for (const auto& [gram, count] : cand) cand_total += count;
  for (const auto& [gram, count] : ref) {
    ref_total += count;
    auto it = cand.find(gram);
    if (it != cand.end()) matches += std::min(count, it->second);
  }
  double recall = ref_total > 0 ? static_cast<double>(matches) / ref_total : 0.0;
  double precision =
      cand_total > 0 ? static_cast<double>(matches) / cand_total : 0.0;
  return RougeScore::from_rp(recall, precision);
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                       : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

// ROUGE-L: recall = LCS/|ref|, precision = LCS/|cand|.
inline RougeScore rouge_l(const std::vector<std::string>& candidate,
                          const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return RougeScore{};
  double lcs = static_cast<double>(lcs_length(candidate, reference));
  return RougeScore::from_rp(lcs / reference.size(), lcs / candidate.size());
}

enum class RougeVariant { rouge1, rouge2, rougeL };

inline RougeScore rouge(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference,
                        RougeVariant variant) {
  switch (variant) {
    case RougeVariant::rouge1:
      return rouge_n(candidate, reference, 1);
    case RougeVariant::rouge2:
      return rouge_n(candidate, reference, 2);
    case RougeVariant::rougeL:
      return rouge_l(candidate, reference);
  }
  return RougeScore{};
}

inline const char* variant_name(RougeVariant v) {
  switch (v) {
    case RougeVariant::rouge1: return "rouge1";
    case RougeVariant::rouge2: return "rouge2";
    case RougeVariant::rougeL: return "rougeL";
  }
  return "?";
}

}  // namespace consult
