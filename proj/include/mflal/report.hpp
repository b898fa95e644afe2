#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mflal/controller.hpp"
#include "mflal/oracle.hpp"

namespace mflal {

/// Table-1 style statistics of the final designs. Lower scores are better.
struct FinalSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;                  // sample standard deviation; 0 for one design
  std::vector<double> top;          // up to three best scores, best first
  double similarity = 0.0;          // mean pairwise bigram Jaccard
  bool flagged = false;             // fewer designs than requested
};

/// Derives the summary from the final-phase records of a trace.
FinalSummary summarize_finals(const std::vector<QueryRecord>& trace, const Alphabet& alphabet,
                              std::size_t requested);

struct RunReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::string config_json;
  FinalSummary summary;
  std::vector<QueryRecord> trace;
  std::int64_t steps = 0;
  std::vector<std::int64_t> escalations;
  double spent = 0.0;  // seeding + active queries
};

RunReport make_report(const ActiveLearner& learner);

/// Writes summary.csv, trace.csv, trace.jsonl, series.csv and report.json
/// into `dir`. Timestamps are left out so that reruns are byte-identical.
void emit_report(const RunReport& report, const std::string& dir);
/// One summary row per report, for mode matrices.
void emit_summary(const std::vector<RunReport>& reports, const std::string& path);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mflal
