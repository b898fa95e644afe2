#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/tiny_config.hpp"
#include "mflal/controller.hpp"
#include "mflal/report.hpp"

using namespace mflal;
using mflal::testing::tiny_config;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

QueryRecord final_record(const std::string& seq, double score) {
  QueryRecord r;
  r.sequence = seq;
  r.fidelity = 4;
  r.score = score;
  r.phase = "final";
  return r;
}

}  // namespace

TEST_CASE("final summary statistics") {
  const Alphabet alphabet = Alphabet::standard(5);
  std::vector<QueryRecord> trace{final_record("ABCD", -1.0), final_record("BCDA", -3.0),
                                 final_record("CDAB", 2.0), final_record("DABC", -2.0)};
  QueryRecord active = final_record("AAAA", -10.0);
  active.phase = "active";
  trace.push_back(active);
  const FinalSummary s = summarize_finals(trace, alphabet, 4);
  CHECK(s.count == 4);
  CHECK(s.mean == doctest::Approx(-1.0));
  CHECK(s.sd == doctest::Approx(std::sqrt(14.0 / 3.0)));
  CHECK(s.top == std::vector<double>{-3.0, -2.0, -1.0});
  CHECK_FALSE(s.flagged);
  CHECK(summarize_finals(trace, alphabet, 15).flagged);
}

TEST_CASE("spearman uses average ranks") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ranks (1.5, 1.5, 3) against (1, 2, 3).
  CHECK(spearman({5, 5, 7}, {1, 2, 3}) == doctest::Approx(0.8660254037844386));
}

TEST_CASE("emitted report has one trace row per query and re-emits identically") {
  ActiveLearner learner(tiny_config());
  learner.run();
  const RunReport report = make_report(learner);
  const auto dir = std::filesystem::temp_directory_path() / "mflal_report_test";
  std::filesystem::remove_all(dir);
  emit_report(report, (dir / "a").string());
  emit_report(make_report(learner), (dir / "b").string());
  for (const char* name : {"summary.csv", "trace.csv", "trace.jsonl", "series.csv", "report.json"}) {
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  const std::size_t queries = learner.oracles().records().size();
  CHECK(line_count(slurp(dir / "a" / "trace.csv")) == queries + 1);
  CHECK(line_count(slurp(dir / "a" / "trace.jsonl")) == queries);
  CHECK(report.summary.top.size() == std::min<std::size_t>(3, report.summary.count));
  CHECK(std::is_sorted(report.summary.top.begin(), report.summary.top.end()));
  CHECK(report.spent <= learner.config().max_cost);
  std::filesystem::remove_all(dir);
}
