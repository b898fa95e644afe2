#include "mflal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mflal/errors.hpp"

namespace mflal {
namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  return out;
}

const char* kSummaryHeader = "mode,seed,n_final,mean,sd,top1,top2,top3,similarity,flagged\n";

std::string summary_row(const RunReport& r) {
  const FinalSummary& s = r.summary;
  std::string row = r.mode + "," + std::to_string(r.seed) + "," + std::to_string(s.count) + "," + num(s.mean) +
                    "," + num(s.sd);
  for (std::size_t i = 0; i < 3; ++i) row += "," + (i < s.top.size() ? num(s.top[i]) : std::string());
  row += "," + num(s.similarity) + "," + (s.flagged ? "1" : "0") + "\n";
  return row;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

FinalSummary summarize_finals(const std::vector<QueryRecord>& trace, const Alphabet& alphabet,
                              std::size_t requested) {
  FinalSummary s;
  std::vector<double> scores;
  std::vector<Sequence> seqs;
  for (const QueryRecord& r : trace) {
    if (r.phase != "final") continue;
    seqs.push_back(parse_sequence(r.sequence, alphabet));
    if (r.ok) scores.push_back(r.score);
  }
  s.count = seqs.size();
  s.flagged = seqs.size() < requested;
  if (!scores.empty()) {
    s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    if (scores.size() > 1) {
      double ss = 0.0;
      for (double v : scores) ss += (v - s.mean) * (v - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
    }
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    sorted.resize(std::min<std::size_t>(3, sorted.size()));
    s.top = sorted;
  } else {
    s.mean = s.sd = std::numeric_limits<double>::quiet_NaN();
  }
  s.similarity = seqs.size() > 1 ? mean_pairwise_similarity(seqs) : 0.0;
  return s;
}

RunReport make_report(const ActiveLearner& learner) {
  const RunState& st = learner.state();
  RunReport r;
  r.mode = st.config.mode.name();
  r.seed = st.config.seed;
  r.config_json = config_to_json(st.config);
  r.trace = learner.oracles().records();
  r.summary = summarize_finals(r.trace, learner.oracles().alphabet(), st.config.active.n_final);
  r.steps = st.step;
  r.escalations = st.escalations;
  r.spent = learner.spent();
  return r;
}

void emit_summary(const std::vector<RunReport>& reports, const std::string& path) {
  std::ofstream out = open_out(path);
  out << kSummaryHeader;
  for (const RunReport& r : reports) out << summary_row(r);
}

void emit_report(const RunReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  emit_summary({report}, (root / "summary.csv").string());

  std::ofstream trace = open_out((root / "trace.csv").string());
  std::ofstream lines = open_out((root / "trace.jsonl").string());
  trace << "step,phase,fidelity,sequence,score,cost,ok,error\n";
  for (const QueryRecord& q : report.trace) {
    trace << q.step << ',' << q.phase << ',' << q.fidelity << ',' << csv_field(q.sequence) << ','
          << (q.ok ? num(q.score) : std::string()) << ',' << num(q.cost) << ',' << (q.ok ? 1 : 0) << ','
          << csv_field(q.error) << '\n';
    nlohmann::json j = {{"step", q.step}, {"phase", q.phase}, {"fidelity", q.fidelity}, {"sequence", q.sequence},
                        {"cost", q.cost}, {"ok", q.ok}};
    j["score"] = q.ok ? nlohmann::json(q.score) : nlohmann::json(nullptr);
    if (!q.error.empty()) j["error"] = q.error;
    lines << j.dump() << '\n';
  }

  std::ofstream series = open_out((root / "series.csv").string());
  series << "fidelity,step,score\n";
  std::size_t levels = 0;
  for (const QueryRecord& q : report.trace) levels = std::max(levels, q.fidelity);
  for (std::size_t k = 1; k <= levels; ++k) {
    for (const QueryRecord& q : report.trace) {
      if (q.phase == "active" && q.fidelity == k && q.ok) series << k << ',' << q.step << ',' << num(q.score) << '\n';
    }
  }

  nlohmann::json j;
  j["mode"] = report.mode;
  j["seed"] = report.seed;
  j["config"] = nlohmann::json::parse(report.config_json);
  j["steps"] = report.steps;
  j["escalation_steps"] = report.escalations;
  j["spent"] = report.spent;
  const FinalSummary& s = report.summary;
  // NaN (no scored finals) is written as null.
  j["summary"] = {{"n_final", s.count}, {"mean", s.mean}, {"sd", s.sd}, {"top", s.top},
                  {"similarity", s.similarity}, {"flagged", s.flagged}};
  nlohmann::json finals = nlohmann::json::array();
  for (const QueryRecord& q : report.trace) {
    if (q.phase != "final") continue;
    finals.push_back({{"sequence", q.sequence}, {"score", q.ok ? nlohmann::json(q.score) : nlohmann::json(nullptr)}, {"ok", q.ok}});
  }
  j["finals"] = finals;
  std::ofstream out = open_out((root / "report.json").string());
  out << j.dump(2) << '\n';
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: lengths differ");
  if (a.size() < 2) return 0.0;
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace mflal
