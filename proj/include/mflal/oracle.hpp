#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mflal/sequence.hpp"

namespace mflal {

enum class OracleKind { synthetic, external_command };

struct OracleSpec {
  std::size_t fidelity = 1;
  double cost = 1.0;
  OracleKind kind = OracleKind::synthetic;
  /// For external_command: shell command with a `{seq}` placeholder.
  std::string command;
  double timeout_secs = 60.0;
};

/// Hidden landscape and per-fidelity corruption of the synthetic suite.
struct SyntheticEnvConfig {
  std::uint64_t seed = 0;
  std::size_t seq_len = 10;
  std::size_t alphabet_size = 12;
  /// Optional explicit truth tables; generated from `seed` when empty.
  std::vector<double> unary;     // L x A
  std::vector<double> pairwise;  // (L-1) x A x A
  double unary_scale = 1.0;
  double pair_scale = 0.5;
  std::vector<double> rho{0.5, 0.75, 0.9, 1.0};
  std::vector<double> noise{1.0, 0.5, 0.2, 0.0};
  std::vector<double> cost{1.0, 10.0, 100.0, 1000.0};

  std::size_t fidelities() const { return rho.size(); }
  /// Throws ConfigError naming the broken constraint.
  void validate() const;
};

/// Additive unary + nearest-neighbour landscape; lower is better.
class Landscape {
 public:
  Landscape() = default;
  Landscape(std::size_t seq_len, std::size_t alphabet_size, std::vector<double> unary,
            std::vector<double> pairwise);
  /// Tables filled with N(0, scale^2) draws keyed by `seed`.
  static Landscape random(std::size_t seq_len, std::size_t alphabet_size, std::uint64_t seed,
                          double unary_scale, double pair_scale);

  double operator()(const Sequence& x) const;

  std::size_t seq_len() const { return seq_len_; }
  std::size_t alphabet_size() const { return alphabet_size_; }
  const std::vector<double>& unary() const { return unary_; }
  const std::vector<double>& pairwise() const { return pairwise_; }

 private:
  std::size_t seq_len_ = 0;
  std::size_t alphabet_size_ = 0;
  std::vector<double> unary_;
  std::vector<double> pairwise_;
};

struct QueryRecord {
  std::string sequence;
  std::size_t fidelity = 0;
  double score = 0.0;
  double cost = 0.0;
  std::int64_t step = 0;
  std::string phase;  // seed | active | final
  bool ok = true;
  std::string error;
  double timestamp = 0.0;  // seconds since epoch; excluded from reports
};

struct OracleResult {
  std::optional<double> score;
  double cost = 0.0;
  std::string error;
};

/// Thread-safe running total of charged cost per fidelity.
class CostLedger {
 public:
  explicit CostLedger(std::size_t fidelities = 0) : counts_(fidelities, 0), spent_(fidelities, 0.0) {}
  CostLedger(const CostLedger& other);
  CostLedger& operator=(const CostLedger& other);

  void charge(std::size_t fidelity, double cost);
  double total() const;
  std::int64_t count(std::size_t fidelity) const;
  double spent(std::size_t fidelity) const;
  std::size_t fidelities() const { return counts_.size(); }
  void restore(std::vector<std::int64_t> counts, std::vector<double> spent);

 private:
  mutable std::mutex mutex_;
  std::vector<std::int64_t> counts_;
  std::vector<double> spent_;
};

/// Runs `command_template` with `{seq}` replaced by the quoted sequence and
/// parses one float from its standard output. Returns the error text on
/// non-zero exit, unparseable output or timeout.
OracleResult run_external_command(const std::string& command_template, const std::string& sequence,
                                  double timeout_secs);

/// The fidelity ladder used by a run. Fidelity indices are 1-based and
/// refer to positions in `specs`; `source_fidelity` maps each back to the
/// synthetic environment's ladder.
class OracleSuite {
 public:
  OracleSuite(SyntheticEnvConfig env, std::vector<OracleSpec> specs,
              std::vector<std::size_t> source_fidelity, Alphabet alphabet);
  /// Full synthetic ladder.
  static OracleSuite synthetic(const SyntheticEnvConfig& env);

  std::size_t fidelities() const { return specs_.size(); }
  const OracleSpec& spec(std::size_t k) const;
  const Alphabet& alphabet() const { return alphabet_; }
  const Landscape& landscape() const { return landscape_; }

  /// Hidden ground truth g(x).
  double true_score(const Sequence& x) const;
  /// Seeded per-fidelity distortion d_k(x): a hash of (seed, k, x) mapped
  /// to a normal draw with the spread of g, for the environment's own
  /// fidelity index.
  double distortion(const Sequence& x, std::size_t env_fidelity) const;
  /// f_k(x) without charging, for analysis; noise uses `noise_index`.
  double synthetic_value(const Sequence& x, std::size_t k, std::uint64_t noise_index) const;

  /// Evaluates x at fidelity k, charges the ledger, and appends a record.
  OracleResult evaluate(const Sequence& x, std::size_t k, std::int64_t step, const std::string& phase);

  const CostLedger& ledger() const { return ledger_; }
  const std::vector<QueryRecord>& records() const { return records_; }
  void restore(std::vector<QueryRecord> records, CostLedger ledger);

 private:
  SyntheticEnvConfig env_;
  std::vector<OracleSpec> specs_;
  std::vector<std::size_t> source_;
  Alphabet alphabet_;
  Landscape landscape_;
  double truth_sd_ = 0.0;
  CostLedger ledger_;
  std::vector<QueryRecord> records_;
  std::unique_ptr<std::mutex> records_mutex_ = std::make_unique<std::mutex>();
};

}  // namespace mflal
