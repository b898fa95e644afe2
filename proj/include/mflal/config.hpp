#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mflal/generation.hpp"
#include "mflal/model.hpp"
#include "mflal/oracle.hpp"

namespace mflal {

struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_steps = 3000;
  /// Early stopping: evaluate a moving average of the last `window` step
  /// losses every `eval_every` steps; stop after `patience` evaluations
  /// without a relative improvement of `min_improvement`.
  std::size_t window = 100;
  std::size_t eval_every = 10;
  std::size_t patience = 20;
  double min_improvement = 0.01;
  double gp_weight = 1.0;
  /// Each step trains fidelity k with probability proportional to
  /// N_k^sampling_power over non-empty fidelities; 1 follows the data
  /// sizes, 0 is uniform.
  double sampling_power = 1.0;
  /// Retrain after every n-th query.
  std::size_t retrain_every = 1;
  /// Continue from the current parameters instead of re-initializing;
  /// warm retrains are capped at `warm_max_steps`.
  bool warm_start = false;
  std::size_t warm_max_steps = 300;
};

struct ActiveLearningConfig {
  std::size_t n_low = 2000;  // seed size at the lowest fidelity
  std::size_t n_high = 5;    // seed size at every other fidelity
  /// Escalation thresholds on standardized variance, one per fidelity below the top.
  std::vector<double> gamma;
  std::size_t max_regenerate = 5;
  std::size_t n_final = 15;
  std::size_t final_attempts = 50;
};

enum class RunMode { full, no_likelihood, single_fidelity, drop_fidelity };

struct ModeSpec {
  RunMode mode = RunMode::full;
  std::size_t dropped = 0;  // environment fidelity removed by drop_fidelity

  static ModeSpec parse(const std::string& name);
  std::string name() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModeSpec mode;
  SyntheticEnvConfig environment;
  bool environment_seed_set = false;
  /// Optional per-fidelity external programs; empty means synthetic.
  std::vector<OracleSpec> external;
  ModelConfig model;
  GenObjectiveConfig generation;
  TrainingConfig training;
  ActiveLearningConfig active;
  double max_cost = 20000.0;

  /// Fidelity count of the model after the mode is applied.
  std::size_t model_fidelities() const;
  /// Environment fidelities used by the run, lowest first.
  std::vector<std::size_t> active_fidelities() const;
};

/// Default desk-scale configuration.
RunConfig default_config();

/// Parses a JSON document; unknown keys and violated constraints raise
/// ConfigError naming the field.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
/// Fully resolved configuration as canonical JSON.
std::string config_to_json(const RunConfig& config);
/// Re-checks every constraint after programmatic edits.
void validate_config(const RunConfig& config);

/// Command-line overrides. A new seed also moves the environment seed
/// unless the config pinned it. The result is re-validated.
RunConfig with_overrides(RunConfig config, std::optional<std::uint64_t> seed, std::optional<std::string> mode,
                         std::optional<double> max_cost);

/// Builds the oracle ladder for the configured mode.
OracleSuite make_oracles(const RunConfig& config);

}  // namespace mflal
