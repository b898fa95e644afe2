#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mflal/config.hpp"
#include "mflal/model.hpp"
#include "mflal/oracle.hpp"
#include "mflal/rng.hpp"
#include "mflal/sequence.hpp"

namespace mflal {

/// Labelled sequences per fidelity. Duplicates are rejected within one
/// fidelity and allowed across fidelities.
class MultiFidelityDataset {
 public:
  explicit MultiFidelityDataset(std::size_t fidelities = 0) : sets_(fidelities) {}

  std::size_t fidelities() const { return sets_.size(); }
  /// Returns false (and leaves the set untouched) for a duplicate.
  bool add(std::size_t k, const Sequence& x, double y);
  bool contains(std::size_t k, const Sequence& x) const;
  std::size_t size(std::size_t k) const;
  const std::vector<Sequence>& sequences(std::size_t k) const;
  const std::vector<double>& scores(std::size_t k) const;

 private:
  struct Level {
    std::vector<Sequence> xs;
    std::vector<double> ys;
    std::set<Sequence> index;
  };
  const Level& level(std::size_t k) const;
  std::vector<Level> sets_;
};

struct TrainSummary {
  std::size_t steps = 0;
  double initial_loss = 0.0;  // moving average over the first window
  double final_loss = 0.0;    // moving average over the last window
  std::size_t restarts = 0;
  double min_kl = 0.0;        // smallest batch KL seen
  double min_cross_entropy = 0.0;
};

/// Where a run is in the loop; saved with every checkpoint.
enum class RunStage : std::uint8_t { fresh = 0, looping = 1, done = 2 };

struct FinalDesign {
  Sequence sequence;
  double score = 0.0;       // top-oracle score
  bool ok = true;
};

/// Everything that changes while a run executes.
struct RunState {
  RunConfig config;
  Rng rng;
  MfModel model;
  MultiFidelityDataset data;
  std::size_t k = 1;          // current query fidelity
  std::int64_t step = 0;      // completed active-learning steps
  std::size_t since_retrain = 0;
  RunStage stage = RunStage::fresh;
  std::vector<std::int64_t> escalations;  // step at which k was left, per level
  std::vector<TrainSummary> trainings;
  std::vector<FinalDesign> finals;
  bool finals_flagged = false;
  std::size_t regenerations = 0;
  std::size_t mutations = 0;
};

using ConstraintFilter = std::function<bool(const Sequence&)>;

struct RunOptions {
  /// Stop, resumably, once this many active-learning steps are complete.
  std::optional<std::int64_t> stop_after_step;
  /// Checked between steps; set from a signal handler to stop resumably.
  const std::atomic<bool>* interrupt = nullptr;
  /// Called after seeding and after every completed step.
  std::function<void(const class ActiveLearner&)> on_step;
};

/// The query-synthesis loop: seed, retrain, query one design at the current
/// fidelity, escalate when the surrogate is confident, stop on budget, then
/// generate and score the final designs at the top fidelity.
class ActiveLearner {
 public:
  explicit ActiveLearner(const RunConfig& config);
  /// Continues from a restored state; `oracles` must hold its records.
  ActiveLearner(RunState state, OracleSuite oracles);

  const RunState& state() const { return state_; }
  const OracleSuite& oracles() const { return oracles_; }
  const RunConfig& config() const { return state_.config; }
  std::size_t fidelities() const { return oracles_.fidelities(); }

  /// Applies to queries and final designs; seed data is drawn unfiltered.
  /// Defaults to accept-all.
  void set_filter(ConstraintFilter filter) { filter_ = std::move(filter); }

  /// Cost of seeding; throws ConfigError when it does not fit the budget.
  double seeding_cost() const;
  void seed_initial_data();
  TrainSummary retrain();
  /// One query. Returns false without doing anything when the next query
  /// would exceed the budget.
  bool al_step();
  /// Seed + loop + inference, resuming from wherever the state is.
  /// Returns true when the run finished.
  bool run(const RunOptions& options = {});
  void inference();

  /// Budget spent on seeding and active queries.
  double spent() const;
  /// Per-position match rate of greedy decodes of the posterior mean
  /// against the fidelity-k training sequences.
  double reconstruction_accuracy(std::size_t k) const;

 private:
  struct Candidate {
    Sequence sequence;
    std::vector<double> latent;
    double acquisition = 0.0;
  };
  GenObjectiveConfig generation_config(double beta) const;
  Candidate choose_query();
  TrainSummary train_once(bool warm);
  void fit_standardizers();
  bool accepts(const Sequence& x) const { return !filter_ || filter_(x); }

  RunState state_;
  OracleSuite oracles_;
  Alphabet alphabet_;
  ConstraintFilter filter_;
};


}  // namespace mflal
