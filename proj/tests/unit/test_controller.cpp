#include <doctest.h>

#include <cmath>
#include <set>

#include "../support/tiny_config.hpp"
#include "mflal/controller.hpp"
#include "mflal/errors.hpp"

using namespace mflal;
using mflal::testing::tiny_config;

TEST_CASE("dataset deduplicates within a fidelity only") {
  MultiFidelityDataset d(2);
  const Sequence x{{1, 2, 3}};
  CHECK(d.add(1, x, 0.5));
  CHECK_FALSE(d.add(1, x, 0.7));
  CHECK(d.add(2, x, 0.1));
  CHECK(d.size(1) == 1);
  CHECK(d.scores(1)[0] == 0.5);
  CHECK(d.contains(2, x));
  CHECK_THROWS_AS(d.add(1, Sequence{{3, 2, 1}}, std::nan("")), NumericalError);
  CHECK_THROWS(d.size(3));
}

TEST_CASE("seeding cost follows the configured counts") {
  CHECK(ActiveLearner(default_config()).seeding_cost() == 7550.0);
  ActiveLearner learner(tiny_config());
  CHECK(learner.seeding_cost() == 60.0 + 2 * (10.0 + 100.0 + 400.0));
  learner.seed_initial_data();
  CHECK(learner.state().data.size(1) == 60);
  for (std::size_t k = 2; k <= 4; ++k) CHECK(learner.state().data.size(k) == 2);
  CHECK(learner.spent() == 1080.0);
  CHECK(learner.oracles().ledger().total() == 1080.0);
}

TEST_CASE("seeding that does not fit the budget is a config error") {
  RunConfig c = tiny_config();
  c.max_cost = 500.0;
  CHECK_THROWS_AS(ActiveLearner(c).seeding_cost(), ConfigError);
}

TEST_CASE("retraining lowers the loss and keeps KL and cross-entropy non-negative") {
  ActiveLearner learner(tiny_config());
  learner.seed_initial_data();
  const TrainSummary s = learner.retrain();
  CHECK(s.steps > 0);
  CHECK(s.final_loss < s.initial_loss);
  CHECK(s.min_kl >= 0.0);
  CHECK(s.min_cross_entropy >= 0.0);
}

TEST_CASE("infinite thresholds escalate after every query") {
  ActiveLearner learner(tiny_config(R"(, "gamma": ["inf", "inf", "inf"])"));
  learner.seed_initial_data();
  learner.retrain();
  for (std::size_t k = 1; k <= 3; ++k) {
    CHECK(learner.state().k == k);
    REQUIRE(learner.al_step());
    CHECK(learner.state().k == k + 1);
  }
  CHECK(learner.state().escalations == std::vector<std::int64_t>{1, 2, 3});
  // 1080 + 1 + 10 + 100 leaves less than one top-fidelity query.
  CHECK_FALSE(learner.al_step());
  CHECK(learner.state().step == 3);
}

TEST_CASE("zero thresholds never escalate") {
  RunConfig c = tiny_config(R"(, "gamma": [0, 0, 0])");
  c.training.retrain_every = 5;
  ActiveLearner learner(c);
  learner.seed_initial_data();
  learner.retrain();
  for (int i = 0; i < 10; ++i) REQUIRE(learner.al_step());
  CHECK(learner.state().k == 1);
  CHECK(learner.state().data.size(1) == 70);
}

TEST_CASE("empty higher fidelities are skipped in training") {
  RunConfig c = tiny_config(R"(, "n_high": 0)");
  ActiveLearner learner(c);
  learner.seed_initial_data();
  CHECK(learner.state().data.size(3) == 0);
  const TrainSummary s = learner.retrain();
  CHECK(std::isfinite(s.final_loss));
}

TEST_CASE("a full run keeps the loop invariants") {
  ActiveLearner learner(tiny_config());
  CHECK(learner.run());
  const auto& records = learner.oracles().records();
  std::size_t last_k = 0;
  double charged = 0.0;
  std::set<std::string> finals;
  for (const QueryRecord& r : records) {
    charged += r.cost;
    if (r.phase == "active") {
      CHECK(r.fidelity >= last_k);
      last_k = r.fidelity;
    }
    if (r.phase == "final") {
      CHECK(r.fidelity == 4);
      finals.insert(r.sequence);
    }
  }
  CHECK(charged == learner.oracles().ledger().total());
  CHECK(learner.spent() <= learner.config().max_cost);
  CHECK(finals.size() == learner.state().finals.size());
  CHECK(learner.state().stage == RunStage::done);
  // Resuming a finished run does nothing.
  CHECK(learner.run());
  CHECK(learner.oracles().records().size() == records.size());
}

TEST_CASE("runs are deterministic given the seed") {
  ActiveLearner a(tiny_config()), b(tiny_config());
  a.run();
  b.run();
  const auto& ra = a.oracles().records();
  const auto& rb = b.oracles().records();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].sequence == rb[i].sequence);
    CHECK(ra[i].score == rb[i].score);
  }
}

TEST_CASE("stopping early leaves a resumable state") {
  ActiveLearner learner(tiny_config());
  RunOptions options;
  options.stop_after_step = 2;
  CHECK_FALSE(learner.run(options));
  CHECK(learner.state().step == 2);
  CHECK(learner.state().stage == RunStage::looping);
}

TEST_CASE("a rejecting filter triggers regeneration but the run continues") {
  RunConfig c = tiny_config();
  c.max_cost = 1100.0;
  ActiveLearner learner(c);
  learner.set_filter([](const Sequence&) { return false; });
  CHECK(learner.run());
  CHECK(learner.state().regenerations > 0);
  CHECK(learner.state().finals_flagged);
  CHECK(learner.state().finals.empty());
}
