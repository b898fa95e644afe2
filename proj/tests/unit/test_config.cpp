#include <doctest.h>

#include <cmath>

#include "mflal/config.hpp"
#include "mflal/errors.hpp"

using namespace mflal;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("an empty document resolves to the defaults") {
  const RunConfig c = parse_config("{}");
  const RunConfig d = default_config();
  CHECK(config_to_json(c) == config_to_json(d));
  CHECK(c.max_cost == 20000.0);
  CHECK(c.environment.fidelities() == 4);
  CHECK(c.active.gamma == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(c.active.n_low == 2000);
  CHECK(c.active.n_high == 5);
  CHECK(c.generation.batch == 8);
  CHECK(c.model.hierarchy.fidelities == 4);
  CHECK(c.model.hierarchy.seq_len == 10);
  CHECK(c.model.hierarchy.alphabet_size == 12);
  CHECK(c.model.hierarchy.latent_dim == 16);
}

TEST_CASE("canonical JSON round-trips") {
  RunConfig c = parse_config(R"({"seed": 4, "mode": "no_likelihood", "active_learning": {"gamma": ["inf", 0, 0.25]}})");
  CHECK(std::isinf(c.active.gamma[0]));
  const std::string text = config_to_json(c);
  CHECK(config_to_json(parse_config(text)) == text);
}

TEST_CASE("errors name the offending field") {
  CHECK(config_error(R"({"budget": {"max_cost": -1}})").find("budget.max_cost") != std::string::npos);
  CHECK(config_error(R"({"foo": 1})").find("foo") != std::string::npos);
  CHECK(config_error(R"({"training": {"lerning_rate": 1}})").find("training.lerning_rate") != std::string::npos);
  CHECK(config_error(R"({"mode": "fast"})").find("mode") != std::string::npos);
  CHECK(config_error(R"({"active_learning": {"gamma": [0.5]}})").find("active_learning.gamma") != std::string::npos);
  CHECK(config_error(R"({"active_learning": {"gamma": [0.5, -1, 0.5]}})").find("active_learning.gamma") != std::string::npos);
  CHECK(config_error("{not json").size() > 0);
}

TEST_CASE("a single fidelity with thresholds is rejected") {
  const std::string e = config_error(
      R"({"environment": {"rho": [1], "noise": [0], "cost": [5]}, "active_learning": {"gamma": [0.5]}})");
  CHECK(e.find("active_learning.gamma") != std::string::npos);
  const RunConfig ok = parse_config(R"({"environment": {"rho": [1], "noise": [0], "cost": [5]}})");
  CHECK(ok.model_fidelities() == 1);
  CHECK(ok.active.gamma.empty());
}

TEST_CASE("modes select the fidelities in use") {
  const RunConfig base = default_config();
  CHECK(base.active_fidelities() == std::vector<std::size_t>{1, 2, 3, 4});
  const RunConfig single = with_overrides(base, std::nullopt, "single_fidelity", std::nullopt);
  CHECK(single.active_fidelities() == std::vector<std::size_t>{4});
  CHECK(single.model.hierarchy.fidelities == 1);
  const RunConfig dropped = with_overrides(base, std::nullopt, "drop_fidelity_2", std::nullopt);
  CHECK(dropped.active_fidelities() == std::vector<std::size_t>{1, 3, 4});
  CHECK_THROWS_AS(with_overrides(base, std::nullopt, "drop_fidelity_4", std::nullopt), ConfigError);
  CHECK(ModeSpec::parse("drop_fidelity_3").name() == "drop_fidelity_3");
}

TEST_CASE("overrides move the environment seed unless it was pinned") {
  const RunConfig a = with_overrides(default_config(), 7, std::nullopt, 500.0);
  CHECK(a.seed == 7);
  CHECK(a.environment.seed == 7);
  CHECK(a.max_cost == 500.0);
  const RunConfig pinned = with_overrides(parse_config(R"({"environment": {"seed": 2}})"), 7, std::nullopt, std::nullopt);
  CHECK(pinned.environment.seed == 2);
  CHECK_THROWS_AS(with_overrides(default_config(), std::nullopt, std::nullopt, 0.0), ConfigError);
}

TEST_CASE("external oracles need a placeholder and one entry per fidelity") {
  CHECK(config_error(R"({"oracles": [{"kind": "external_command", "command": "echo 1", "cost": 1}]})").size() > 0);
  const std::string ladder = R"({"environment": {"rho": [0.5, 1], "noise": [1, 0], "cost": [1, 10]},
    "active_learning": {"gamma": [0.5]},
    "oracles": [{"kind": "external_command", "command": "echo {seq}", "cost": 1},
                {"kind": "external_command", "command": "echo {seq}", "cost": 10}]})";
  const RunConfig c = parse_config(ladder);
  CHECK(c.external.size() == 2);
  CHECK(make_oracles(c).spec(2).kind == OracleKind::external_command);
}
