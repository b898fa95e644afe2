// mflal: run, resume and inspect multi-fidelity latent active-learning runs.
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mflal/checkpoint.hpp"
#include "mflal/config.hpp"
#include "mflal/controller.hpp"
#include "mflal/errors.hpp"
#include "mflal/report.hpp"

namespace fs = std::filesystem;
using namespace mflal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitInterrupted = 130;

std::atomic<bool> g_interrupt{false};

extern "C" void on_sigint(int) { g_interrupt.store(true); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "mflal-out";
  std::optional<std::string> mode;
  std::optional<double> budget;
  std::optional<std::int64_t> stop_after;
  std::size_t seeds = 5;
  std::size_t samples = 2000;
};

RunConfig resolve(const Common& c) {
  RunConfig base = c.config.empty() ? default_config() : load_config(c.config);
  return with_overrides(base, c.seed, c.mode, c.budget);
}

std::string checkpoint_path(const std::string& out) { return (fs::path(out) / "checkpoint.bin").string(); }

// Runs (or continues) a learner, checkpointing after every step.
int drive(ActiveLearner& learner, const Common& c) {
  fs::create_directories(c.out);
  const std::string ckpt = checkpoint_path(c.out);
  RunOptions options;
  options.stop_after_step = c.stop_after;
  options.interrupt = &g_interrupt;
  options.on_step = [&](const ActiveLearner& l) { save_checkpoint(l, ckpt); };
  std::signal(SIGINT, on_sigint);
  const bool finished = learner.run(options);
  if (!finished) {
    std::cerr << "stopped after step " << learner.state().step << "; continue with: mflal resume --out " << c.out
              << "\n";
    return g_interrupt.load() ? kExitInterrupted : kExitOk;
  }
  const RunReport report = make_report(learner);
  emit_report(report, c.out);
  const FinalSummary& s = report.summary;
  std::printf("%s seed %llu: %zu finals, mean %.4f, sd %.4f, top", report.mode.c_str(),
              static_cast<unsigned long long>(report.seed), s.count, s.mean, s.sd);
  for (double v : s.top) std::printf(" %.4f", v);
  std::printf(", similarity %.3f%s -> %s\n", s.similarity, s.flagged ? " (flagged)" : "", c.out.c_str());
  return kExitOk;
}

int cmd_run(const Common& c) {
  ActiveLearner learner(resolve(c));
  return drive(learner, c);
}

int cmd_resume(const Common& c) {
  ActiveLearner learner = load_checkpoint(checkpoint_path(c.out));
  return drive(learner, c);
}

int cmd_report(const Common& c) {
  const ActiveLearner learner = load_checkpoint(checkpoint_path(c.out));
  if (learner.state().stage != RunStage::done) {
    std::cerr << "warning: run in " << c.out << " is unfinished; reporting the partial trace\n";
  }
  emit_report(make_report(learner), c.out);
  std::cout << "report written to " << c.out << "\n";
  return kExitOk;
}

int cmd_ablate(const Common& c) {
  const RunConfig base = resolve(c);
  std::vector<std::string> modes{"full", "no_likelihood", "single_fidelity"};
  for (std::size_t j = 1; j < base.environment.fidelities(); ++j) modes.push_back("drop_fidelity_" + std::to_string(j));
  std::vector<RunReport> reports;
  for (const std::string& mode : modes) {
    for (std::size_t i = 0; i < c.seeds; ++i) {
      const std::uint64_t seed = base.seed + i;
      Common sub = c;
      sub.out = (fs::path(c.out) / (mode + "_seed" + std::to_string(seed))).string();
      ActiveLearner learner(with_overrides(base, seed, mode, std::nullopt));
      sub.stop_after.reset();
      const int rc = drive(learner, sub);
      if (rc != kExitOk) return rc;
      reports.push_back(make_report(learner));
    }
  }
  emit_summary(reports, (fs::path(c.out) / "summary.csv").string());
  return kExitOk;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

int cmd_oracle_check(const Common& c) {
  const RunConfig config = resolve(c);
  OracleSuite oracles = make_oracles(config);
  Rng rng(hash_combine(config.seed, 0x0C4EC));
  std::vector<Sequence> xs;
  std::vector<double> truth;
  for (std::size_t i = 0; i < c.samples; ++i) {
    xs.push_back(random_sequence(config.environment.seq_len, oracles.alphabet(), rng));
    truth.push_back(oracles.true_score(xs.back()));
  }
  std::printf("fidelity,cost,pearson_vs_truth,spearman_vs_truth\n");
  for (std::size_t k = 1; k <= oracles.fidelities(); ++k) {
    const OracleSpec& spec = oracles.spec(k);
    if (spec.kind != OracleKind::synthetic) {
      std::printf("%zu,%g,external,external\n", k, spec.cost);
      continue;
    }
    std::vector<double> f;
    for (std::size_t i = 0; i < xs.size(); ++i) f.push_back(oracles.synthetic_value(xs[i], k, i));
    std::printf("%zu,%g,%.4f,%.4f\n", k, spec.cost, pearson(f, truth), spearman(f, truth));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity latent-space active learning on cost-tiered oracles"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", c.config, "JSON run configuration");
    if (needs_config) opt->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Run seed (overrides the config)");
    sub->add_option("--mode", c.mode, "full | no_likelihood | single_fidelity | drop_fidelity_<j>");
    sub->add_option("--budget", c.budget, "Maximum cost of seeding plus active queries");
    sub->add_option("--out", c.out, "Run directory")->capture_default_str();
  };

  CLI::App* run = app.add_subcommand("run", "Start a run");
  add_common(run, true);
  run->add_option("--stop-after", c.stop_after, "Stop resumably after this many active-learning steps");
  CLI::App* resume = app.add_subcommand("resume", "Continue a run from its checkpoint");
  resume->add_option("--out", c.out, "Run directory")->capture_default_str();
  resume->add_option("--stop-after", c.stop_after, "Stop again after this many active-learning steps");
  CLI::App* report = app.add_subcommand("report", "Re-emit report files from a checkpoint");
  report->add_option("--out", c.out, "Run directory")->capture_default_str();
  CLI::App* ablate = app.add_subcommand("ablate", "Run every mode over consecutive seeds");
  add_common(ablate, true);
  ablate->add_option("--seeds", c.seeds, "Number of consecutive seeds")->capture_default_str();
  CLI::App* check = app.add_subcommand("oracle-check", "Print the fidelity correlation ladder");
  add_common(check, true);
  check->add_option("--samples", c.samples, "Random sequences to score")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(c);
    if (*resume) return cmd_resume(c);
    if (*report) return cmd_report(c);
    if (*ablate) return cmd_ablate(c);
    if (*check) return cmd_oracle_check(c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
