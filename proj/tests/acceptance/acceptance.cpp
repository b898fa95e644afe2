// Acceptance suite: one PASS/FAIL line per criterion.
//
//   mflal_acceptance [--config PATH] [--seeds N] [--only LIST]
//
// Criteria 4-10 share the full-mode desk runs; single_fidelity and
// no_likelihood runs are made only when 6 or 7 is selected.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../support/exact_gp.hpp"
#include "../support/gradcheck.hpp"
#include "mflal/adam.hpp"
#include "mflal/checkpoint.hpp"
#include "mflal/controller.hpp"
#include "mflal/generation.hpp"
#include "mflal/mlp.hpp"
#include "mflal/ops.hpp"
#include "mflal/report.hpp"
#include "mflal/svgp.hpp"

using namespace mflal;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Autodiff against central differences on random networks.
void numerical_core() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int net = 0; net < 50; ++net) {
    std::vector<std::size_t> widths{1 + rng.uniform_int(6)};
    const std::size_t depth = 1 + rng.uniform_int(3);
    for (std::size_t l = 0; l < depth; ++l) widths.push_back(1 + rng.uniform_int(6));
    const Mlp mlp(widths, rng);
    const std::size_t n = 1 + rng.uniform_int(4);
    std::vector<double> xv(n * widths.front());
    for (double& v : xv) v = rng.normal();
    const Tensor x = Tensor::parameter({n, widths.front()}, xv);
    std::vector<Tensor> params = mlp.parameters();
    // Fresh biases are zero, which parks dead units exactly on the ReLU kink.
    for (Tensor& p : params)
      for (double& v : p.mutable_values()) v += 0.1 * rng.normal();
    params.push_back(x);
    auto loss = [&] {
      const Tensor out = mlp.forward(x);
      const Tensor a = sum(square(softplus(out)));
      const Tensor b = sum(log_softmax(out));
      return add(add(a, scale(b, 0.3)), sum(log_sum_exp(out)));
    };
    worst = std::max(worst, mflal::testing::max_gradient_error(loss, params, 1e-6, 1e-3));
  }
  const double t = seconds_since(t0);
  report(1, worst < 1e-4 && t < 30.0,
         fmt("autodiff vs central differences, max relative error %.3g over 50 networks (< 1e-4), %.2f s (< 30 s)", worst, t));
}

// 2. Mixture log density against a direct sum of Gaussian densities.
void mixture_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.uniform_int(8), m = 1 + rng.uniform_int(5);
    std::vector<double> mu(m * d), sigma(m * d), z(d);
    for (double& v : mu) v = rng.normal();
    for (double& v : sigma) v = 0.5 + 1.5 * rng.uniform();
    for (double& v : z) v = rng.normal();
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double p = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double s = sigma[j * d + i], u = (z[i] - mu[j * d + i]) / s;
        p *= std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * s);
      }
      total += p;
    }
    const double got = mixture_log_density(Tensor::from({1, d}, z), {Tensor::from({m, d}, mu), Tensor::from({m, d}, sigma)}).item();
    worst = std::max(worst, std::abs(got - std::log(total)));
  }
  const double t = seconds_since(t0);
  report(2, worst < 1e-9 && t < 5.0,
         fmt("mixture log density vs direct sum, max abs error %.3g over 100 instances (< 1e-9), %.3f s (< 5 s)", worst, t));
}

// 3. SVGP with inducing points at the inputs against an exact GP.
void svgp_correctness() {
  const auto t0 = Clock::now();
  Rng rng(303);
  double worst_rms = 0.0, worst_gap = -1e300;
  const int trials = 5;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 20; ++i) {
      x.push_back(-3.0 + 6.0 * i / 19.0);
      y.push_back(std::sin((1.0 + 0.2 * trial) * x.back()) + 0.1 * rng.normal());
    }
    SvgpConfig c;
    c.input_dim = 1;
    c.kernel_layers = 0;
    c.inducing = 20;
    Svgp gp(c, rng);
    std::copy(x.begin(), x.end(), const_cast<Tensor&>(gp.inducing_inputs()).mutable_values().begin());
    std::vector<Tensor> params;
    for (const Tensor& p : gp.parameters()) {
      if (p.values().data() != gp.inducing_inputs().values().data()) params.push_back(p);
    }
    const Tensor z = Tensor::from({20, 1}, x), yt = Tensor::from({20}, y);
    Adam opt(params, 0.03);
    auto exact = [&] {
      mflal::testing::ExactGp e;
      e.x = Eigen::Map<const Eigen::MatrixXd>(x.data(), 20, 1);
      e.y = Eigen::Map<const Eigen::VectorXd>(y.data(), 20);
      e.scale = gp.kernel_scale();
      e.ls = gp.lengthscale();
      e.noise = gp.noise_variance();
      return e;
    };
    for (int round = 0; round < 6; ++round) {
      for (int s = 0; s < 500; ++s) {
        opt.zero_grad();
        gp.neg_elbo(z, yt, 20).backward();
        opt.step();
      }
      worst_gap = std::max(worst_gap, -gp.neg_elbo(z, yt, 20).item() - exact().log_marginal());
    }
    std::vector<double> grid;
    for (int i = 0; i <= 40; ++i) grid.push_back(-3.5 + 7.0 * i / 40.0);
    const Eigen::VectorXd ref = exact().mean(Eigen::Map<const Eigen::MatrixXd>(grid.data(), 41, 1));
    const SvgpMoments m = gp.predict(Tensor::from({41, 1}, grid));
    double ss = 0.0;
    for (int i = 0; i < 41; ++i) ss += std::pow(m.mean[static_cast<std::size_t>(i)] - ref(i), 2);
    worst_rms = std::max(worst_rms, std::sqrt(ss / 41.0));
  }
  const double t = seconds_since(t0);
  report(3, worst_rms < 0.05 && worst_gap <= 1e-9 && t < 60.0,
         fmt("SVGP vs exact GP on 1-D toys (%d trials): max mean RMS %.4f (< 0.05), max ELBO - MLL %.3g (<= 0), %.1f s (< 60 s)",
             trials, worst_rms, worst_gap, t));
}

struct RunResult {
  std::string mode;
  std::uint64_t seed = 0;
  RunReport report;
  std::vector<QueryRecord> records;
  std::int64_t steps = 0;
  double seconds = 0.0;
  double min_recon = 1.0;  // fidelity 1, after every retrain
  double min_kl = 0.0, min_ce = 0.0;
  double spent = 0.0, max_cost = 0.0, ledger_total = 0.0;
  std::string dir;
};

double top3_mean(const RunResult& r) {
  const auto& t = r.report.summary.top;
  if (t.empty()) return INFINITY;
  double s = 0.0;
  for (double v : t) s += v;
  return s / static_cast<double>(t.size());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_report(const std::string& a, const std::string& b) {
  for (const char* f : {"summary.csv", "trace.csv", "trace.jsonl", "series.csv", "report.json"}) {
    if (slurp(fs::path(a) / f) != slurp(fs::path(b) / f)) return false;
  }
  return true;
}

RunResult desk_run(const RunConfig& base, std::uint64_t seed, const std::string& mode, const fs::path& out,
                   bool track_recon) {
  RunResult r;
  r.mode = mode;
  r.seed = seed;
  const RunConfig c = with_overrides(base, seed, mode, std::nullopt);
  const auto t0 = Clock::now();
  ActiveLearner learner(c);
  RunOptions options;
  std::size_t seen_trainings = 0;
  if (track_recon) {
    options.on_step = [&](const ActiveLearner& l) {
      if (l.state().trainings.size() != seen_trainings) {
        seen_trainings = l.state().trainings.size();
        r.min_recon = std::min(r.min_recon, l.reconstruction_accuracy(1));
      }
    };
  }
  learner.run(options);
  r.seconds = seconds_since(t0);
  r.report = make_report(learner);
  r.records = learner.oracles().records();
  r.steps = learner.state().step;
  r.spent = learner.spent();
  r.max_cost = c.max_cost;
  r.ledger_total = learner.oracles().ledger().total();
  r.min_kl = r.min_ce = 1e300;
  for (const TrainSummary& s : learner.state().trainings) {
    r.min_kl = std::min(r.min_kl, s.min_kl);
    r.min_ce = std::min(r.min_ce, s.min_cross_entropy);
  }
  r.dir = (out / (mode + "_seed" + std::to_string(seed))).string();
  emit_report(r.report, r.dir);
  std::fprintf(stderr, "  %s seed %llu: %.1f s, %lld steps, top-3 mean %.3f\n", mode.c_str(),
               static_cast<unsigned long long>(seed), r.seconds, static_cast<long long>(r.steps), top3_mean(r));
  return r;
}

void desk_criteria(const RunConfig& base, int seeds, const fs::path& out, const std::function<bool(int)>& want) {
  std::vector<RunResult> full, single, nolik;
  for (int s = 1; s <= seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    full.push_back(desk_run(base, seed, "full", out, s == 1));
    if (want(6)) single.push_back(desk_run(base, seed, "single_fidelity", out, false));
    if (want(7)) nolik.push_back(desk_run(base, seed, "no_likelihood", out, false));
  }
  const RunResult& first = full.front();

  if (want(4)) {
    // 4. ELBO sanity on the seed-1 full run.
    report(4, first.min_kl >= 0.0 && first.min_ce >= 0.0 && first.min_recon > 0.8 && first.seconds < 300.0,
           fmt("full run seed 1: min batch KL %.3g (>= 0), min batch cross-entropy %.3g (>= 0), "
               "min fidelity-1 per-position reconstruction after retrain %.3f (> 0.8), %.1f s (< 300 s)",
               first.min_kl, first.min_ce, first.min_recon, first.seconds));
  }

  if (want(5)) {
    // 5. Loop invariants, plus a second identical run.
    bool monotone = true, within = true, ledger = true;
    double slowest = 0.0;
    for (const RunResult& r : full) {
      std::size_t k = 0;
      double charged = 0.0;
      for (const QueryRecord& q : r.records) {
        charged += q.cost;
        if (q.phase == "active") {
          monotone = monotone && q.fidelity >= k;
          k = q.fidelity;
        }
      }
      within = within && r.spent <= r.max_cost;
      ledger = ledger && charged == r.ledger_total;
      slowest = std::max(slowest, r.seconds);
    }
    const RunResult again = desk_run(base, 1, "full", out / "repeat", false);
    const bool identical = same_report(first.dir, again.dir);
    report(5, monotone && within && ledger && identical && slowest < 600.0,
           fmt("%d full runs: fidelity non-decreasing %s, budget respected %s, ledger exact %s, "
               "repeat of seed 1 byte-identical %s, slowest %.1f s (< 600 s)",
               seeds, monotone ? "yes" : "no", within ? "yes" : "no", ledger ? "yes" : "no",
               identical ? "yes" : "no", slowest));
  }

  const int need = (4 * seeds + 4) / 5;

  // 6 and 7. Lower scores are better.
  auto versus = [&](int id, const std::vector<RunResult>& other, const char* name) {
    int wins = 0;
    std::string per;
    for (int i = 0; i < seeds; ++i) {
      const double f = top3_mean(full[i]), o = top3_mean(other[i]);
      wins += f < o;
      per += fmt(" %.2f/%.2f", f, o);
    }
    report(id, wins >= need,
           fmt("full beats %s on mean top-3 true score in %d/%d seeds (need %d); full/%s:%s", name, wins, seeds,
               need, name, per.c_str()));
  };
  if (want(6)) versus(6, single, "single_fidelity");
  if (want(7)) versus(7, nolik, "no_likelihood");

  if (want(8)) {
    // 8. Fidelity-2 query quality over active-learning steps.
    int improving = 0;
    std::string per8;
    for (const RunResult& r : full) {
      std::vector<double> step, score;
      for (const QueryRecord& q : r.records) {
        if (q.phase == "active" && q.fidelity == 2 && q.ok) {
          step.push_back(static_cast<double>(q.step));
          score.push_back(q.score);
        }
      }
      // Improving means scores fall as steps rise.
      const double rho = step.size() >= 3 ? spearman(step, score) : NAN;
      improving += step.size() >= 3 && rho <= -0.3;
      per8 += fmt(" %.2f(n=%zu)", rho, step.size());
    }
    report(8, improving >= need,
           fmt("Spearman(step, fidelity-2 score) <= -0.3 in %d/%d seeds (need %d); rho:%s", improving, seeds,
               need, per8.c_str()));
  }

  if (want(9)) {
    // 9. Diversity of the finals.
    double worst_sim = 0.0;
    std::size_t fewest = SIZE_MAX;
    for (const RunResult& r : full) {
      worst_sim = std::max(worst_sim, r.report.summary.similarity);
      fewest = std::min(fewest, r.report.summary.count);
    }
    report(9, worst_sim < 0.5 && fewest == base.active.n_final,
           fmt("max mean pairwise bigram Jaccard of the finals %.3f over %d full runs (< 0.5), fewest finals %zu (want %zu)",
               worst_sim, seeds, fewest, base.active.n_final));
  }

  if (want(10)) {
    // 10. Interrupt at half the steps, save, load, finish.
    const RunConfig c = with_overrides(base, 1, "full", std::nullopt);
    ActiveLearner part(c);
    RunOptions options;
    options.stop_after_step = std::max<std::int64_t>(1, first.steps / 2);
    part.run(options);
    const std::string ckpt = (out / "resume.ckpt").string();
    save_checkpoint(part, ckpt);
    ActiveLearner resumed = load_checkpoint(ckpt);
    resumed.run();
    const std::string dir = (out / "resumed").string();
    emit_report(make_report(resumed), dir);
    const bool same = same_report(first.dir, dir);
    report(10, same,
           fmt("run stopped after step %lld, checkpointed, reloaded and finished: report %s the uninterrupted run",
               static_cast<long long>(*options.stop_after_step), same ? "byte-identical to" : "DIFFERS from"));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config_path = MFLAL_ACCEPTANCE_CONFIG;
  int seeds = 5;
  std::string only;
  std::string out = (fs::temp_directory_path() / "mflal_acceptance").string();
  app.add_option("--config", config_path, "Run config for the desk runs");
  app.add_option("--seeds", seeds, "Seeds per mode")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "Comma-separated criteria to run, e.g. 1,2,3");
  app.add_option("--out", out, "Scratch directory for run reports");
  CLI11_PARSE(app, argc, argv);

  std::set<int> pick;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');) pick.insert(std::stoi(item));
  auto want = [&](int id) { return pick.empty() || pick.count(id) > 0; };

  try {
    if (want(1)) numerical_core();
    if (want(2)) mixture_equivalence();
    if (want(3)) svgp_correctness();
    bool desk = false;
    for (int id = 4; id <= 10; ++id) desk = desk || want(id);
    if (desk) {
      fs::remove_all(out);
      fs::create_directories(out);
      desk_criteria(load_config(config_path), seeds, out, want);
    }
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
