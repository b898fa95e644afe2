#include "mflal/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mflal/adam.hpp"
#include "mflal/errors.hpp"
#include "mflal/generation.hpp"
#include "mflal/ops.hpp"

namespace mflal {

bool MultiFidelityDataset::add(std::size_t k, const Sequence& x, double y) {
  if (!std::isfinite(y)) throw NumericalError("dataset: non-finite score at fidelity " + std::to_string(k));
  level(k);
  Level& l = sets_[k - 1];
  if (!l.index.insert(x).second) return false;
  l.xs.push_back(x);
  l.ys.push_back(y);
  return true;
}

bool MultiFidelityDataset::contains(std::size_t k, const Sequence& x) const { return level(k).index.count(x) > 0; }
std::size_t MultiFidelityDataset::size(std::size_t k) const { return level(k).xs.size(); }
const std::vector<Sequence>& MultiFidelityDataset::sequences(std::size_t k) const { return level(k).xs; }
const std::vector<double>& MultiFidelityDataset::scores(std::size_t k) const { return level(k).ys; }

const MultiFidelityDataset::Level& MultiFidelityDataset::level(std::size_t k) const {
  if (k < 1 || k > sets_.size()) throw std::out_of_range("dataset: fidelity " + std::to_string(k));
  return sets_[k - 1];
}

namespace {

RunState initial_state(const RunConfig& config) {
  validate_config(config);
  RunState s;
  s.config = config;
  s.config.model.hierarchy.fidelities = config.model_fidelities();
  s.rng = Rng(config.seed);
  s.model = MfModel(s.config.model, s.rng);
  s.data = MultiFidelityDataset(s.config.model_fidelities());
  return s;
}

// Rows `idx` of a row-major n x width table.
Tensor gather_rows(const std::vector<double>& table, std::size_t width, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size() * width);
  for (std::size_t i : idx) {
    out.insert(out.end(), table.begin() + static_cast<std::ptrdiff_t>(i * width),
               table.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
  }
  return Tensor::from({idx.size(), width}, std::move(out));
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> idx;
  if (batch >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  std::set<std::size_t> seen;
  while (idx.size() < batch) {
    const std::size_t i = rng.uniform_int(n);
    if (seen.insert(i).second) idx.push_back(i);
  }
  return idx;
}

bool all_finite(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

}  // namespace

ActiveLearner::ActiveLearner(const RunConfig& config)
    : state_(initial_state(config)),
      oracles_(make_oracles(config)),
      alphabet_(Alphabet::standard(config.environment.alphabet_size)) {}

ActiveLearner::ActiveLearner(RunState state, OracleSuite oracles)
    : state_(std::move(state)),
      oracles_(std::move(oracles)),
      alphabet_(Alphabet::standard(state_.config.environment.alphabet_size)) {}

double ActiveLearner::spent() const {
  double total = 0.0;
  for (const QueryRecord& r : oracles_.records()) {
    if (r.phase != "final") total += r.cost;
  }
  return total;
}

double ActiveLearner::seeding_cost() const {
  double cost = 0.0;
  for (std::size_t k = 1; k <= fidelities(); ++k) {
    const std::size_t n = k == 1 && fidelities() > 1 ? state_.config.active.n_low : state_.config.active.n_high;
    cost += static_cast<double>(n) * oracles_.spec(k).cost;
  }
  if (cost > state_.config.max_cost) {
    throw ConfigError("budget.max_cost: seeding needs " + std::to_string(cost) + " cost units but the budget is " +
                      std::to_string(state_.config.max_cost));
  }
  return cost;
}

void ActiveLearner::seed_initial_data() {
  seeding_cost();
  const std::size_t length = state_.config.environment.seq_len;
  for (std::size_t k = 1; k <= fidelities(); ++k) {
    const std::size_t n = k == 1 && fidelities() > 1 ? state_.config.active.n_low : state_.config.active.n_high;
    std::set<Sequence> drawn;
    while (drawn.size() < n) {
      Sequence x = random_sequence(length, alphabet_, state_.rng);
      if (!drawn.insert(x).second) continue;
      const OracleResult r = oracles_.evaluate(x, k, 0, "seed");
      if (r.score) state_.data.add(k, x, *r.score);
    }
  }
}

void ActiveLearner::fit_standardizers() {
  for (std::size_t k = 1; k <= fidelities(); ++k) {
    const auto& ys = state_.data.scores(k);
    if (ys.empty()) continue;
    std::vector<double> u(ys.size());
    std::transform(ys.begin(), ys.end(), u.begin(), [](double y) { return -y; });
    state_.model.set_standardizer(k, Standardizer::fit(u));
  }
}

TrainSummary ActiveLearner::train_once(bool warm) {
  const TrainingConfig& tc = state_.config.training;
  const std::size_t kk = fidelities();
  if (state_.data.size(1) == 0) throw NumericalError("retrain: no data at fidelity 1");
  if (!warm) state_.model = MfModel(state_.config.model, state_.rng);
  fit_standardizers();

  const std::size_t width = state_.config.environment.seq_len * alphabet_.size();
  std::vector<std::vector<double>> onehot(kk), targets(kk);
  std::vector<double> weight(kk, 0.0);
  for (std::size_t k = 1; k <= kk; ++k) {
    const std::size_t n = state_.data.size(k);
    if (n == 0) continue;
    const Tensor x = encode_batch(state_.data.sequences(k), alphabet_);
    onehot[k - 1].assign(x.values().begin(), x.values().end());
    const Standardizer& s = state_.model.standardizer(k);
    for (double y : state_.data.scores(k)) targets[k - 1].push_back(s.forward(-y));
    weight[k - 1] = std::pow(static_cast<double>(n), tc.sampling_power);
    if (!warm) {
      const Tensor z = state_.model.hierarchy().latent_mean(x, k).detach();
      state_.model.surrogate(k).init_inducing(z, state_.rng);
    }
  }
  const double weight_total = std::accumulate(weight.begin(), weight.end(), 0.0);

  std::vector<Tensor> params = state_.model.parameters();
  Adam opt(params, tc.learning_rate);
  const std::size_t max_steps = warm ? std::min(tc.max_steps, tc.warm_max_steps) : tc.max_steps;

  TrainSummary out;
  out.min_kl = std::numeric_limits<double>::infinity();
  out.min_cross_entropy = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  auto window_mean = [&](std::size_t end) {
    const std::size_t w = std::min(tc.window, end);
    return std::accumulate(history.begin() + static_cast<std::ptrdiff_t>(end - w),
                           history.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
           static_cast<double>(w);
  };

  for (std::size_t step = 0; step < max_steps; ++step) {
    double pick = state_.rng.uniform() * weight_total;
    std::size_t k = 1;
    for (std::size_t j = 1; j <= kk; ++j) {
      if (weight[j - 1] <= 0.0) continue;
      k = j;
      if (pick < weight[j - 1]) break;
      pick -= weight[j - 1];
    }
    const std::size_t n = state_.data.size(k);
    const std::vector<std::size_t> idx = sample_batch(n, tc.batch_size, state_.rng);
    const Tensor x = gather_rows(onehot[k - 1], width, idx);
    const Tensor y = gather_rows(targets[k - 1], 1, idx);

    const ElboTerms elbo = state_.model.hierarchy().elbo_loss(x, k, state_.rng);
    Tensor loss = elbo.loss;
    if (tc.gp_weight > 0.0) {
      const Tensor gp = state_.model.surrogate(k).neg_elbo(elbo.latent, y, n);
      loss = add(loss, scale(gp, tc.gp_weight / static_cast<double>(n)));
    }
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("retrain: non-finite loss at step " + std::to_string(step));
    out.min_kl = std::min(out.min_kl, elbo.kl.item());
    out.min_cross_entropy = std::min(out.min_cross_entropy, elbo.reconstruction.item());

    opt.zero_grad();
    loss.backward();
    if (!all_finite(params)) throw NumericalError("retrain: non-finite gradient at step " + std::to_string(step));
    opt.step();

    history.push_back(value);
    out.steps = step + 1;
    if (history.size() >= tc.window && (step + 1) % tc.eval_every == 0) {
      const double avg = window_mean(history.size());
      if (avg < best - tc.min_improvement * std::abs(best) || !std::isfinite(best)) {
        best = avg;
        stale = 0;
      } else if (++stale >= tc.patience) {
        break;
      }
    }
  }
  out.initial_loss = window_mean(std::min(tc.window, history.size()));
  out.final_loss = window_mean(history.size());
  return out;
}

TrainSummary ActiveLearner::retrain() {
  const bool warm = state_.config.training.warm_start && !state_.trainings.empty();
  TrainSummary summary;
  try {
    summary = train_once(warm);
  } catch (const NumericalError&) {
    // One restart from a fresh initialization.
    summary = train_once(false);
    summary.restarts = 1;
  }
  state_.trainings.push_back(summary);
  state_.since_retrain = 0;
  return summary;
}

GenObjectiveConfig ActiveLearner::generation_config(double beta) const {
  GenObjectiveConfig g = state_.config.generation;
  g.beta = beta;
  if (state_.config.mode.mode == RunMode::no_likelihood) g.lambda_lik = 0.0;
  return g;
}

ActiveLearner::Candidate ActiveLearner::choose_query() {
  const std::size_t k = state_.k;
  const GenObjectiveConfig g = generation_config(state_.config.generation.beta);
  const std::size_t d = state_.model.hierarchy().latent_dim();
  std::optional<Candidate> fallback;
  std::optional<Candidate> any;
  for (std::size_t attempt = 0; attempt <= state_.config.active.max_regenerate; ++attempt) {
    if (attempt > 0) ++state_.regenerations;
    const GenerationResult gen = generate_high_scoring(state_.model, k, g, state_.rng, g.batch);
    std::vector<std::size_t> order(gen.sequences.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return gen.latents.acquisition[a] > gen.latents.acquisition[b];
    });
    for (std::size_t i : order) {
      Candidate c{gen.sequences[i],
                  {gen.latents.points.values().begin() + static_cast<std::ptrdiff_t>(i * d),
                   gen.latents.points.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * d)},
                  gen.latents.acquisition[i]};
      if (!any) any = c;
      if (state_.data.contains(k, c.sequence)) continue;
      if (accepts(c.sequence)) return c;
      if (!fallback) fallback = c;
    }
  }
  if (fallback) return *fallback;
  // Every decode repeated known data: perturb the best one until it is new.
  Candidate c = *any;
  ++state_.mutations;
  const std::size_t length = c.sequence.ids.size();
  while (state_.data.contains(k, c.sequence)) {
    const std::size_t pos = state_.rng.uniform_int(length);
    c.sequence.ids[pos] = static_cast<int>(state_.rng.uniform_int(alphabet_.size()));
  }
  return c;
}

bool ActiveLearner::al_step() {
  const std::size_t k = state_.k;
  const double cost = oracles_.spec(k).cost;
  if (spent() + cost > state_.config.max_cost) return false;

  const Candidate c = choose_query();
  const std::int64_t step = state_.step + 1;
  const OracleResult r = oracles_.evaluate(c.sequence, k, step, "active");
  const bool appended = r.score.has_value() && state_.data.add(k, c.sequence, *r.score);

  if (k < fidelities()) {
    // Thresholds are indexed by the environment's own fidelity.
    const std::size_t source = state_.config.active_fidelities().at(k - 1);
    const double gamma = state_.config.active.gamma.at(source - 1);
    const SurrogatePosterior post = state_.model.posterior(c.latent, k);
    if (post.standardized_variance < gamma) {
      state_.k = k + 1;
      state_.escalations.push_back(step);
    }
  }
  state_.step = step;
  if (appended && ++state_.since_retrain >= state_.config.training.retrain_every) retrain();
  return true;
}

void ActiveLearner::inference() {
  const std::size_t top = fidelities();
  const GenObjectiveConfig g = generation_config(state_.config.generation.inference_beta);
  const std::size_t want = state_.config.active.n_final;
  std::vector<Sequence> picked;
  std::set<Sequence> seen;
  for (std::size_t attempt = 0; attempt < state_.config.active.final_attempts && picked.size() < want; ++attempt) {
    const GenerationResult gen = generate_high_scoring(state_.model, top, g, state_.rng, g.batch);
    std::vector<std::size_t> order(gen.sequences.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return gen.latents.acquisition[a] > gen.latents.acquisition[b];
    });
    for (std::size_t i : order) {
      if (picked.size() >= want) break;
      const Sequence& x = gen.sequences[i];
      if (!accepts(x) || !seen.insert(x).second) continue;
      picked.push_back(x);
    }
  }
  state_.finals.clear();
  state_.finals_flagged = picked.size() < want;
  for (const Sequence& x : picked) {
    const OracleResult r = oracles_.evaluate(x, top, state_.step + 1, "final");
    state_.finals.push_back({x, r.score.value_or(std::numeric_limits<double>::quiet_NaN()), r.score.has_value()});
  }
}

bool ActiveLearner::run(const RunOptions& options) {
  if (state_.stage == RunStage::fresh) {
    seed_initial_data();
    retrain();
    state_.stage = RunStage::looping;
    if (options.on_step) options.on_step(*this);
  }
  if (state_.stage == RunStage::looping) {
    while (true) {
      if (options.stop_after_step && state_.step >= *options.stop_after_step) return false;
      if (options.interrupt && options.interrupt->load()) return false;
      if (!al_step()) break;
      if (options.on_step) options.on_step(*this);
    }
    inference();
    state_.stage = RunStage::done;
    if (options.on_step) options.on_step(*this);
  }
  return true;
}

double ActiveLearner::reconstruction_accuracy(std::size_t k) const {
  const auto& xs = state_.data.sequences(k);
  if (xs.empty()) return 0.0;
  const Tensor onehot = encode_batch(xs, alphabet_);
  const Tensor z = state_.model.hierarchy().latent_mean(onehot, k).detach();
  const Tensor logits = state_.model.hierarchy().decode_logits(z, k).detach();
  const std::size_t width = logits.cols();
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor row = Tensor::from({width}, {logits.values().begin() + static_cast<std::ptrdiff_t>(i * width),
                                              logits.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * width)});
    const Sequence y = decode_greedy(row, xs[i].ids.size());
    for (std::size_t p = 0; p < y.ids.size(); ++p) hits += y.ids[p] == xs[i].ids[p];
    total += y.ids.size();
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace mflal
