#include "mflal/oracle.hpp"

#include <chrono>
#include <cmath>
#include <span>
#include <stdexcept>

#include "mflal/errors.hpp"
#include "mflal/rng.hpp"

namespace mflal {

void SyntheticEnvConfig::validate() const {
  const std::size_t k = rho.size();
  if (k < 1) throw ConfigError("environment.rho: need at least one fidelity");
  if (noise.size() != k) throw ConfigError("environment.noise: expected " + std::to_string(k) + " entries");
  if (cost.size() != k) throw ConfigError("environment.cost: expected " + std::to_string(k) + " entries");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(rho[i] > 0.0 && rho[i] <= 1.0)) throw ConfigError("environment.rho: entries must lie in (0, 1]");
    if (!(noise[i] >= 0.0)) throw ConfigError("environment.noise: entries must be >= 0");
    if (!(cost[i] > 0.0)) throw ConfigError("environment.cost: entries must be positive");
    if (i > 0 && !(rho[i] > rho[i - 1])) throw ConfigError("environment.rho: must be strictly increasing");
    if (i > 0 && !(noise[i] <= noise[i - 1])) throw ConfigError("environment.noise: must be non-increasing");
    if (i > 0 && !(cost[i] > cost[i - 1])) throw ConfigError("environment.cost: must be strictly increasing");
  }
  if (rho.back() != 1.0) throw ConfigError("environment.rho: top fidelity must equal 1");
  if (noise.back() != 0.0) throw ConfigError("environment.noise: top fidelity must be noise-free");
  if (seq_len < 1) throw ConfigError("environment.seq_len: must be positive");
  if (alphabet_size < 2) throw ConfigError("environment.alphabet_size: must be at least 2");
  if (!unary.empty() && unary.size() != seq_len * alphabet_size) {
    throw ConfigError("environment.unary: expected seq_len * alphabet_size entries");
  }
  if (!pairwise.empty() && pairwise.size() != (seq_len - 1) * alphabet_size * alphabet_size) {
    throw ConfigError("environment.pairwise: expected (seq_len - 1) * alphabet_size^2 entries");
  }
}

Landscape::Landscape(std::size_t seq_len, std::size_t alphabet_size, std::vector<double> unary,
                     std::vector<double> pairwise)
    : seq_len_(seq_len), alphabet_size_(alphabet_size), unary_(std::move(unary)), pairwise_(std::move(pairwise)) {
  if (unary_.empty()) unary_.assign(seq_len * alphabet_size, 0.0);
  if (pairwise_.empty()) pairwise_.assign((seq_len - 1) * alphabet_size * alphabet_size, 0.0);
}

Landscape Landscape::random(std::size_t seq_len, std::size_t alphabet_size, std::uint64_t seed,
                            double unary_scale, double pair_scale) {
  Rng rng(mix64(seed));
  std::vector<double> unary(seq_len * alphabet_size);
  for (double& w : unary) w = unary_scale * rng.normal();
  std::vector<double> pairwise((seq_len - 1) * alphabet_size * alphabet_size);
  for (double& w : pairwise) w = pair_scale * rng.normal();
  return Landscape(seq_len, alphabet_size, std::move(unary), std::move(pairwise));
}

double Landscape::operator()(const Sequence& x) const {
  if (x.length() != seq_len_) {
    throw std::invalid_argument("landscape: sequence length " + std::to_string(x.length()) +
                                " != " + std::to_string(seq_len_));
  }
  const std::size_t a = alphabet_size_;
  double total = 0.0;
  for (std::size_t i = 0; i < seq_len_; ++i) {
    total += unary_[i * a + static_cast<std::size_t>(x.ids[i])];
    if (i + 1 < seq_len_) {
      total += pairwise_[(i * a + static_cast<std::size_t>(x.ids[i])) * a + static_cast<std::size_t>(x.ids[i + 1])];
    }
  }
  return total;
}

CostLedger::CostLedger(const CostLedger& other) {
  std::lock_guard lock(other.mutex_);
  counts_ = other.counts_;
  spent_ = other.spent_;
}

CostLedger& CostLedger::operator=(const CostLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  counts_ = other.counts_;
  spent_ = other.spent_;
  return *this;
}

void CostLedger::charge(std::size_t fidelity, double cost) {
  std::lock_guard lock(mutex_);
  counts_.at(fidelity - 1) += 1;
  spent_.at(fidelity - 1) += cost;
}

double CostLedger::total() const {
  std::lock_guard lock(mutex_);
  double t = 0.0;
  for (double s : spent_) t += s;
  return t;
}

std::int64_t CostLedger::count(std::size_t fidelity) const {
  std::lock_guard lock(mutex_);
  return counts_.at(fidelity - 1);
}

double CostLedger::spent(std::size_t fidelity) const {
  std::lock_guard lock(mutex_);
  return spent_.at(fidelity - 1);
}

void CostLedger::restore(std::vector<std::int64_t> counts, std::vector<double> spent) {
  std::lock_guard lock(mutex_);
  counts_ = std::move(counts);
  spent_ = std::move(spent);
}

OracleSuite::OracleSuite(SyntheticEnvConfig env, std::vector<OracleSpec> specs,
                         std::vector<std::size_t> source_fidelity, Alphabet alphabet)
    : env_(std::move(env)),
      specs_(std::move(specs)),
      source_(std::move(source_fidelity)),
      alphabet_(std::move(alphabet)),
      ledger_(specs_.size()) {
  env_.validate();
  if (specs_.empty()) throw ConfigError("oracles: need at least one fidelity");
  if (source_.size() != specs_.size()) throw ConfigError("oracles: source mapping size mismatch");
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (i > 0 && !(specs_[i].cost > specs_[i - 1].cost)) {
      throw ConfigError("oracles: costs must strictly increase with fidelity");
    }
    if (source_[i] < 1 || source_[i] > env_.fidelities()) throw ConfigError("oracles: bad source fidelity");
  }
  if (env_.unary.empty() && env_.pairwise.empty()) {
    landscape_ = Landscape::random(env_.seq_len, env_.alphabet_size, env_.seed, env_.unary_scale, env_.pair_scale);
  } else {
    landscape_ = Landscape(env_.seq_len, env_.alphabet_size, env_.unary, env_.pairwise);
  }
  // Spread of g over uniform random sequences, ignoring the small
  // unary/pairwise covariance.
  auto table_variance = [](std::span<const double> v) {
    double m = 0.0, ss = 0.0;
    for (double x : v) m += x / static_cast<double>(v.size());
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size());
  };
  const std::size_t a = env_.alphabet_size;
  double variance = 0.0;
  const auto& w = landscape_.unary();
  const auto& w2 = landscape_.pairwise();
  for (std::size_t i = 0; i < env_.seq_len; ++i) variance += table_variance(std::span(w).subspan(i * a, a));
  for (std::size_t i = 0; i + 1 < env_.seq_len; ++i) {
    variance += table_variance(std::span(w2).subspan(i * a * a, a * a));
  }
  truth_sd_ = std::sqrt(variance);
}

OracleSuite OracleSuite::synthetic(const SyntheticEnvConfig& env) {
  std::vector<OracleSpec> specs;
  std::vector<std::size_t> source;
  for (std::size_t k = 1; k <= env.fidelities(); ++k) {
    specs.push_back({k, env.cost.at(k - 1), OracleKind::synthetic, {}, 60.0});
    source.push_back(k);
  }
  return OracleSuite(env, std::move(specs), std::move(source), Alphabet::standard(env.alphabet_size));
}

const OracleSpec& OracleSuite::spec(std::size_t k) const {
  if (k < 1 || k > specs_.size()) throw std::out_of_range("oracle: fidelity " + std::to_string(k));
  return specs_[k - 1];
}

double OracleSuite::true_score(const Sequence& x) const { return landscape_(x); }

double OracleSuite::distortion(const Sequence& x, std::size_t env_fidelity) const {
  if (env_fidelity < 1 || env_fidelity > env_.fidelities()) {
    throw std::out_of_range("distortion: fidelity " + std::to_string(env_fidelity));
  }
  std::uint64_t h = hash_combine(env_.seed, 0xD15'7000 + env_fidelity);
  for (int id : x.ids) h = hash_combine(h, static_cast<std::uint64_t>(id));
  Rng draw(h);
  return truth_sd_ * draw.normal();
}

double OracleSuite::synthetic_value(const Sequence& x, std::size_t k, std::uint64_t noise_index) const {
  const std::size_t src = source_.at(k - 1);
  const double rho = env_.rho[src - 1];
  const double sigma = env_.noise[src - 1];
  const double g = true_score(x);
  if (rho == 1.0 && sigma == 0.0) return g;
  double y = rho * g + (1.0 - rho) * distortion(x, src);
  if (sigma > 0.0) {
    Rng noise(hash_combine(hash_combine(env_.seed, src), noise_index));
    y += sigma * noise.normal();
  }
  return y;
}

OracleResult OracleSuite::evaluate(const Sequence& x, std::size_t k, std::int64_t step, const std::string& phase) {
  const OracleSpec& s = spec(k);
  const std::string text = to_string(x, alphabet_);
  OracleResult result;
  std::unique_lock lock(*records_mutex_, std::defer_lock);
  if (s.kind == OracleKind::synthetic) {
    // The noise index is the per-fidelity query count, so it must be read
    // and charged atomically.
    lock.lock();
    result.score = synthetic_value(x, k, static_cast<std::uint64_t>(ledger_.count(k)));
  } else {
    result = run_external_command(s.command, text, s.timeout_secs);
    lock.lock();
  }
  result.cost = s.cost;
  QueryRecord rec;
  rec.sequence = text;
  rec.fidelity = k;
  rec.score = result.score.value_or(std::nan(""));
  rec.cost = s.cost;
  rec.step = step;
  rec.phase = phase;
  rec.ok = result.score.has_value();
  rec.error = result.error;
  rec.timestamp = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  ledger_.charge(k, s.cost);
  records_.push_back(std::move(rec));
  return result;
}

void OracleSuite::restore(std::vector<QueryRecord> records, CostLedger ledger) {
  std::lock_guard lock(*records_mutex_);
  records_ = std::move(records);
  ledger_ = ledger;
}

}  // namespace mflal
