#include "mflal/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mflal/errors.hpp"

namespace mflal {
namespace {

constexpr char kMagic[8] = {'M', 'F', 'L', 'A', 'L', 'C', 'K', 'P'};

// Field layout, hashed into the header so that a reader built against a
// different layout refuses the file even when the version matches.
constexpr const char* kSchema =
    "config:json;rng:text;params:[f64[]];standardizers:[f64,f64];"
    "dataset:[[i32[],f64]];records:[str,u64,f64,f64,i64,str,u8,str,f64];"
    "ledger:[i64],[f64];state:u64,i64,u64,u8,[i64],[u64,f64,f64,u64,f64,f64],"
    "[i32[],f64,u8],u8,u64,u64;checksum:u64";

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void u64(std::uint64_t v) { pod(v); }
  void i64(std::int64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void u8(std::uint8_t v) { pod(v); }
  void str(const std::string& s) {
    u64(s.size());
    out_.append(s);
  }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void ids(const Sequence& x) {
    u64(x.ids.size());
    for (int id : x.ids) pod(static_cast<std::int32_t>(id));
  }
  std::string finish() {
    const std::uint64_t sum = fnv1a(out_.data(), out_.size());
    u64(sum);
    return std::move(out_);
  }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int64_t i64() { return pod<std::int64_t>(); }
  double f64() { return pod<double>(); }
  std::uint8_t u8() { return pod<std::uint8_t>(); }
  std::size_t count() {
    const std::uint64_t n = u64();
    if (n > in_.size()) throw CheckpointError("checkpoint: corrupt length field");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s() {
    const std::size_t n = count();
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  Sequence ids() {
    const std::size_t n = count();
    Sequence x;
    x.ids.resize(n);
    for (int& id : x.ids) id = pod<std::int32_t>();
    return x;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint: truncated file");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ActiveLearner& learner) {
  const RunState& s = learner.state();
  const OracleSuite& oracles = learner.oracles();
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.u64(fnv1a(kSchema, std::strlen(kSchema)));

  w.str(config_to_json(s.config));
  w.str(s.rng.state());
  const std::vector<Tensor> params = s.model.parameters();
  w.u64(params.size());
  for (const Tensor& p : params) w.f64s(p.values());
  const std::size_t k_count = s.model.fidelities();
  w.u64(k_count);
  for (std::size_t k = 1; k <= k_count; ++k) {
    w.f64(s.model.standardizer(k).mean);
    w.f64(s.model.standardizer(k).stddev);
  }
  w.u64(s.data.fidelities());
  for (std::size_t k = 1; k <= s.data.fidelities(); ++k) {
    w.u64(s.data.size(k));
    for (std::size_t i = 0; i < s.data.size(k); ++i) {
      w.ids(s.data.sequences(k)[i]);
      w.f64(s.data.scores(k)[i]);
    }
  }
  w.u64(oracles.records().size());
  for (const QueryRecord& r : oracles.records()) {
    w.str(r.sequence);
    w.u64(r.fidelity);
    w.f64(r.score);
    w.f64(r.cost);
    w.i64(r.step);
    w.str(r.phase);
    w.u8(r.ok ? 1 : 0);
    w.str(r.error);
    w.f64(r.timestamp);
  }
  const CostLedger& ledger = oracles.ledger();
  w.u64(ledger.fidelities());
  for (std::size_t k = 1; k <= ledger.fidelities(); ++k) w.i64(ledger.count(k));
  for (std::size_t k = 1; k <= ledger.fidelities(); ++k) w.f64(ledger.spent(k));

  w.u64(s.k);
  w.i64(s.step);
  w.u64(s.since_retrain);
  w.u8(static_cast<std::uint8_t>(s.stage));
  w.u64(s.escalations.size());
  for (std::int64_t e : s.escalations) w.i64(e);
  w.u64(s.trainings.size());
  for (const TrainSummary& t : s.trainings) {
    w.u64(t.steps);
    w.f64(t.initial_loss);
    w.f64(t.final_loss);
    w.u64(t.restarts);
    w.f64(t.min_kl);
    w.f64(t.min_cross_entropy);
  }
  w.u64(s.finals.size());
  for (const FinalDesign& f : s.finals) {
    w.ids(f.sequence);
    w.f64(f.score);
    w.u8(f.ok ? 1 : 0);
  }
  w.u8(s.finals_flagged ? 1 : 0);
  w.u64(s.regenerations);
  w.u64(s.mutations);
  return w.finish();
}

ActiveLearner deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: not a checkpoint file (bad magic or truncated header)");
  }
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.pod<char>();
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: file has format version " + std::to_string(version) +
                          " but this build reads version " + std::to_string(kCheckpointVersion));
  }
  if (r.u64() != fnv1a(kSchema, std::strlen(kSchema))) {
    throw CheckpointError("checkpoint: schema hash mismatch for format version " + std::to_string(version));
  }
  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a(bytes.data(), bytes.size() - 8) != stored_sum) {
    throw CheckpointError("checkpoint: checksum mismatch (truncated or corrupt file)");
  }

  RunState s;
  try {
    s.config = parse_config(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: embedded config rejected: ") + e.what());
  }
  s.config.model.hierarchy.fidelities = s.config.model_fidelities();
  s.rng.set_state(r.str());
  Rng scratch(0);
  s.model = MfModel(s.config.model, scratch);
  std::vector<Tensor> params = s.model.parameters();
  if (r.count() != params.size()) throw CheckpointError("checkpoint: parameter count does not match the config");
  for (Tensor& p : params) {
    const std::vector<double> v = r.f64s();
    if (v.size() != p.size()) throw CheckpointError("checkpoint: parameter shape does not match the config");
    std::copy(v.begin(), v.end(), p.mutable_values().begin());
  }
  const std::size_t k_count = r.count();
  if (k_count != s.model.fidelities()) throw CheckpointError("checkpoint: fidelity count does not match the config");
  for (std::size_t k = 1; k <= k_count; ++k) {
    Standardizer st;
    st.mean = r.f64();
    st.stddev = r.f64();
    s.model.set_standardizer(k, st);
  }
  const std::size_t d_count = r.count();
  if (d_count != k_count) throw CheckpointError("checkpoint: dataset fidelity count mismatch");
  s.data = MultiFidelityDataset(d_count);
  for (std::size_t k = 1; k <= d_count; ++k) {
    const std::size_t n = r.count();
    for (std::size_t i = 0; i < n; ++i) {
      Sequence x = r.ids();
      const double y = r.f64();
      s.data.add(k, x, y);
    }
  }
  std::vector<QueryRecord> records(r.count());
  for (QueryRecord& q : records) {
    q.sequence = r.str();
    q.fidelity = r.u64();
    q.score = r.f64();
    q.cost = r.f64();
    q.step = r.i64();
    q.phase = r.str();
    q.ok = r.u8() != 0;
    q.error = r.str();
    q.timestamp = r.f64();
  }
  const std::size_t l_count = r.count();
  std::vector<std::int64_t> counts(l_count);
  std::vector<double> spent(l_count);
  for (auto& c : counts) c = r.i64();
  for (auto& v : spent) v = r.f64();
  CostLedger ledger(l_count);
  ledger.restore(std::move(counts), std::move(spent));

  s.k = r.u64();
  s.step = r.i64();
  s.since_retrain = r.u64();
  const std::uint8_t stage = r.u8();
  if (stage > static_cast<std::uint8_t>(RunStage::done)) throw CheckpointError("checkpoint: unknown run stage");
  s.stage = static_cast<RunStage>(stage);
  s.escalations.resize(r.count());
  for (auto& e : s.escalations) e = r.i64();
  s.trainings.resize(r.count());
  for (TrainSummary& t : s.trainings) {
    t.steps = r.u64();
    t.initial_loss = r.f64();
    t.final_loss = r.f64();
    t.restarts = r.u64();
    t.min_kl = r.f64();
    t.min_cross_entropy = r.f64();
  }
  s.finals.resize(r.count());
  for (FinalDesign& f : s.finals) {
    f.sequence = r.ids();
    f.score = r.f64();
    f.ok = r.u8() != 0;
  }
  s.finals_flagged = r.u8() != 0;
  s.regenerations = r.u64();
  s.mutations = r.u64();
  if (r.pos() + 8 != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after the last section");
  if (s.k < 1 || s.k > k_count) throw CheckpointError("checkpoint: fidelity index out of range");

  OracleSuite oracles = make_oracles(s.config);
  oracles.restore(std::move(records), std::move(ledger));
  return ActiveLearner(std::move(s), std::move(oracles));
}

void save_checkpoint(const ActiveLearner& learner, const std::string& path) {
  const std::string bytes = serialize_checkpoint(learner);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ActiveLearner load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace mflal
