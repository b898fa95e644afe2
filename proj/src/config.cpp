#include "mflal/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mflal/errors.hpp"

namespace mflal {
namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were read so that the rest
// can be rejected as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!node_.contains(key)) return;
    seen_.insert(key);
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void read_double(const std::string& key, double& out) {
    if (!node_.contains(key)) return;
    seen_.insert(key);
    out = to_double(node_.at(key), where(key));
  }

  void read_doubles(const std::string& key, std::vector<double>& out) {
    if (!node_.contains(key)) return;
    seen_.insert(key);
    const json& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array");
    out.clear();
    for (const json& e : v) out.push_back(to_double(e, where(key)));
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(node_.at(key), where(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown key");
    }
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  static double to_double(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    }
    throw ConfigError(where + ": expected a number");
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& constraint) {
  if (!ok) throw ConfigError(field + ": " + constraint);
}

json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

ModeSpec ModeSpec::parse(const std::string& name) {
  if (name == "full") return {RunMode::full, 0};
  if (name == "no_likelihood") return {RunMode::no_likelihood, 0};
  if (name == "single_fidelity") return {RunMode::single_fidelity, 0};
  const std::string prefix = "drop_fidelity_";
  if (name.rfind(prefix, 0) == 0) {
    const std::string digits = name.substr(prefix.size());
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
      return {RunMode::drop_fidelity, static_cast<std::size_t>(std::stoul(digits))};
    }
  }
  throw ConfigError("mode: unknown mode \"" + name +
                    "\" (expected full, no_likelihood, single_fidelity or drop_fidelity_<j>)");
}

std::string ModeSpec::name() const {
  switch (mode) {
    case RunMode::full: return "full";
    case RunMode::no_likelihood: return "no_likelihood";
    case RunMode::single_fidelity: return "single_fidelity";
    case RunMode::drop_fidelity: return "drop_fidelity_" + std::to_string(dropped);
  }
  return "full";
}

std::vector<std::size_t> RunConfig::active_fidelities() const {
  const std::size_t k = environment.fidelities();
  std::vector<std::size_t> out;
  switch (mode.mode) {
    case RunMode::single_fidelity: out.push_back(k); break;
    case RunMode::drop_fidelity:
      for (std::size_t j = 1; j <= k; ++j) {
        if (j != mode.dropped) out.push_back(j);
      }
      break;
    default:
      for (std::size_t j = 1; j <= k; ++j) out.push_back(j);
  }
  return out;
}

std::size_t RunConfig::model_fidelities() const { return active_fidelities().size(); }

RunConfig default_config() {
  RunConfig c;
  c.environment.seq_len = 10;
  c.environment.alphabet_size = 12;
  c.model.hierarchy.seq_len = 10;
  c.model.hierarchy.alphabet_size = 12;
  c.model.hierarchy.fidelities = 4;
  c.active.gamma.assign(3, 0.5);
  return c;
}

void validate_config(const RunConfig& c) {
  c.environment.validate();
  const std::size_t k_env = c.environment.fidelities();
  require(c.max_cost > 0.0 && std::isfinite(c.max_cost), "budget.max_cost", "must be a positive number");
  if (c.mode.mode == RunMode::drop_fidelity) {
    require(c.mode.dropped >= 1 && c.mode.dropped < k_env, "mode",
            "drop_fidelity_<j> needs 1 <= j < " + std::to_string(k_env));
  }
  if (k_env == 1) {
    require(c.active.gamma.empty(), "active_learning.gamma", "must be absent with a single fidelity");
  } else {
    require(c.active.gamma.size() == k_env - 1, "active_learning.gamma",
            "needs " + std::to_string(k_env - 1) + " entries");
  }
  for (double g : c.active.gamma) require(g >= 0.0, "active_learning.gamma", "entries must be >= 0");
  require(c.active.n_low >= 1, "active_learning.n_low", "must be positive");
  require(c.active.n_final >= 1, "active_learning.n_final", "must be positive");
  require(c.active.final_attempts >= 1, "active_learning.final_attempts", "must be positive");

  const auto& h = c.model.hierarchy;
  require(h.latent_dim >= 1, "model.latent_dim", "must be positive");
  require(h.hidden_width >= 1, "model.hidden_width", "must be positive");
  require(h.kl_weight >= 0.0, "model.kl_weight", "must be >= 0");
  require(h.sigma_floor > 0.0, "model.sigma_floor", "must be positive");
  require(h.seq_len == c.environment.seq_len && h.alphabet_size == c.environment.alphabet_size, "model",
          "sequence shape must match the environment");
  const auto& s = c.model.svgp;
  require(s.inducing >= 1, "model.svgp.inducing", "must be positive");
  require(s.embed_dim >= 1, "model.svgp.embed_dim", "must be positive");
  require(s.kernel_layers != 1, "model.svgp.kernel_layers", "must be 0 or at least 2");
  require(s.init_scale > 0.0 && s.init_lengthscale > 0.0 && s.init_noise > 0.0, "model.svgp",
          "initial kernel hyperparameters must be positive");

  const auto& g = c.generation;
  require(g.beta >= 0.0, "generation.beta", "must be >= 0");
  require(g.inference_beta >= 0.0, "generation.inference_beta", "must be >= 0");
  require(g.lambda_lik >= 0.0, "generation.lambda_lik", "must be >= 0");
  require(g.lambda_div >= 0.0, "generation.lambda_div", "must be >= 0");
  require(g.batch >= 1, "generation.batch", "must be positive");
  require(g.opt_steps >= 1, "generation.opt_steps", "must be positive");
  require(g.opt_lr > 0.0, "generation.opt_lr", "must be positive");
  require(g.decode_temperature >= 0.0, "generation.decode_temperature", "must be >= 0");

  const auto& t = c.training;
  require(t.learning_rate > 0.0, "training.learning_rate", "must be positive");
  require(t.batch_size >= 1, "training.batch_size", "must be positive");
  require(t.max_steps >= 1, "training.max_steps", "must be positive");
  require(t.window >= 1 && t.eval_every >= 1, "training.window", "window and eval_every must be positive");
  require(t.gp_weight >= 0.0, "training.gp_weight", "must be >= 0");
  require(t.sampling_power >= 0.0, "training.sampling_power", "must be >= 0");
  require(t.retrain_every >= 1, "training.retrain_every", "must be positive");

  if (!c.external.empty()) {
    require(c.external.size() == k_env, "oracles", "needs one entry per environment fidelity");
    for (std::size_t i = 0; i < c.external.size(); ++i) {
      const auto& o = c.external[i];
      const std::string field = "oracles[" + std::to_string(i) + "]";
      require(o.cost > 0.0, field + ".cost", "must be positive");
      require(i == 0 || o.cost > c.external[i - 1].cost, field + ".cost", "must increase with fidelity");
      if (o.kind == OracleKind::external_command) {
        require(o.command.find("{seq}") != std::string::npos, field + ".command",
                "must contain the {seq} placeholder");
        require(o.timeout_secs > 0.0, field + ".timeout_secs", "must be positive");
      }
    }
  }
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON (") + e.what() + ")");
  }
  RunConfig c = default_config();
  Section top(root, "");
  top.read("seed", c.seed);
  if (top.has("mode")) {
    std::string mode;
    top.read("mode", mode);
    c.mode = ModeSpec::parse(mode);
  }
  if (top.has("budget")) {
    Section b = top.child("budget");
    b.read_double("max_cost", c.max_cost);
    b.finish();
  }
  bool gamma_given = false;
  if (top.has("environment")) {
    Section e = top.child("environment");
    if (e.has("seed")) {
      e.read("seed", c.environment.seed);
      c.environment_seed_set = true;
    }
    e.read("seq_len", c.environment.seq_len);
    e.read("alphabet_size", c.environment.alphabet_size);
    e.read_double("unary_scale", c.environment.unary_scale);
    e.read_double("pair_scale", c.environment.pair_scale);
    e.read_doubles("rho", c.environment.rho);
    e.read_doubles("noise", c.environment.noise);
    e.read_doubles("cost", c.environment.cost);
    e.read_doubles("unary", c.environment.unary);
    e.read_doubles("pairwise", c.environment.pairwise);
    e.finish();
  }
  if (top.has("oracles")) {
    const json& list = top.raw("oracles");
    if (!list.is_array()) throw ConfigError("oracles: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section o(list[i], "oracles[" + std::to_string(i) + "]");
      OracleSpec spec;
      spec.fidelity = i + 1;
      std::string kind = "synthetic";
      o.read("kind", kind);
      if (kind == "external_command") spec.kind = OracleKind::external_command;
      else if (kind != "synthetic") throw ConfigError(o.where("kind") + ": expected synthetic or external_command");
      o.read_double("cost", spec.cost);
      o.read("command", spec.command);
      o.read_double("timeout_secs", spec.timeout_secs);
      o.finish();
      c.external.push_back(spec);
    }
  }
  if (top.has("model")) {
    Section m = top.child("model");
    m.read("latent_dim", c.model.hierarchy.latent_dim);
    m.read("hidden_width", c.model.hierarchy.hidden_width);
    m.read_double("kl_weight", c.model.hierarchy.kl_weight);
    m.read_double("sigma_floor", c.model.hierarchy.sigma_floor);
    if (m.has("svgp")) {
      Section s = m.child("svgp");
      s.read("embed_dim", c.model.svgp.embed_dim);
      s.read("kernel_hidden", c.model.svgp.kernel_hidden);
      s.read("kernel_layers", c.model.svgp.kernel_layers);
      s.read("inducing", c.model.svgp.inducing);
      s.read_double("init_scale", c.model.svgp.init_scale);
      s.read_double("init_lengthscale", c.model.svgp.init_lengthscale);
      s.read_double("init_noise", c.model.svgp.init_noise);
      s.finish();
    }
    m.finish();
  }
  if (top.has("generation")) {
    Section g = top.child("generation");
    g.read_double("beta", c.generation.beta);
    g.read_double("inference_beta", c.generation.inference_beta);
    g.read_double("lambda_lik", c.generation.lambda_lik);
    g.read_double("lambda_div", c.generation.lambda_div);
    g.read("batch", c.generation.batch);
    g.read("opt_steps", c.generation.opt_steps);
    g.read_double("opt_lr", c.generation.opt_lr);
    g.read_double("decode_temperature", c.generation.decode_temperature);
    g.finish();
  }
  if (top.has("training")) {
    Section t = top.child("training");
    t.read_double("learning_rate", c.training.learning_rate);
    t.read("batch_size", c.training.batch_size);
    t.read("max_steps", c.training.max_steps);
    t.read("window", c.training.window);
    t.read("eval_every", c.training.eval_every);
    t.read("patience", c.training.patience);
    t.read_double("min_improvement", c.training.min_improvement);
    t.read_double("gp_weight", c.training.gp_weight);
    t.read_double("sampling_power", c.training.sampling_power);
    t.read("retrain_every", c.training.retrain_every);
    t.read("warm_start", c.training.warm_start);
    t.read("warm_max_steps", c.training.warm_max_steps);
    t.finish();
  }
  if (top.has("active_learning")) {
    Section a = top.child("active_learning");
    a.read("n_low", c.active.n_low);
    a.read("n_high", c.active.n_high);
    if (a.has("gamma")) {
      a.read_doubles("gamma", c.active.gamma);
      gamma_given = true;
    }
    a.read("max_regenerate", c.active.max_regenerate);
    a.read("n_final", c.active.n_final);
    a.read("final_attempts", c.active.final_attempts);
    a.finish();
  }
  top.finish();

  const std::size_t k_env = c.environment.fidelities();
  if (!gamma_given) c.active.gamma.assign(k_env > 0 ? k_env - 1 : 0, 0.5);
  c.model.hierarchy.seq_len = c.environment.seq_len;
  c.model.hierarchy.alphabet_size = c.environment.alphabet_size;
  if (!c.environment_seed_set) c.environment.seed = c.seed;
  c.model.hierarchy.fidelities = c.model_fidelities();
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["mode"] = c.mode.name();
  j["budget"] = {{"max_cost", c.max_cost}};
  json env = {{"seed", c.environment.seed},
              {"seq_len", c.environment.seq_len},
              {"alphabet_size", c.environment.alphabet_size},
              {"unary_scale", c.environment.unary_scale},
              {"pair_scale", c.environment.pair_scale},
              {"rho", c.environment.rho},
              {"noise", c.environment.noise},
              {"cost", c.environment.cost}};
  if (!c.environment.unary.empty()) env["unary"] = c.environment.unary;
  if (!c.environment.pairwise.empty()) env["pairwise"] = c.environment.pairwise;
  j["environment"] = env;
  if (!c.external.empty()) {
    json list = json::array();
    for (const auto& o : c.external) {
      json e = {{"kind", o.kind == OracleKind::external_command ? "external_command" : "synthetic"},
                {"cost", o.cost}};
      if (o.kind == OracleKind::external_command) {
        e["command"] = o.command;
        e["timeout_secs"] = o.timeout_secs;
      }
      list.push_back(e);
    }
    j["oracles"] = list;
  }
  const auto& s = c.model.svgp;
  j["model"] = {{"latent_dim", c.model.hierarchy.latent_dim},
                {"hidden_width", c.model.hierarchy.hidden_width},
                {"kl_weight", c.model.hierarchy.kl_weight},
                {"sigma_floor", c.model.hierarchy.sigma_floor},
                {"svgp",
                 {{"embed_dim", s.embed_dim},
                  {"kernel_hidden", s.kernel_hidden},
                  {"kernel_layers", s.kernel_layers},
                  {"inducing", s.inducing},
                  {"init_scale", s.init_scale},
                  {"init_lengthscale", s.init_lengthscale},
                  {"init_noise", s.init_noise}}}};
  const auto& g = c.generation;
  j["generation"] = {{"beta", g.beta},
                     {"inference_beta", g.inference_beta},
                     {"lambda_lik", g.lambda_lik},
                     {"lambda_div", g.lambda_div},
                     {"batch", g.batch},
                     {"opt_steps", g.opt_steps},
                     {"opt_lr", g.opt_lr},
                     {"decode_temperature", g.decode_temperature}};
  const auto& t = c.training;
  j["training"] = {{"learning_rate", t.learning_rate},
                   {"batch_size", t.batch_size},
                   {"max_steps", t.max_steps},
                   {"window", t.window},
                   {"eval_every", t.eval_every},
                   {"patience", t.patience},
                   {"min_improvement", t.min_improvement},
                   {"gp_weight", t.gp_weight},
                   {"sampling_power", t.sampling_power},
                   {"retrain_every", t.retrain_every},
                   {"warm_start", t.warm_start},
                   {"warm_max_steps", t.warm_max_steps}};
  json gamma = json::array();
  for (double v : c.active.gamma) gamma.push_back(number_or_inf(v));
  j["active_learning"] = {{"n_low", c.active.n_low},
                          {"n_high", c.active.n_high},
                          {"gamma", gamma},
                          {"max_regenerate", c.active.max_regenerate},
                          {"n_final", c.active.n_final},
                          {"final_attempts", c.active.final_attempts}};
  return j.dump(2);
}

RunConfig with_overrides(RunConfig c, std::optional<std::uint64_t> seed, std::optional<std::string> mode,
                         std::optional<double> max_cost) {
  if (seed) {
    c.seed = *seed;
    if (!c.environment_seed_set) c.environment.seed = *seed;
  }
  if (mode) c.mode = ModeSpec::parse(*mode);
  if (max_cost) c.max_cost = *max_cost;
  c.model.hierarchy.fidelities = c.model_fidelities();
  validate_config(c);
  return c;
}

OracleSuite make_oracles(const RunConfig& c) {
  const std::vector<std::size_t> active = c.active_fidelities();
  std::vector<OracleSpec> specs;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const std::size_t src = active[i];
    OracleSpec spec = c.external.empty()
                          ? OracleSpec{src, c.environment.cost.at(src - 1), OracleKind::synthetic, {}, 60.0}
                          : c.external.at(src - 1);
    spec.fidelity = i + 1;
    specs.push_back(spec);
  }
  return OracleSuite(c.environment, std::move(specs), active, Alphabet::standard(c.environment.alphabet_size));
}

}  // namespace mflal
