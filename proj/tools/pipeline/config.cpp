#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hwm::cli {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Profile p) { return p == Profile::Desk ? "desk" : "paper"; }

Profile profile_from_string(const std::string& name) {
  if (name == "desk") return Profile::Desk;
  if (name == "paper") return Profile::Paper;
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Supervised: return "supervised";
    case TrainMode::SelfConsistency: return "self-consistency";
    case TrainMode::SingleHorizon: return "single-horizon";
  }
  return "?";
}

namespace {

TrainMode train_mode_from_string(const std::string& name) {
  for (auto m : {TrainMode::Supervised, TrainMode::SelfConsistency, TrainMode::SingleHorizon})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown train mode '" + name + "'");
}

/// Reads keys from one JSON object and remembers which were seen, so that
/// anything left over can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + "expected a boolean");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + "expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + "expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(where(key) + "expected a number");
      }
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + "wrong type");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + (path_.empty() ? "" : path_ + ".") + it.key() + "'");
  }

 private:
  std::string where(const char* key = nullptr) const {
    std::string p = path_;
    if (key) p = p.empty() ? key : p + "." + key;
    return p.empty() ? std::string() : p + ": ";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::size_t grid_of(const env::EnvParams& p) {
  if (const auto* o = std::get_if<env::OregonatorParams>(&p)) return o->grid;
  if (const auto* e = std::get_if<env::EulerParams>(&p)) return e->grid;
  return 1;
}

void set_grid(RunConfig& c, std::size_t grid) {
  c.grid = grid;
  if (auto* o = std::get_if<env::OregonatorParams>(&c.data.solver)) o->grid = grid;
  if (auto* e = std::get_if<env::EulerParams>(&c.data.solver)) e->grid = grid;
  c.train.arch.height = c.train.arch.width = grid;
}

void read_env(Section s, RunConfig& c) {
  std::string name;
  s.get("name", name);
  if (s.has("grid")) {
    std::size_t grid = 0;
    s.get("grid", grid);
    if (c.data.env == env::EnvId::Ball && grid != 1) throw ConfigError("env.grid: the ball state has no grid");
    if (c.data.env != env::EnvId::Ball && grid < 8) throw ConfigError("env.grid: must be at least 8");
    set_grid(c, grid);
  }
  s.get("frames", c.data.frames);
  if (s.has("params")) {
    Section p = s.sub("params");
    auto list = env::to_param_list(c.data.solver);
    for (auto& [k, v] : list) p.get(k.c_str(), v);
    p.finish();
    c.data.solver = env::params_from_list(c.data.env, list, c.grid);
  }
  s.finish();
}

void read_data(Section s, RunConfig& c) {
  if (s.has("counts")) {
    Section counts = s.sub("counts");
    for (auto split : data::kAllSplits) counts.get(data::to_string(split).c_str(), c.data.counts[split]);
    counts.finish();
  }
  s.get("ladder", c.data.ladder);
  s.finish();
}

void read_train(Section s, RunConfig& c) {
  auto& t = c.train;
  std::string mode = to_string(c.train_mode);
  s.get("mode", mode);
  c.train_mode = train_mode_from_string(mode);
  s.get("single_horizon", c.single_horizon);
  s.get("ensemble", c.ensemble);
  s.get("batch", t.batch);
  s.get("samples_per_epoch", t.samples_per_epoch);
  s.get("epochs", t.epochs);
  s.get("warmup_epochs", t.warmup_epochs);
  s.get("dagger_lambda", t.dagger_lambda);
  s.get("dagger_start_epoch", t.dagger_start_epoch);
  s.get("patience", t.patience);
  s.get("lr", t.opt.lr);
  s.get("weight_decay", t.opt.weight_decay);
  s.get("clip_norm", t.opt.clip_norm);
  if (s.has("arch")) {
    Section a = s.sub("arch");
    a.get("hidden", t.arch.hidden);
    a.get("blocks", t.arch.blocks);
    a.get("base_channels", t.arch.base_channels);
    a.get("multipliers", t.arch.multipliers);
    a.get("embed_hidden", t.arch.embed_hidden);
    a.get("output_init_scale", t.arch.output_init_scale);
    a.finish();
  }
  s.finish();
}

void read_trust(Section s, RunConfig& c) {
  auto& t = c.trust;
  s.get("methods", t.methods);
  s.get("horizons", t.horizons);
  s.get("tta_replicas", t.tta.replicas);
  s.get("tta_sigma", t.tta.sigma);
  s.get("conformal_k", t.conformal_k);
  s.get("head_hidden", t.head.hidden);
  s.get("head_epochs", t.head.epochs);
  s.get("head_lr", t.head.lr);
  if (s.has("richardson_order")) {
    const json& v = s.raw("richardson_order");
    if (v.is_null()) {
      t.richardson_order.reset();
    } else if (v.is_number_integer()) {
      t.richardson_order = v.get<int>();
    } else {
      throw ConfigError("trust.richardson_order: expected an integer or null");
    }
  }
  s.finish();
}

void read_deploy(Section s, RunConfig& c) {
  s.get("q", c.deploy.q);
  s.get("q_main", c.deploy.q_main);
  s.get("horizon", c.deploy.horizon);
  s.get("method", c.deploy.method);
  s.get("resamples", c.deploy.resamples);
  s.finish();
}

void read_eval(Section s, RunConfig& c) {
  s.get("percentile", c.eval.percentile);
  s.get("resamples", c.eval.resamples);
  s.get("level", c.eval.level);
  s.get("closed_loop_horizon", c.eval.closed_loop_horizon);
  s.get("closed_loop_k", c.eval.closed_loop_k);
  s.get("beyond_tmax", c.eval.beyond_tmax);
  s.finish();
}

void read_bench(Section s, RunConfig& c) {
  s.get("repeats", c.bench.repeats);
  s.get("warmup", c.bench.warmup);
  s.get("horizons", c.bench.horizons);
  s.get("states", c.bench.states);
  s.finish();
}

void read_render(Section s, RunConfig& c) {
  s.get("horizon", c.render.horizon);
  s.get("count", c.render.count);
  std::string split = data::to_string(c.render.split);
  s.get("split", split);
  try {
    c.render.split = data::split_from_string(split);
  } catch (const std::exception&) {
    throw ConfigError("render.split: unknown split '" + split + "'");
  }
  s.finish();
}

}  // namespace

std::vector<int> RunConfig::trust_horizons() const {
  if (!trust.horizons.empty()) return trust.horizons;
  std::vector<int> out;
  for (int T : data.ladder)
    if (T % 2 == 0 && std::find(data.ladder.begin(), data.ladder.end(), T / 2) != data.ladder.end()) out.push_back(T);
  return out;
}

RunConfig profile_defaults(Profile p, env::EnvId env) {
  RunConfig c;
  c.profile = p;
  c.data = p == Profile::Desk ? data::desk_config(env) : data::paper_config(env);
  c.grid = grid_of(c.data.solver);
  c.train = p == Profile::Desk ? train::desk_train_config(env, c.grid) : train::paper_train_config(env, c.grid);
  c.trust.methods = trust::all_methods();
  if (env == env::EnvId::Ball) c.bench.states = 64;
  return c;
}

RunConfig parse_config(const std::string& json_text, const Overrides& ov) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  // Profile and environment pick the defaults the rest of the file overlays.
  Profile profile = Profile::Desk;
  if (doc.contains("profile")) {
    if (!doc["profile"].is_string()) throw ConfigError("profile: expected a string");
    profile = profile_from_string(doc["profile"].get<std::string>());
  }
  if (ov.profile) profile = *ov.profile;
  env::EnvId env = env::EnvId::Ball;
  if (doc.contains("env") && doc["env"].is_object() && doc["env"].contains("name")) {
    const auto& n = doc["env"]["name"];
    if (!n.is_string()) throw ConfigError("env.name: expected a string");
    try {
      env = env::env_from_string(n.get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError("env.name: unknown environment '" + n.get<std::string>() + "'");
    }
  }

  RunConfig c = profile_defaults(profile, env);
  Section root(doc, "");
  std::string ignored;
  root.get("profile", ignored);
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  if (root.has("env")) read_env(root.sub("env"), c);
  if (root.has("data")) read_data(root.sub("data"), c);
  if (root.has("train")) read_train(root.sub("train"), c);
  if (root.has("trust")) read_trust(root.sub("trust"), c);
  if (root.has("deploy")) read_deploy(root.sub("deploy"), c);
  if (root.has("eval")) read_eval(root.sub("eval"), c);
  if (root.has("bench")) read_bench(root.sub("bench"), c);
  if (root.has("render")) read_render(root.sub("render"), c);
  if (root.has("ablate")) {
    Section a = root.sub("ablate");
    a.get("lambdas", c.ablate_lambdas);
    a.finish();
  }
  root.finish();

  if (ov.seed) c.seed = *ov.seed;
  if (ov.threads) c.threads = *ov.threads;
  c.data.seed = c.seed;
  c.train.seed = c.seed;
  c.train.env = env;
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path, const Overrides& ov) {
  if (path.empty()) return parse_config("{}", ov);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), ov);
}

std::string to_json(const RunConfig& c) {
  ordered_json j;
  j["profile"] = to_string(c.profile);
  j["seed"] = c.seed;
  j["threads"] = c.threads;

  ordered_json e;
  e["name"] = env::to_string(c.data.env);
  e["grid"] = c.grid;
  e["frames"] = c.data.frames;
  ordered_json params = ordered_json::object();
  for (const auto& [k, v] : env::to_param_list(c.data.solver)) params[k] = v;
  e["params"] = params;
  j["env"] = e;

  ordered_json counts = ordered_json::object();
  for (auto split : data::kAllSplits) counts[data::to_string(split)] = c.data.counts.at(split);
  j["data"] = {{"counts", counts}, {"ladder", c.data.ladder}};

  const auto& t = c.train;
  ordered_json arch;
  arch["hidden"] = t.arch.hidden;
  arch["blocks"] = t.arch.blocks;
  arch["base_channels"] = t.arch.base_channels;
  arch["multipliers"] = t.arch.multipliers;
  arch["embed_hidden"] = t.arch.embed_hidden;
  arch["output_init_scale"] = t.arch.output_init_scale;
  ordered_json tr;
  tr["mode"] = to_string(c.train_mode);
  tr["single_horizon"] = c.single_horizon;
  tr["ensemble"] = c.ensemble;
  tr["batch"] = t.batch;
  tr["samples_per_epoch"] = t.samples_per_epoch;
  tr["epochs"] = t.epochs;
  tr["warmup_epochs"] = t.warmup_epochs;
  tr["dagger_lambda"] = t.dagger_lambda;
  tr["dagger_start_epoch"] = t.dagger_start_epoch;
  tr["patience"] = t.patience;
  tr["lr"] = t.opt.lr;
  tr["weight_decay"] = t.opt.weight_decay;
  tr["clip_norm"] = t.opt.clip_norm;
  tr["arch"] = arch;
  j["train"] = tr;

  ordered_json ts;
  ts["methods"] = c.trust.methods;
  ts["horizons"] = c.trust.horizons;
  ts["tta_replicas"] = c.trust.tta.replicas;
  ts["tta_sigma"] = c.trust.tta.sigma;
  ts["conformal_k"] = c.trust.conformal_k;
  ts["head_hidden"] = c.trust.head.hidden;
  ts["head_epochs"] = c.trust.head.epochs;
  ts["head_lr"] = c.trust.head.lr;
  ts["richardson_order"] = c.trust.richardson_order ? ordered_json(*c.trust.richardson_order) : ordered_json(nullptr);
  j["trust"] = ts;

  j["deploy"] = {{"q", c.deploy.q},
                 {"q_main", c.deploy.q_main},
                 {"horizon", c.deploy.horizon},
                 {"method", c.deploy.method},
                 {"resamples", c.deploy.resamples}};
  j["eval"] = {{"percentile", c.eval.percentile},
               {"resamples", c.eval.resamples},
               {"level", c.eval.level},
               {"closed_loop_horizon", c.eval.closed_loop_horizon},
               {"closed_loop_k", c.eval.closed_loop_k},
               {"beyond_tmax", c.eval.beyond_tmax}};
  j["bench"] = {{"repeats", c.bench.repeats},
                {"warmup", c.bench.warmup},
                {"horizons", c.bench.horizons},
                {"states", c.bench.states}};
  j["render"] = {{"horizon", c.render.horizon}, {"count", c.render.count}, {"split", data::to_string(c.render.split)}};
  j["ablate"] = {{"lambdas", c.ablate_lambdas}};
  return j.dump(2) + "\n";
}

namespace {

bool in(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

train::TrainConfig effective_train(const RunConfig& c) {
  auto t = c.train;
  t.env = c.data.env;
  t.seed = c.seed;
  t.ladder = c.train_mode == TrainMode::SingleHorizon ? std::vector<int>{c.single_horizon} : c.data.ladder;
  t.mode = c.train_mode == TrainMode::SelfConsistency ? train::LossMode::SelfConsistency : train::LossMode::Supervised;
  return t;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  try {
    env::validate(c.data.solver);
    data::validate_ladder(c.data.ladder);
    for (auto split : data::kAllSplits) {
      const auto spec = data::split_spec(c.data, split);
      if (spec.count == 0) fail("data.counts." + data::to_string(split) + " must be positive");
      data::validate(spec);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    fail(std::string("env/data: ") + e.what());
  }
  if (c.data.frames <= c.data.ladder.back()) fail("env.frames must exceed the largest ladder horizon");
  if (c.threads < 1) fail("threads must be >= 1");
  if (c.ensemble < 1) fail("train.ensemble must be >= 1");
  if (c.train_mode == TrainMode::SingleHorizon && !in(c.data.ladder, c.single_horizon))
    fail("train.single_horizon must be a data ladder horizon");
  try {
    train::validate(effective_train(c), c.data.ladder);
  } catch (const std::exception& e) {
    fail(std::string("train: ") + e.what());
  }

  for (const auto& m : c.trust.methods) {
    const auto& all = trust::all_methods();
    if (std::find(all.begin(), all.end(), m) == all.end()) fail("trust.methods: unknown method '" + m + "'");
  }
  for (int T : c.trust.horizons)
    if (T < 1 || T >= c.data.frames) fail("trust.horizons: " + std::to_string(T) + " outside the trajectory length");
  if (c.trust.tta.replicas < 2 || c.trust.tta.sigma < 0.0) fail("trust: tta needs >= 2 replicas and sigma >= 0");
  if (c.trust.conformal_k < 1) fail("trust.conformal_k must be >= 1");
  if (c.trust.richardson_order && *c.trust.richardson_order < 1) fail("trust.richardson_order must be >= 1");

  if (c.deploy.q.empty() || !std::is_sorted(c.deploy.q.begin(), c.deploy.q.end())) fail("deploy.q must be sorted and non-empty");
  for (double q : c.deploy.q)
    if (!(q >= 0.0 && q <= 1.0)) fail("deploy.q values must lie in [0, 1]");
  if (!(c.deploy.q_main >= 0.0 && c.deploy.q_main <= 1.0)) fail("deploy.q_main must lie in [0, 1]");
  if (!in(c.data.ladder, c.deploy.horizon)) fail("deploy.horizon must be a ladder horizon");
  if (c.deploy.resamples < 1) fail("deploy.resamples must be >= 1");

  if (!(c.eval.percentile >= 0.0 && c.eval.percentile <= 100.0)) fail("eval.percentile must lie in [0, 100]");
  if (c.eval.resamples < 1 || !(c.eval.level > 0.0 && c.eval.level < 1.0)) fail("eval: resamples >= 1, level in (0, 1)");
  if (c.eval.closed_loop_k.empty()) fail("eval.closed_loop_k must not be empty");
  const int kmax = *std::max_element(c.eval.closed_loop_k.begin(), c.eval.closed_loop_k.end());
  if (c.eval.closed_loop_horizon < 1 || kmax < 1 || kmax * c.eval.closed_loop_horizon >= c.data.frames)
    fail("eval: closed-loop k * horizon must stay inside the trajectory");

  if (c.bench.repeats < 1 || c.bench.warmup < 0 || c.bench.states < 1) fail("bench: repeats >= 1, warmup >= 0, states >= 1");
  for (int T : c.bench.horizons)
    if (T < 1) fail("bench.horizons must be positive");
  if (c.render.count < 1 || c.render.horizon < 2) fail("render: count >= 1, horizon >= 2");
  for (double l : c.ablate_lambdas)
    if (!(l >= 0.0 && l <= 1.0)) fail("ablate.lambdas must lie in [0, 1]");
}

}  // namespace hwm::cli
