#include "commands.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "hwm/deploy/deploy.hpp"
#include "hwm/eval/bench.hpp"
#include "hwm/eval/experiments.hpp"
#include "hwm/eval/metrics.hpp"
#include "hwm/eval/render.hpp"
#include "hwm/trust/table.hpp"
#include "hwm/util/binio.hpp"
#include "hwm/util/csv.hpp"
#include "hwm_version.hpp"
#include "json.hpp"

namespace hwm::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string version_stamp() { return std::string("hwm ") + kVersion + " (" + kGitRevision + ")"; }

DirLock::DirLock(const fs::path& dir) : path_(dir / ".hwm.lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      (void)!::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw std::runtime_error("cannot create lock " + path_.string());
    long owner = 0;
    std::ifstream(path_) >> owner;
    if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno != ESRCH)) {
      throw std::runtime_error("output directory is locked by process " + std::to_string(owner) + " (" +
                               path_.string() + ")");
    }
    std::error_code ec;
    fs::remove(path_, ec);
  }
  throw std::runtime_error("cannot acquire lock " + path_.string());
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

void note(const std::string& msg) { std::cerr << "hwm: " << msg << "\n"; }

std::string hex(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::uint32_t crc_text(const std::string& s) {
  return crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

/// Change detector over configuration text and input files.
std::string digest(const std::vector<std::string>& texts, const std::vector<fs::path>& files) {
  std::string d;
  for (const auto& t : texts) d += hex(crc_text(t));
  for (const auto& f : files) d += "-" + hex(crc32(read_file(f)));
  return d;
}

/// The named top-level sections of the resolved config, for digests.
std::string sections(const RunConfig& c, std::initializer_list<const char*> keys) {
  const auto all = nlohmann::json::parse(to_json(c));
  nlohmann::json pick;
  for (const char* k : keys) pick[k] = all.at(k);
  return pick.dump();
}

void prepare(const fs::path& dir, const RunConfig& c) {
  fs::create_directories(dir);
  write_text_atomic(dir / "resolved_config.json", to_json(c));
  write_text_atomic(dir / "VERSION", version_stamp() + "\n");
}

bool up_to_date(const fs::path& dir, const std::string& dig, const std::vector<fs::path>& outputs) {
  std::ifstream in(dir / "stamp.txt");
  std::string have;
  if (!(in >> have) || have != dig) return false;
  return std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
}

void stamp(const fs::path& dir, const std::string& dig) { write_text_atomic(dir / "stamp.txt", dig + "\n"); }

fs::path manifest(const Layout& out, data::Split s) { return out.data() / data::to_string(s) / data::kManifestName; }

data::SplitData need_split(const RunConfig& c, const Layout& out, data::Split s) {
  if (!fs::exists(manifest(out, s))) {
    throw MissingPrerequisite("data split '" + data::to_string(s) + "' not found under " + out.data().string() +
                              "; run `hwm gen` first");
  }
  return data::load_split(out.data() / data::to_string(s), c.data.env);
}

train::Checkpoint need_checkpoint(const RunConfig& c, const fs::path& p) {
  if (!fs::exists(p)) throw MissingPrerequisite("checkpoint " + p.string() + " not found; run `hwm train` first");
  return train::read_checkpoint(p, c.data.env);
}

std::vector<trust::TrustRow> need_table(const Layout& out, data::Split s) {
  const auto p = out.trust_table(s);
  if (!fs::exists(p)) throw MissingPrerequisite("trust table " + p.string() + " not found; run `hwm trust` first");
  return trust::read_trust_csv(p);
}

bool has(const std::vector<std::string>& v, const std::string& x) { return std::find(v.begin(), v.end(), x) != v.end(); }

std::vector<int> with(std::vector<int> v, int x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  std::sort(v.begin(), v.end());
  return v;
}

void write_json(const fs::path& p, const ordered_json& j) { write_text_atomic(p, j.dump(2) + "\n"); }

ordered_json log_json(const train::TrainResult& r) {
  ordered_json j;
  j["best_epoch"] = r.best.best_epoch;
  j["best_val_mse"] = r.best.best_val_mse;
  j["identity_val_mse"] = r.identity_val_mse;
  j["epochs_run"] = r.curve.empty() ? 0 : r.curve.back().epoch;
  j["early_stopped"] = r.early_stopped;
  j["diverged"] = r.diverged;
  j["dagger_on_policy"] = r.dagger.on_policy;
  j["dagger_aborts"] = r.dagger.aborts;
  j["config_hash"] = r.best.config_hash;
  return j;
}

train::TrainResult run_training(const train::TrainConfig& tc, const data::SplitData& tr, const data::SplitData& va,
                                const data::NormStats& norm, const std::string& tag) {
  auto progress = [&](const train::EpochLog& e) {
    std::ostringstream s;
    s << tag << " epoch " << e.epoch;
    if (e.train_loss) s << " loss " << *e.train_loss;
    if (e.val_mse) s << " val " << *e.val_mse;
    if (e.sc_loss) s << " sc " << *e.sc_loss;
    note(s.str());
  };
  auto r = train::train(tc, tr, va, norm, progress);
  if (r.diverged) throw std::runtime_error(tag + ": training diverged (" + r.message + ")");
  return r;
}

}  // namespace

void cmd_gen(const RunConfig& c, const Layout& out) {
  prepare(out.data(), c);
  const auto reports = data::generate_dataset(c.data, out.data(), c.threads);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    note("gen " + data::to_string(data::kAllSplits[i]) + ": " + std::to_string(r.generated) + " generated, " +
         std::to_string(r.skipped) + " reused, " + std::to_string(r.failed) + " failed");
    failed += r.failed;
  }
  if (failed > 0) note(std::to_string(failed) + " trajectories aborted; see the manifests");
}

void cmd_train(const RunConfig& c, const Layout& out) {
  const auto tr = need_split(c, out, data::Split::Train);
  const auto va = need_split(c, out, data::Split::Val);
  const auto tc = effective_train(c);
  const int members = has(c.trust.methods, trust::method::kEnsemble) ? c.ensemble : 1;
  std::vector<fs::path> outputs{out.checkpoint(), out.train() / "loss.csv"};
  for (int k = 1; k < members; ++k) outputs.push_back(out.member(k));
  const auto dig = digest({train::config_hash(tc), std::to_string(members)},
                          {manifest(out, data::Split::Train), manifest(out, data::Split::Val)});
  if (up_to_date(out.train(), dig, outputs)) {
    note("train: up to date");
    return;
  }
  prepare(out.train(), c);
  const auto norm = data::compute_norm_stats(tr);
  for (const auto& w : norm.warnings) note("normalisation: " + w);

  ordered_json summary;
  for (int k = 0; k < members; ++k) {
    auto tk = tc;
    if (k > 0) tk.seed = derive_seed(c.seed, 0x656e73, static_cast<std::uint64_t>(k));
    const std::string tag = k == 0 ? "model" : "member " + std::to_string(k);
    const auto r = run_training(tk, tr, va, norm, tag);
    train::write_checkpoint(r.best, k == 0 ? out.checkpoint() : out.member(k));
    train::write_loss_csv(out.train() / (k == 0 ? "loss.csv" : "loss_member_" + std::to_string(k) + ".csv"), r.curve);
    summary[k == 0 ? "model" : "member_" + std::to_string(k)] = log_json(r);
  }
  write_json(out.train() / "summary.json", summary);
  stamp(out.train(), dig);
}

void cmd_trust(const RunConfig& c, const Layout& out) {
  const auto ck = need_checkpoint(c, out.checkpoint());
  auto model = train::make_surrogate(ck);

  auto methods = c.trust.methods;
  if (!has(methods, c.deploy.method)) methods.push_back(c.deploy.method);
  std::vector<int> horizons = with(c.trust_horizons(), c.deploy.horizon);
  if (model.single_horizon()) {
    // A single-horizon surrogate answers one horizon and has no probe.
    horizons = ck.ladder;
    std::erase(methods, std::string(trust::method::kStepDoubling));
    note("trust: single-horizon checkpoint, step-doubling skipped");
  }
  if (has(methods, trust::method::kEnsemble) && c.ensemble < 2) {
    std::erase(methods, std::string(trust::method::kEnsemble));
    note("trust: ensemble needs train.ensemble >= 2, skipped");
  }

  std::vector<fs::path> inputs{out.checkpoint(), manifest(out, data::Split::Val), manifest(out, data::Split::Test),
                               manifest(out, data::Split::OodNear), manifest(out, data::Split::OodFar)};
  std::vector<train::NeuralSurrogate> members;
  if (has(methods, trust::method::kEnsemble)) {
    for (int k = 1; k < c.ensemble; ++k) {
      members.push_back(train::make_surrogate(need_checkpoint(c, out.member(k))));
      inputs.push_back(out.member(k));
    }
  }
  std::vector<fs::path> outputs;
  for (auto s : {data::Split::Val, data::Split::Test, data::Split::OodNear, data::Split::OodFar})
    outputs.push_back(out.trust_table(s));
  const auto dig = digest({sections(c, {"seed", "trust", "deploy"})}, inputs);
  if (up_to_date(out.trust(), dig, outputs)) {
    note("trust: up to date");
    return;
  }

  const auto va = need_split(c, out, data::Split::Val);
  prepare(out.trust(), c);

  trust::ScoringContext ctx;
  ctx.model = &model;
  for (auto& m : members) ctx.ensemble.push_back(&m);
  ctx.tta = c.trust.tta;
  ctx.richardson_order = c.trust.richardson_order;
  ctx.seed = c.seed;
  std::optional<trust::ErrorHead> head;
  if (has(methods, trust::method::kErrorHead)) {
    const auto tr = need_split(c, out, data::Split::Train);
    auto opts = c.trust.head;
    opts.seed = derive_seed(c.seed, 0x68656164);
    head = trust::train_error_head(model, tr, horizons, ck.norm, c.seed, opts);
    ctx.head = &*head;
    note("trust: error head fitted, final loss " + fmt_double(head->final_loss()));
  }
  std::optional<trust::ConformalScorer> conformal;
  if (has(methods, trust::method::kConformal)) {
    conformal = trust::calibrate_conformal(model, va, horizons, ck.norm, c.seed, c.trust.conformal_k);
    for (const auto& w : conformal->warnings()) note("conformal: " + w);
    ctx.conformal = &*conformal;
  }

  // Validation only feeds the deployment gate.
  trust::write_trust_csv(out.trust_table(data::Split::Val), trust::score_split(ctx, va, horizons, {c.deploy.method}));
  for (auto s : {data::Split::Test, data::Split::OodNear, data::Split::OodFar}) {
    const auto split = need_split(c, out, s);
    const auto rows = trust::score_split(ctx, split, horizons, methods);
    trust::write_trust_csv(out.trust_table(s), rows);
    note("trust " + data::to_string(s) + ": " + std::to_string(rows.size()) + " rows");
  }
  stamp(out.trust(), dig);
}

namespace {

std::vector<double> scores_for(const std::vector<trust::TrustRow>& rows, const std::string& method, int T,
                               const std::vector<std::uint64_t>& ids, bool true_error) {
  std::map<std::uint64_t, double> by_id;
  for (const auto& r : rows)
    if (r.method == method && r.horizon == T) by_id[r.traj_id] = true_error ? r.true_rmse : r.score;
  if (ids.empty()) {
    std::vector<double> all;
    for (const auto& [id, v] : by_id) all.push_back(v);
    return all;
  }
  std::vector<double> out;
  for (auto id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end())
      throw ValidationFailure("trust table has no " + method + " score for trajectory " + std::to_string(id) +
                              " at h=" + std::to_string(T) + "; rerun `hwm trust`");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

void cmd_deploy(const RunConfig& c, const Layout& out) {
  const auto val_rows = need_table(out, data::Split::Val);
  const auto test_rows = need_table(out, data::Split::Test);
  const auto ck = need_checkpoint(c, out.checkpoint());
  auto model = train::make_surrogate(ck);
  const auto test = need_split(c, out, data::Split::Test);
  prepare(out.deploy(), c);

  const int T = c.deploy.horizon;
  const auto& method = c.deploy.method;
  const auto batch = deploy::make_batch(test, T, c.seed);
  const auto val_scores = scores_for(val_rows, method, T, {}, false);
  if (val_scores.empty()) throw ValidationFailure("validation trust table has no " + method + " rows at h=" + std::to_string(T));
  const auto scores = scores_for(test_rows, method, T, batch.traj_id, false);

  const auto gate = deploy::calibrate_gate(val_scores, data::Split::Val, c.deploy.q_main, T);
  const auto m1 = deploy::run_mode1(model, batch);
  const auto m2 = deploy::run_mode2(model, batch, scores, gate);
  deploy::write_deployment_csv(out.deploy() / "deployment.csv", m2.rows);

  std::vector<double> err1;
  for (const auto& r : m1.rows) err1.push_back(r.rmse_mode1);
  const auto random = deploy::random_deferral(err1, c.deploy.q_main, c.deploy.resamples, c.seed);
  const auto sweep = deploy::q_sweep(model, batch, scores, val_scores, c.deploy.q, c.deploy.resamples, c.seed);
  deploy::write_q_sweep_csv(out.deploy() / "q_sweep.csv", sweep);
  // Scores equal to the true error: the best any trust signal could do.
  const auto val_err = scores_for(val_rows, method, T, {}, true);
  const auto oracle = deploy::q_sweep(model, batch, err1, val_err, c.deploy.q, c.deploy.resamples, c.seed);
  deploy::write_q_sweep_csv(out.deploy() / "q_sweep_oracle.csv", oracle);

  ordered_json s;
  s["env"] = env::to_string(c.data.env);
  s["horizon"] = T;
  s["method"] = method;
  s["q"] = gate.q;
  s["tau"] = gate.tau;
  s["n"] = batch.size();
  s["kept"] = m2.kept;
  s["deferred"] = m2.deferred;
  s["failed"] = m2.failed;
  s["deferral_fraction"] = m2.deferral_fraction();
  s["rmse_mode1"] = m2.rmse_mode1;
  s["rmse_mode2"] = m2.rmse_mode2;
  s["reduction"] = m2.reduction();
  s["floor"] = deploy::random_floor(gate.q);
  s["random_mean"] = random.mean;
  s["random_std"] = random.std;
  write_json(out.deploy() / "summary.json", s);
  write_json(out.deploy() / "timing.json", {{"mode1_seconds", m1.mode1_seconds}, {"mode2_seconds", m2.mode2_seconds}});
  note("deploy h=" + std::to_string(T) + " q=" + fmt_double(gate.q) + ": RMSE " + fmt_double(m2.rmse_mode1) + " -> " +
       fmt_double(m2.rmse_mode2) + " (reduction " + fmt_double(m2.reduction()) + ", random " + fmt_double(random.mean) +
       ")");
}

void cmd_eval(const RunConfig& c, const Layout& out) {
  std::vector<std::vector<trust::TrustRow>> tables;
  tables.push_back(need_table(out, data::Split::Test));
  for (auto s : {data::Split::OodNear, data::Split::OodFar})
    if (fs::exists(out.trust_table(s))) tables.push_back(need_table(out, s));
  const auto ck = need_checkpoint(c, out.checkpoint());
  auto model = train::make_surrogate(ck);
  const auto test = need_split(c, out, data::Split::Test);
  prepare(out.eval(), c);

  eval::CellOptions opts;
  opts.pct = c.eval.percentile;
  opts.resamples = c.eval.resamples;
  opts.level = c.eval.level;
  opts.seed = c.seed;
  const auto env_name = env::to_string(c.data.env);
  std::vector<eval::EvalCell> cells;
  for (const auto& rows : tables) {
    const auto part = eval::eval_cells(env_name, rows, opts);
    cells.insert(cells.end(), part.begin(), part.end());
  }
  eval::write_eval_csv(out.eval() / "eval_cells.csv", cells);
  note("eval: " + std::to_string(cells.size()) + " cells");

  const int h = c.eval.closed_loop_horizon;
  if (!model.supports(h)) throw ConfigError("eval.closed_loop_horizon " + std::to_string(h) + " is not a model horizon");
  const auto points = eval::closed_loop(model, test, h, c.eval.closed_loop_k, c.seed);
  eval::write_closed_loop_csv(out.eval() / "closed_loop.csv", env_name, h, points);

  if (c.eval.beyond_tmax && !model.single_horizon()) {
    std::vector<int> hs;
    for (int x : eval::extrapolated_horizons(ck.ladder.back()))
      if (x % 2 == 0 && static_cast<std::size_t>(x) < test.trajectories.front().length()) hs.push_back(x);
    const auto beyond = eval::beyond_tmax(model, test, hs, c.seed, opts);
    eval::write_eval_csv(out.eval() / "beyond_tmax.csv", beyond);
  }
}

void cmd_bench(const RunConfig& c, const Layout& out) {
  const auto ck = need_checkpoint(c, out.checkpoint());
  auto model = train::make_surrogate(ck);
  const auto test = need_split(c, out, data::Split::Test);
  prepare(out.bench(), c);
  // Evaluation-start states rather than initial conditions, whose stiff transients are unrepresentative.
  const auto pairs = train::fixed_pairs(test, {1}, c.seed);
  const std::vector<env::State> states(pairs.s0.begin(),
                                       pairs.s0.begin() + static_cast<std::ptrdiff_t>(std::min(c.bench.states, pairs.size())));
  eval::BenchOptions o;
  o.repeats = c.bench.repeats;
  o.warmup = c.bench.warmup;
  o.threads = static_cast<int>(c.threads);
  const auto records = eval::bench_walltime(model, train::trajectory_params(test.trajectories[pairs.traj[0]]), states,
                                            c.bench.horizons, o);
  for (const auto& r : records) {
    try {
      eval::validate(r);
    } catch (const std::exception& e) {
      throw ValidationFailure(e.what());
    }
    note("bench h=" + std::to_string(r.horizon) + ": surrogate " + fmt_double(r.surrogate_seconds) + " s, solver " +
         fmt_double(r.solver_seconds) + " s, speedup " + fmt_double(r.speedup));
  }
  eval::write_bench_csv(out.bench() / "bench.csv", records);
}

void cmd_render(const RunConfig& c, const Layout& out) {
  if (c.data.env == env::EnvId::Ball) throw ConfigError("render needs a spatial environment; the ball state has no map");
  const auto ck = need_checkpoint(c, out.checkpoint());
  auto model = train::make_surrogate(ck);
  const auto split = need_split(c, out, c.render.split);
  prepare(out.render(), c);
  const int T = c.render.horizon;
  const auto pairs = train::fixed_pairs(split, {T}, c.seed);
  const std::size_t n = std::min(c.render.count, pairs.size());
  const std::vector<env::State> s0(pairs.s0.begin(), pairs.s0.begin() + static_cast<std::ptrdiff_t>(n));
  const auto maps = trust::step_doubling(model, ck.norm, s0, T);
  const auto pred = model.predict(s0, std::vector<int>(n, T));
  for (std::size_t i = 0; i < n; ++i) {
    const auto err = trust::normalized_distance(pred[i], pairs.sT[i], ck.norm, T);
    const std::string stem = "traj_" + std::to_string(split.seeds[pairs.traj[i]]) + "_h" + std::to_string(T);
    eval::render_shared({maps[i].cells, err.cells}, maps[i].height, maps[i].width,
                        {out.render() / (stem + "_ehat.pgm"), out.render() / (stem + "_abs_err.pgm")},
                        out.render() / (stem + ".scale.txt"));
  }
  note("render: " + std::to_string(n) + " map pairs");
}

void cmd_ablate(const RunConfig& c, const Layout& out) {
  if (c.train_mode != TrainMode::Supervised) throw ConfigError("ablate sweeps the DAgger weight of supervised training");
  const auto tr = need_split(c, out, data::Split::Train);
  const auto va = need_split(c, out, data::Split::Val);
  const auto test = need_split(c, out, data::Split::Test);
  prepare(out.ablate(), c);
  const auto norm = data::compute_norm_stats(tr);
  const int T = c.deploy.horizon;

  CsvTable table;
  table.header = {"lambda", "best_epoch", "best_val_mse", "test_mse", "sd_auroc", "sd_ci_lo", "sd_ci_hi", "closed_loop_rmse"};
  for (double lambda : c.ablate_lambdas) {
    auto tc = effective_train(c);
    tc.dagger_lambda = lambda;
    char name[32];
    std::snprintf(name, sizeof name, "lambda_%g", lambda);
    const auto dir = out.ablate() / name;
    const auto dig = digest({train::config_hash(tc)}, {manifest(out, data::Split::Train), manifest(out, data::Split::Val)});
    if (!up_to_date(dir, dig, {dir / "model.ckpt"})) {
      fs::create_directories(dir);
      const auto r = run_training(tc, tr, va, norm, "lambda " + fmt_double(lambda));
      train::write_checkpoint(r.best, dir / "model.ckpt");
      train::write_loss_csv(dir / "loss.csv", r.curve);
      stamp(dir, dig);
    }
    const auto ck = train::read_checkpoint(dir / "model.ckpt", c.data.env);
    auto model = train::make_surrogate(ck);
    const auto pairs = train::fixed_pairs(test, ck.ladder, c.seed);
    const double test_mse = train::normalized_mse(model, pairs, ck.norm);

    trust::ScoringContext ctx;
    ctx.model = &model;
    ctx.seed = c.seed;
    const auto rows = trust::score_split(ctx, test, {T}, {trust::method::kStepDoubling});
    eval::CellOptions opts;
    opts.pct = c.eval.percentile;
    opts.resamples = c.eval.resamples;
    opts.level = c.eval.level;
    opts.seed = c.seed;
    const auto cells = eval::eval_cells(env::to_string(c.data.env), rows, opts);
    const auto loop = eval::closed_loop(model, test, c.eval.closed_loop_horizon, c.eval.closed_loop_k, c.seed);
    table.add({fmt_double(lambda), std::to_string(ck.best_epoch), fmt_double(ck.best_val_mse), fmt_double(test_mse),
               cells.empty() ? "" : fmt_double(cells[0].auroc), cells.empty() ? "" : fmt_double(cells[0].ci_lo),
               cells.empty() ? "" : fmt_double(cells[0].ci_hi), fmt_double(loop.back().rmse)});
    note("ablate lambda=" + fmt_double(lambda) + ": val " + fmt_double(ck.best_val_mse) + ", test " + fmt_double(test_mse));
  }
  write_csv(out.ablate() / "ablate.csv", table);
}

}  // namespace hwm::cli
