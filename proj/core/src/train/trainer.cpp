#include "hwm/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "arch_json.hpp"
#include "hwm/nn/ops.hpp"
#include "hwm/util/csv.hpp"

namespace hwm::train {

using nlohmann::json;

std::string to_string(LossMode m) { return m == LossMode::Supervised ? "supervised" : "self-consistency"; }

LossMode loss_mode_from_string(const std::string& name) {
  if (name == "supervised") return LossMode::Supervised;
  if (name == "self-consistency") return LossMode::SelfConsistency;
  throw std::invalid_argument("unknown loss mode '" + name + "' (supervised, self-consistency)");
}

void validate(const TrainConfig& cfg, const std::vector<int>& data_ladder) {
  data::validate_ladder(cfg.ladder);
  for (int T : cfg.ladder) {
    if (std::find(data_ladder.begin(), data_ladder.end(), T) == data_ladder.end()) {
      throw std::invalid_argument("training horizon " + std::to_string(T) + " is not in the data ladder");
    }
  }
  if (!(cfg.dagger_lambda >= 0.0 && cfg.dagger_lambda <= 1.0)) {
    throw std::invalid_argument("DAgger weight must lie in [0, 1]");
  }
  if (cfg.mode == LossMode::SelfConsistency) {
    if (cfg.dagger_lambda > 0.0) throw std::invalid_argument("self-consistency training excludes DAgger (lambda > 0)");
    const bool any = std::any_of(cfg.ladder.begin(), cfg.ladder.end(), [&](int T) {
      return T % 2 == 0 && std::find(cfg.ladder.begin(), cfg.ladder.end(), T / 2) != cfg.ladder.end();
    });
    if (!any) throw std::invalid_argument("self-consistency training needs a horizon whose half is in the ladder");
  }
  if (cfg.batch == 0 || cfg.samples_per_epoch == 0 || cfg.epochs < 1) {
    throw std::invalid_argument("batch, samples per epoch and epochs must be positive");
  }
  if (cfg.patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(cfg.opt.lr > 0.0) || cfg.opt.weight_decay < 0.0 || !(cfg.opt.clip_norm > 0.0)) {
    throw std::invalid_argument("optimizer needs lr > 0, weight decay >= 0, clip > 0");
  }
  if (cfg.warmup_epochs < 0 || cfg.warmup_epochs >= cfg.epochs) {
    throw std::invalid_argument("warmup epochs must be in [0, epochs)");
  }
  const auto shape = cfg.arch.state_shape();
  if (cfg.env == env::EnvId::Ball && cfg.arch.kind != nn::ArchKind::FilmMlp) {
    throw std::invalid_argument("ball surrogates use the FiLM-MLP backbone");
  }
  if (cfg.env != env::EnvId::Ball && cfg.arch.kind != nn::ArchKind::UNet) {
    throw std::invalid_argument("field surrogates use the U-Net backbone");
  }
  (void)shape;
}

std::string config_hash(const TrainConfig& cfg) {
  const json j{{"env", env::to_string(cfg.env)},
               {"arch", detail::arch_json(cfg.arch)},
               {"ladder", cfg.ladder},
               {"batch", cfg.batch},
               {"samples_per_epoch", cfg.samples_per_epoch},
               {"epochs", cfg.epochs},
               {"lr", cfg.opt.lr},
               {"weight_decay", cfg.opt.weight_decay},
               {"clip_norm", cfg.opt.clip_norm},
               {"beta1", cfg.opt.beta1},
               {"beta2", cfg.opt.beta2},
               {"eps", cfg.opt.eps},
               {"warmup_epochs", cfg.warmup_epochs},
               {"dagger_lambda", cfg.dagger_lambda},
               {"dagger_start_epoch", cfg.dagger_start_epoch},
               {"patience", cfg.patience},
               {"seed", cfg.seed},
               {"mode", to_string(cfg.mode)}};
  // FNV-1a over the canonical (sorted-key) dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nn::Architecture default_architecture(env::EnvId env, std::size_t grid) {
  nn::Architecture a;
  if (env == env::EnvId::Ball) {
    a.kind = nn::ArchKind::FilmMlp;
    a.channels = 9;
    a.hidden = 256;
    a.blocks = 4;
    return a;
  }
  a.kind = nn::ArchKind::UNet;
  a.channels = env == env::EnvId::Euler ? 4 : 2;
  a.height = a.width = grid;
  a.base_channels = 16;
  a.multipliers = {1, 2};
  return a;
}

TrainConfig paper_train_config(env::EnvId env, std::size_t grid) {
  TrainConfig c;
  c.env = env;
  c.arch = default_architecture(env, grid);
  c.ladder = {1, 2, 4, 8, 16, 32, 64};
  c.opt.weight_decay = 1e-4;
  c.opt.clip_norm = 1.0;
  c.dagger_lambda = 0.1;
  c.patience = 15;
  switch (env) {
    case env::EnvId::Oregonator:
      c.arch.base_channels = 48;
      c.arch.multipliers = {1, 2, 4, 4};
      c.opt.lr = 2e-4;
      c.warmup_epochs = 3;
      c.batch = 8;
      c.samples_per_epoch = 5000;
      c.epochs = 60;
      break;
    case env::EnvId::Euler:
      c.arch.base_channels = 48;
      c.arch.multipliers = {1, 2, 4, 4};
      c.opt.lr = 2e-4;
      c.warmup_epochs = 0;
      c.batch = 8;
      c.samples_per_epoch = 2000;
      c.epochs = 40;
      break;
    case env::EnvId::Ball:
      c.opt.lr = 3e-4;
      c.warmup_epochs = 0;
      c.batch = 128;
      c.samples_per_epoch = 25600;
      c.epochs = 80;
      break;
  }
  return c;
}

TrainConfig desk_train_config(env::EnvId env, std::size_t grid) {
  TrainConfig c = paper_train_config(env, grid);
  c.arch = default_architecture(env, grid);
  switch (env) {
    case env::EnvId::Oregonator:
      c.samples_per_epoch = 640;
      c.epochs = 20;
      c.warmup_epochs = 1;
      c.opt.lr = 1e-3;
      break;
    case env::EnvId::Euler:
      c.ladder = {1, 2, 4, 8, 16, 32};
      c.samples_per_epoch = 640;
      c.epochs = 20;
      c.opt.lr = 1e-3;
      break;
    case env::EnvId::Ball:
      c.ladder = {1, 2, 4, 8, 16, 32};
      c.samples_per_epoch = 6400;
      c.epochs = 30;
      c.opt.lr = 1e-3;
      break;
  }
  return c;
}

TrainConfig desk_self_consistency_config(env::EnvId env, std::size_t grid) {
  TrainConfig c = desk_train_config(env, grid);
  c.mode = LossMode::SelfConsistency;
  c.dagger_lambda = 0.0;
  // Each step costs three forward passes; the collapse completes within a few epochs.
  c.samples_per_epoch = env == env::EnvId::Ball ? 2048 : 96;
  c.warmup_epochs = 0;
  return c;
}

PairSet fixed_pairs(const data::SplitData& split, const std::vector<int>& horizons, std::uint64_t base_seed) {
  PairSet p;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& t = split.trajectories[i];
    for (int T : horizons) {
      const std::size_t start = data::eval_start(base_seed, split.seeds[i], T, t.length());
      p.s0.push_back(t.frames[start]);
      p.sT.push_back(t.frames[start + T]);
      p.T.push_back(T);
      p.traj.push_back(i);
      p.start.push_back(start);
    }
  }
  return p;
}

namespace {

double mean_sq(const env::State& a, const env::State& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double horizon_average(const PairSet& pairs, const std::vector<double>& per_pair) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    acc[pairs.T[i]].first += per_pair[i];
    acc[pairs.T[i]].second += 1;
  }
  double total = 0.0;
  for (const auto& [T, a] : acc) total += a.first / static_cast<double>(a.second);
  return acc.empty() ? 0.0 : total / static_cast<double>(acc.size());
}

std::vector<env::State> normalize_all(const std::vector<env::State>& states, const data::NormStats& norm) {
  std::vector<env::State> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(norm.normalize(s));
  return out;
}

}  // namespace

double normalized_mse(Predictor& model, const PairSet& pairs, const data::NormStats& norm) {
  if (pairs.size() == 0) throw std::invalid_argument("no evaluation pairs");
  const auto pred = model.predict(pairs.s0, pairs.T);
  std::vector<double> per(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) per[i] = mean_sq(norm.normalize(pred[i]), norm.normalize(pairs.sT[i]));
  return horizon_average(pairs, per);
}

double identity_mse(const PairSet& pairs, const data::NormStats& norm) {
  IdentityPredictor id;
  return normalized_mse(id, pairs, norm);
}

double self_consistency_loss(NeuralSurrogate& model, const PairSet& pairs) {
  std::vector<nn::Tensor<float>> z;
  std::vector<int> T, half;
  std::vector<env::State> inputs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int t = pairs.T[i];
    if (t % 2 != 0 || !model.supports(t / 2)) continue;
    inputs.push_back(model.norm().normalize(pairs.s0[i]));
    T.push_back(t);
    half.push_back(t / 2);
  }
  if (inputs.empty()) throw std::invalid_argument("no pair admits a half-horizon");
  const auto zb = stack(inputs);
  const auto a = model.predict_normalized(zb, T);
  const auto b = model.predict_normalized(model.predict_normalized(zb, half), half);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - b[k];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double identity_probe(NeuralSurrogate& model, const PairSet& pairs) {
  const auto zs = normalize_all(pairs.s0, model.norm());
  const auto zb = stack(zs);
  const auto out = model.predict_normalized(zb, pairs.T);
  const std::size_t row = zb.size() / pairs.size();
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i * row; k < (i + 1) * row; ++k) {
      const double d = static_cast<double>(out[k]) - zb[k];
      s += d * d;
    }
    total += std::sqrt(s / static_cast<double>(row));
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<char> dagger_mask(std::size_t batch, double lambda, Rng& rng) {
  std::vector<char> m(batch, 0);
  if (lambda <= 0.0) return m;
  for (auto& v : m) v = lambda >= 1.0 ? 1 : rng.bernoulli(lambda);
  return m;
}

void dagger_augment(NeuralSurrogate& model, const std::vector<env::Trajectory>& trajs,
                    const data::PairSampler& sampler, TrainBatch& batch, const std::vector<char>& mask, Rng& rng,
                    DaggerStats& stats) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) slots.push_back(i);
  if (slots.empty()) return;
  std::vector<data::PairIndex> src;
  std::vector<env::State> s0;
  std::vector<int> T1;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    src.push_back(sampler.draw(rng));
    s0.push_back(trajs[src.back().traj].frames[src.back().start]);
    T1.push_back(src.back().T);
  }
  const auto visited = model.predict(s0, T1);
  const auto& ladder = sampler.ladder();
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const int T2 = ladder[rng.below(ladder.size())];
    const auto& traj = trajs[src[k].traj];
    try {
      if (!visited[k].all_finite()) throw env::SolverError("non-finite surrogate state");
      auto target = env::advance(trajectory_params(traj), visited[k], T2);
      const std::size_t i = slots[k];
      batch.input[i] = visited[k];
      batch.target[i] = std::move(target);
      batch.T[i] = T2;
      batch.on_policy[i] = 1;
      ++stats.on_policy;
    } catch (const env::SolverError&) {
      ++stats.aborts;
    }
  }
}

namespace {

Checkpoint snapshot(const TrainConfig& cfg, const std::string& hash, nn::Network<float>& net,
                    const data::NormStats& norm, double val, int epoch) {
  Checkpoint c;
  c.arch = cfg.arch;
  c.env = cfg.env;
  c.ladder = cfg.ladder;
  c.single_horizon = cfg.ladder.size() == 1;
  c.config_hash = hash;
  c.best_val_mse = val;
  c.best_epoch = epoch;
  c.norm = norm;
  c.weights = net.params().flatten();
  return c;
}

std::vector<int> sc_horizons(const std::vector<int>& ladder) {
  std::vector<int> out;
  for (int T : ladder)
    if (T % 2 == 0 && std::find(ladder.begin(), ladder.end(), T / 2) != ladder.end()) out.push_back(T);
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const data::SplitData& train_split, const data::SplitData& val_split,
                  const data::NormStats& norm, const ProgressFn& progress) {
  validate(cfg, cfg.ladder);
  if (train_split.split != data::Split::Train) throw std::invalid_argument("training data must be the train split");
  if (val_split.split != data::Split::Val) throw std::invalid_argument("validation data must be the val split");
  if (train_split.env != cfg.env || val_split.env != cfg.env) throw std::invalid_argument("dataset env differs from config");

  const std::string hash = config_hash(cfg);
  NeuralSurrogate model(nn::Network<float>(cfg.arch, derive_seed(cfg.seed, 0x696e6974ULL)), norm, cfg.ladder,
                        cfg.ladder.size() == 1);
  auto& net = model.network();
  nn::AdamW opt(net.params(), cfg.opt);
  const nn::LrSchedule sched{cfg.opt.lr, cfg.warmup_epochs, cfg.epochs};

  const data::PairSampler sampler(train_split.trajectories, cfg.ladder);
  Rng batch_rng(derive_seed(cfg.seed, 1));
  Rng dagger_rng(derive_seed(cfg.seed, 2));
  const auto sc_T = sc_horizons(cfg.ladder);

  const PairSet val = fixed_pairs(val_split, cfg.ladder, cfg.seed);
  const bool sc = cfg.mode == LossMode::SelfConsistency;

  TrainResult res;
  res.identity_val_mse = identity_mse(val, norm);

  auto evaluate = [&](EpochLog& log) {
    log.val_mse = normalized_mse(model, val, norm);
    if (sc) {
      log.sc_loss = self_consistency_loss(model, val);
      log.identity_probe = identity_probe(model, val);
    }
  };

  EpochLog init;
  init.epoch = 0;
  evaluate(init);
  res.curve.push_back(init);
  if (progress) progress(init);
  res.best = snapshot(cfg, hash, net, norm, *init.val_mse, 0);

  const std::size_t steps = (cfg.samples_per_epoch + cfg.batch - 1) / cfg.batch;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    const double lr = nn::lr_at(epoch, sched);
    opt.set_lr(lr);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      TrainBatch b;
      b.input.resize(cfg.batch);
      b.target.resize(cfg.batch);
      b.T.resize(cfg.batch);
      b.on_policy.assign(cfg.batch, 0);
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        auto idx = sampler.draw(batch_rng);
        if (sc) {
          idx.T = sc_T[batch_rng.below(sc_T.size())];
          idx.start = batch_rng.below(train_split.trajectories[idx.traj].length() - static_cast<std::size_t>(idx.T));
        }
        const auto hs = sampler.at(idx);
        b.input[i] = hs.s0;
        b.target[i] = hs.sT;
        b.T[i] = hs.T;
      }
      if (!sc && cfg.dagger_lambda > 0.0 && epoch >= cfg.dagger_start_epoch) {
        const auto mask = dagger_mask(cfg.batch, cfg.dagger_lambda, dagger_rng);
        dagger_augment(model, train_split.trajectories, sampler, b, mask, dagger_rng, res.dagger);
      }

      try {
        nn::Graph<float> g;
        const auto x = g.input(stack(normalize_all(b.input, norm)));
        nn::Var<float> loss;
        if (sc) {
          std::vector<int> half(b.T.size());
          for (std::size_t i = 0; i < half.size(); ++i) half[i] = b.T[i] / 2;
          const auto full = net.forward(g, x, b.T);
          const auto mid = net.forward(g, x, half);
          const auto chained = net.forward(g, mid, half);
          loss = nn::mse(full, chained);
        } else {
          const auto y = net.forward(g, x, b.T);
          loss = nn::mse(y, g.input(stack(normalize_all(b.target, norm))));
        }
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) throw nn::NonFiniteError("non-finite loss");
        g.backward(loss);
        const auto grads = g.gradients(net.params());
        if (!opt.step(net.params(), grads.grads)) throw nn::NonFiniteError("non-finite gradient");
        loss_sum += lv;
        ++loss_n;
      } catch (const nn::NonFiniteError& e) {
        res.diverged = true;
        res.message = "epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step) + ": " + e.what();
        break;
      }
    }
    if (res.diverged) break;

    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_n, 1));
    log.lr = lr;
    evaluate(log);
    res.curve.push_back(log);
    if (progress) progress(log);

    if (!std::isfinite(*log.val_mse)) {
      res.diverged = true;
      res.message = "epoch " + std::to_string(epoch + 1) + ": non-finite validation MSE";
      break;
    }
    if (sc) {
      // Self-consistency runs document the collapse; keep the final weights.
      res.best = snapshot(cfg, hash, net, norm, *log.val_mse, log.epoch);
      continue;
    }
    if (*log.val_mse < res.best.best_val_mse || res.best.best_epoch == 0) {
      res.best = snapshot(cfg, hash, net, norm, *log.val_mse, log.epoch);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  res.last = snapshot(cfg, hash, net, norm, res.curve.back().val_mse.value_or(0.0), res.curve.back().epoch);
  return res;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& curve) {
  CsvTable t;
  t.header = {"epoch", "train_loss", "val_mse", "lr", "sc_loss", "identity_probe"};
  for (const auto& e : curve) {
    t.add({std::to_string(e.epoch), fmt_double(e.train_loss), fmt_double(e.val_mse), fmt_double(e.lr),
           fmt_double(e.sc_loss), fmt_double(e.identity_probe)});
  }
  write_csv(path, t);
}

}  // namespace hwm::train
