#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hwm/data/split.hpp"
#include "hwm/train/checkpoint.hpp"
#include "hwm/train/trainer.hpp"
#include "hwm/util/binio.hpp"
#include "hwm/util/csv.hpp"

using namespace hwm;
using namespace hwm::train;
namespace fs = std::filesystem;

namespace {

data::EnvDataConfig small_ball(std::size_t train = 6) {
  auto cfg = data::desk_config(env::EnvId::Ball);
  cfg.frames = 30;
  cfg.ladder = {1, 2, 4, 8};
  for (auto& [s, n] : cfg.counts) n = s == data::Split::Train ? train : 4;
  return cfg;
}

struct BallData {
  data::SplitData train, val;
  data::NormStats norm;
};

BallData ball_data(std::size_t train = 6) {
  const auto cfg = small_ball(train);
  BallData d;
  d.train = data::generate_in_memory(data::split_spec(cfg, data::Split::Train));
  d.val = data::generate_in_memory(data::split_spec(cfg, data::Split::Val));
  d.norm = data::compute_norm_stats(d.train);
  return d;
}

TrainConfig small_config() {
  TrainConfig c = desk_train_config(env::EnvId::Ball, 0);
  c.arch.hidden = 32;
  c.arch.blocks = 2;
  c.arch.embed_hidden = 16;
  c.ladder = {1, 2, 4, 8};
  c.batch = 16;
  c.samples_per_epoch = 64;
  c.epochs = 4;
  c.opt.lr = 3e-3;
  c.dagger_lambda = 0.0;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("training overfits a single trajectory") {
  auto d = ball_data(1);
  auto cfg = small_config();
  cfg.epochs = 60;
  cfg.patience = 1000;
  const auto r = train::train(cfg, d.train, d.val, d.norm);
  REQUIRE(r.curve.size() == 61);
  CHECK(!r.diverged);
  const double first = *r.curve[1].train_loss;
  const double last = *r.curve.back().train_loss;
  CHECK(last < 0.1 * first);
}

TEST_CASE("equal configs train bitwise-identical checkpoints") {
  auto d = ball_data();
  auto cfg = small_config();
  cfg.dagger_lambda = 0.1;
  const auto a = train::train(cfg, d.train, d.val, d.norm);
  const auto b = train::train(cfg, d.train, d.val, d.norm);
  CHECK(encode_checkpoint(a.best) == encode_checkpoint(b.best));
  CHECK(encode_checkpoint(a.last) == encode_checkpoint(b.last));
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(*a.curve[i].val_mse == *b.curve[i].val_mse);
  CHECK(a.dagger.on_policy == b.dagger.on_policy);
  CHECK(a.dagger.on_policy > 0);

  cfg.seed = 6;
  const auto c = train::train(cfg, d.train, d.val, d.norm);
  CHECK(c.best.weights != a.best.weights);
}

TEST_CASE("curve row 0 is the untrained network and the best checkpoint is the strict minimum") {
  auto d = ball_data();
  auto cfg = small_config();
  cfg.epochs = 8;
  cfg.opt.lr = 2e-2;
  cfg.patience = 2;
  const auto r = train::train(cfg, d.train, d.val, d.norm);
  CHECK(r.curve[0].epoch == 0);
  CHECK(!r.curve[0].train_loss.has_value());
  CHECK(!r.curve[0].sc_loss.has_value());
  REQUIRE(r.curve.size() >= 2);
  int argmin = 1;
  for (std::size_t i = 2; i < r.curve.size(); ++i) {
    if (*r.curve[i].val_mse < *r.curve[static_cast<std::size_t>(argmin)].val_mse) argmin = static_cast<int>(i);
  }
  CHECK(r.best.best_epoch == argmin);
  CHECK(r.best.best_val_mse == *r.curve[static_cast<std::size_t>(argmin)].val_mse);
  if (r.early_stopped) {
    // Stopped exactly `patience` epochs after the best one.
    CHECK(r.curve.back().epoch == argmin + cfg.patience);
  } else {
    CHECK(r.curve.back().epoch == cfg.epochs);
  }
  // The best checkpoint reproduces its logged validation MSE.
  auto model = make_surrogate(r.best);
  const auto val = fixed_pairs(d.val, cfg.ladder, cfg.seed);
  CHECK(normalized_mse(model, val, d.norm) == r.best.best_val_mse);
  CHECK(identity_mse(val, d.norm) == r.identity_val_mse);
}

TEST_CASE("DAgger mask draws lambda * batch elements on average") {
  Rng rng(17);
  const std::size_t batch = 128;
  const int rounds = 2000;
  double total = 0.0;
  for (int r = 0; r < rounds; ++r) {
    const auto m = dagger_mask(batch, 0.1, rng);
    double k = 0.0;
    for (char c : m) k += c;
    total += k;
  }
  const double mean = total / rounds;
  const double sigma = std::sqrt(batch * 0.1 * 0.9 / rounds);
  CHECK(std::abs(mean - 12.8) < 3.0 * sigma);
  for (char c : dagger_mask(batch, 0.0, rng)) CHECK(c == 0);
  for (char c : dagger_mask(batch, 1.0, rng)) CHECK(c == 1);
}

TEST_CASE("DAgger replaces masked elements with solver-labelled on-policy pairs") {
  auto d = ball_data();
  auto cfg = small_config();
  NeuralSurrogate model(nn::Network<float>(cfg.arch, 1), d.norm, cfg.ladder);
  const data::PairSampler sampler(d.train.trajectories, cfg.ladder);
  Rng rng(3);
  TrainBatch b;
  for (int i = 0; i < 8; ++i) {
    const auto hs = sampler.sample(rng);
    b.input.push_back(hs.s0);
    b.target.push_back(hs.sT);
    b.T.push_back(hs.T);
    b.on_policy.push_back(0);
  }
  const auto before = b;
  std::vector<char> mask{1, 0, 1, 0, 0, 0, 0, 1};
  DaggerStats stats;
  dagger_augment(model, d.train.trajectories, sampler, b, mask, rng, stats);
  CHECK(stats.on_policy + stats.aborts == 3);
  for (std::size_t i = 0; i < 8; ++i) {
    if (!mask[i] || !b.on_policy[i]) {
      CHECK(b.input[i] == before.input[i]);
      CHECK(b.target[i] == before.target[i]);
      continue;
    }
    // The target is the reference solver (of the source trajectory) run from
    // the model's own output.
    bool matched = false;
    for (const auto& t : d.train.trajectories) {
      matched = matched || b.target[i] == env::advance(trajectory_params(t), b.input[i], b.T[i]);
    }
    CHECK(matched);
    CHECK(b.input[i] != before.input[i]);
  }
}

TEST_CASE("self-consistency loss is exactly zero for the identity network") {
  auto d = ball_data();
  auto cfg = small_config();
  nn::Network<float> net(cfg.arch, 2);
  net.zero_output_projection();
  NeuralSurrogate model(std::move(net), d.norm, cfg.ladder);
  const auto val = fixed_pairs(d.val, cfg.ladder, 0);
  CHECK(self_consistency_loss(model, val) == 0.0);
  CHECK(identity_probe(model, val) == 0.0);
}

TEST_CASE("self-consistency training logs all three curves and drives L_SC down") {
  auto d = ball_data();
  auto cfg = small_config();
  cfg.mode = LossMode::SelfConsistency;
  cfg.epochs = 6;
  const auto r = train::train(cfg, d.train, d.val, d.norm);
  for (const auto& row : r.curve) {
    CHECK(row.sc_loss.has_value());
    CHECK(row.identity_probe.has_value());
    CHECK(row.val_mse.has_value());
  }
  CHECK(*r.curve.back().sc_loss < *r.curve.front().sc_loss);
  CHECK(r.best.best_epoch == cfg.epochs);
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  CHECK_NOTHROW(validate(cfg, cfg.ladder));
  auto sc = cfg;
  sc.mode = LossMode::SelfConsistency;
  sc.dagger_lambda = 0.1;
  CHECK_THROWS_AS(validate(sc, sc.ladder), std::invalid_argument);
  auto bad_ladder = cfg;
  bad_ladder.ladder = {1, 2, 4, 16};
  CHECK_THROWS_AS(validate(bad_ladder, {1, 2, 4, 8}), std::invalid_argument);
  auto lam = cfg;
  lam.dagger_lambda = 1.5;
  CHECK_THROWS_AS(validate(lam, lam.ladder), std::invalid_argument);
  auto arch = cfg;
  arch.arch.kind = nn::ArchKind::UNet;
  CHECK_THROWS_AS(validate(arch, arch.ladder), std::invalid_argument);
  CHECK(desk_self_consistency_config(env::EnvId::Euler, 64).dagger_lambda == 0.0);
  CHECK_NOTHROW(validate(desk_self_consistency_config(env::EnvId::Euler, 64), {1, 2, 4, 8, 16, 32}));
  CHECK(loss_mode_from_string(to_string(LossMode::SelfConsistency)) == LossMode::SelfConsistency);
  CHECK_THROWS(loss_mode_from_string("shortcut"));

  CHECK(config_hash(cfg) == config_hash(small_config()));
  auto other = cfg;
  other.opt.lr *= 2;
  CHECK(config_hash(cfg) != config_hash(other));
}

TEST_CASE("single-horizon training tags the checkpoint") {
  auto d = ball_data();
  auto cfg = small_config();
  cfg.ladder = {8};
  cfg.epochs = 1;
  const auto r = train::train(cfg, d.train, d.val, d.norm);
  CHECK(r.best.single_horizon);
  CHECK(make_surrogate(r.best).single_horizon());
  CHECK(decode_checkpoint(encode_checkpoint(r.best)).single_horizon);
}

TEST_CASE("checkpoint round trip and mismatch errors") {
  auto d = ball_data();
  auto cfg = small_config();
  cfg.epochs = 1;
  const auto r = train::train(cfg, d.train, d.val, d.norm);
  const auto bytes = encode_checkpoint(r.best);
  const auto back = decode_checkpoint(bytes, env::EnvId::Ball);
  CHECK(back.arch == r.best.arch);
  CHECK(back.ladder == r.best.ladder);
  CHECK(back.norm == r.best.norm);
  CHECK(back.weights == r.best.weights);
  CHECK(back.config_hash == r.best.config_hash);
  CHECK(back.best_val_mse == r.best.best_val_mse);
  CHECK(encode_checkpoint(back) == bytes);

  auto surrogate = make_surrogate(back);
  const auto s = d.val.trajectories[0].frames[3];
  auto original = make_surrogate(r.best);
  CHECK(surrogate.predict(s, 4) == original.predict(s, 4));

  try {
    decode_checkpoint(bytes, env::EnvId::Euler);
    FAIL("expected an env mismatch");
  } catch (const FormatError& e) {
    CHECK(e.code() == FormatErrc::EnvMismatch);
  }
  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x10;
  try {
    decode_checkpoint(corrupt);
    FAIL("expected a checksum mismatch");
  } catch (const FormatError& e) {
    CHECK(e.code() == FormatErrc::ChecksumMismatch);
  }
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);
  auto shortened = bytes;
  shortened.resize(bytes.size() - 9);
  CHECK_THROWS_AS(decode_checkpoint(shortened), FormatError);

  auto wrong = r.best;
  wrong.weights.pop_back();
  CHECK_THROWS_AS(make_network(wrong), std::invalid_argument);
  auto wider = r.best;
  wider.arch.hidden = 48;
  CHECK_THROWS_AS(make_network(wider), std::invalid_argument);
}

TEST_CASE("loss curve CSV has the declared columns and blanks where inapplicable") {
  auto d = ball_data();
  auto cfg = small_config();
  cfg.epochs = 2;
  const auto r = train::train(cfg, d.train, d.val, d.norm);
  const auto path = fs::temp_directory_path() / "hwm_loss_curve.csv";
  write_loss_csv(path, r.curve);
  const auto t = read_csv(path);
  CHECK(t.header == std::vector<std::string>{"epoch", "train_loss", "val_mse", "lr", "sc_loss", "identity_probe"});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0][1].empty());
  CHECK(t.rows[1][4].empty());
  CHECK(std::stod(t.rows[2][2]) == *r.curve[2].val_mse);
  fs::remove(path);
}

TEST_CASE("training refuses mislabelled splits") {
  auto d = ball_data();
  auto cfg = small_config();
  CHECK_THROWS_AS(train::train(cfg, d.val, d.val, d.norm), std::invalid_argument);
  CHECK_THROWS_AS(train::train(cfg, d.train, d.train, d.norm), std::invalid_argument);
}
