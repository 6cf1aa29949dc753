#include <cmath>

#include "doctest.h"
#include "hwm/data/split.hpp"
#include "hwm/trust/baselines.hpp"
#include "hwm/trust/step_doubling.hpp"
#include "hwm/trust/table.hpp"

using namespace hwm;
using namespace hwm::trust;

namespace {

data::NormStats unit_norm(std::size_t c) { return {std::vector<double>(c, 0.0), std::vector<double>(c, 1.0), {}}; }

/// f(s, T) = s + c T^2: the semigroup gap is c T^2 / 2 per element.
class QuadraticDrift : public train::Predictor {
 public:
  explicit QuadraticDrift(double c) : c_(c) {}
  using Predictor::predict;
  std::vector<env::State> predict(std::span<const env::State> states, std::span<const int> horizons) override {
    ++passes_;
    std::vector<env::State> out;
    for (std::size_t i = 0; i < states.size(); ++i) {
      env::State s = states[i];
      for (auto& v : s.data()) v += static_cast<float>(c_ * horizons[i] * horizons[i]);
      out.push_back(std::move(s));
    }
    return out;
  }
  bool supports(int T) const override { return T >= 1; }

 private:
  double c_;
};

/// Adds a fixed offset; used as ensemble members with known spread.
class Offset : public train::Predictor {
 public:
  explicit Offset(float d) : d_(d) {}
  using Predictor::predict;
  std::vector<env::State> predict(std::span<const env::State> states, std::span<const int>) override {
    ++passes_;
    std::vector<env::State> out(states.begin(), states.end());
    for (auto& s : out)
      for (auto& v : s.data()) v += d_;
    return out;
  }
  bool supports(int T) const override { return T >= 1; }

 private:
  float d_;
};

nn::Architecture tiny_unet(std::size_t c = 2, std::size_t hw = 8) {
  nn::Architecture a;
  a.kind = nn::ArchKind::UNet;
  a.channels = c;
  a.height = a.width = hw;
  a.base_channels = 4;
  a.multipliers = {1, 2};
  a.embed_hidden = 16;
  return a;
}

nn::Architecture tiny_mlp() {
  nn::Architecture a;
  a.kind = nn::ArchKind::FilmMlp;
  a.channels = 9;
  a.hidden = 16;
  a.blocks = 2;
  a.embed_hidden = 16;
  return a;
}

env::State random_field(std::size_t c, std::size_t hw, std::uint64_t seed, double scale = 1.0, double offset = 0.0) {
  Rng rng(seed);
  env::State s({c, hw, hw});
  for (auto& v : s.data()) v = static_cast<float>(offset + scale * rng.normal());
  return s;
}

data::EnvDataConfig small_euler() {
  auto cfg = data::desk_config(env::EnvId::Euler);
  std::get<env::EulerParams>(cfg.solver).grid = 16;
  cfg.frames = 24;
  cfg.ladder = {1, 2, 4, 8};
  for (auto& [s, n] : cfg.counts) n = 8;
  return cfg;
}

data::EnvDataConfig small_ball() {
  auto cfg = data::desk_config(env::EnvId::Ball);
  cfg.frames = 24;
  cfg.ladder = {1, 2, 4, 8};
  for (auto& [s, n] : cfg.counts) n = 12;
  return cfg;
}

}  // namespace

TEST_CASE("step-doubling is exactly zero for the reference solver wrapper") {
  env::EulerParams p;
  p.grid = 16;
  const auto spec = data::split_spec(small_euler(), data::Split::Test);
  const auto traj = data::generate_trajectory(data::sample_params(spec, 0), 4);
  const auto params = train::trajectory_params(traj);
  train::SolverPredictor solver(params);
  const auto norm = unit_norm(4);
  for (int T : {2, 4, 8}) {
    const auto m = step_doubling(solver, norm, traj.frames[0], T);
    CHECK(m.spatial());
    for (double v : m.cells) CHECK(v == 0.0);
  }

  train::SolverPredictor ball(env::BallParams{});
  const auto bt = data::generate_trajectory(data::sample_params(data::split_spec(small_ball(), data::Split::Test), 1), 2);
  const auto mb = step_doubling(ball, unit_norm(9), bt.frames[0], 16);
  CHECK(!mb.spatial());
  CHECK(mb.cells.size() == 1);
  CHECK(mb.cells[0] == 0.0);
}

TEST_CASE("step-doubling is exactly zero for the identity network") {
  nn::Network<float> unet(tiny_unet(), 5);
  unet.zero_output_projection();
  data::NormStats norm{{0.3, -1.0}, {2.0, 0.5}, {}};
  train::NeuralSurrogate model(std::move(unet), norm, {1, 2, 4, 8});
  const auto s = random_field(2, 8, 11);
  for (int T : {2, 4, 8}) {
    for (double v : step_doubling(model, norm, s, T).cells) CHECK(v == 0.0);
  }
  CHECK(train::IdentityPredictor().single_horizon() == false);
  train::IdentityPredictor id;
  for (double v : step_doubling(id, norm, s, 8).cells) CHECK(v == 0.0);
}

TEST_CASE("step-doubling on a hand-solvable drift model") {
  const double c = 0.01;
  QuadraticDrift f(c);
  data::NormStats norm{{0.0, 0.0}, {2.0, 4.0}, {}};
  const env::State s({2, 3, 3}, std::vector<float>(18, 0.25f));
  for (int T : {2, 4, 8}) {
    const auto m = step_doubling(f, norm, s, T);
    // gap g = c T^2 / 2 on every element; cell value = g sqrt(1/4 + 1/16).
    const double expect = c * T * T / 2.0 * std::sqrt(0.25 + 1.0 / 16.0);
    CHECK(m.cells.size() == 9);
    for (double v : m.cells) CHECK(v == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("step-doubling issues exactly three predictor calls per batch") {
  QuadraticDrift f(0.1);
  std::vector<env::State> batch(17, env::State({9}, std::vector<float>(9, 1.0f)));
  for (int T : {2, 8, 32}) {
    f.reset_passes();
    const auto maps = step_doubling(f, unit_norm(9), batch, T);
    CHECK(maps.size() == batch.size());
    CHECK(f.passes() == 3);
  }
}

TEST_CASE("invalid horizons and single-horizon refusal") {
  nn::Network<float> net(tiny_mlp(), 1);
  train::NeuralSurrogate model(std::move(net), unit_norm(9), {1, 2, 4, 8});
  const env::State s({9}, std::vector<float>(9, 0.5f));
  CHECK_THROWS_AS(step_doubling(model, unit_norm(9), s, 1), InvalidHorizon);
  CHECK_THROWS_AS(step_doubling(model, unit_norm(9), s, 6), InvalidHorizon);
  CHECK_THROWS_AS(step_doubling(model, unit_norm(9), s, 16), InvalidHorizon);
  CHECK_THROWS_AS(step_doubling(model, unit_norm(9), s, 0), InvalidHorizon);
  CHECK_NOTHROW(step_doubling(model, unit_norm(9), s, 16, {.allow_outside_ladder = true}));
  CHECK_THROWS_AS(step_doubling(model, unit_norm(9), s, 15, {.allow_outside_ladder = true}), InvalidHorizon);

  // Missing half rung.
  nn::Network<float> net2(tiny_mlp(), 1);
  train::NeuralSurrogate gappy(std::move(net2), unit_norm(9), {1, 8});
  CHECK_THROWS_AS(step_doubling(gappy, unit_norm(9), s, 8), InvalidHorizon);

  nn::Network<float> net3(tiny_mlp(), 1);
  train::NeuralSurrogate single(std::move(net3), unit_norm(9), {8}, true);
  CHECK_THROWS_AS(step_doubling(single, unit_norm(9), s, 8), ProbeRefused);
  // Refusal wins over horizon validity.
  CHECK_THROWS_AS(check_probe(single, 3), ProbeRefused);
}

TEST_CASE("aggregate is the spatial mean") {
  ErrorMap m{{1.0, 2.0, 3.0, 6.0}, 2, 2, 4};
  CHECK(aggregate(m) == 3.0);
  ErrorMap scalar{{0.7}, 1, 1, 2};
  CHECK(aggregate(scalar) == 0.7);
  CHECK_THROWS(aggregate(ErrorMap{}));
}

TEST_CASE("step-doubling in raw space matches the normalised-space computation") {
  nn::Network<float> unet(tiny_unet(), 9);
  data::NormStats norm{{1.5, -0.2}, {3.0, 0.1}, {}};
  train::NeuralSurrogate model(std::move(unet), norm, {1, 2, 4, 8});
  const auto s = norm.denormalize(random_field(2, 8, 4));
  const int T = 8;
  const auto m = step_doubling(model, norm, s, T);

  const auto z = norm.normalize(s);
  auto zb = train::stack(std::span<const env::State>(&z, 1));
  const int full[1] = {T}, half[1] = {T / 2};
  const auto a = model.predict_normalized(zb, full);
  const auto b = model.predict_normalized(model.predict_normalized(zb, half), half);
  for (std::size_t cell = 0; cell < 64; ++cell) {
    double d2 = 0.0;
    for (std::size_t ch = 0; ch < 2; ++ch) {
      const double d = static_cast<double>(a[ch * 64 + cell]) - b[ch * 64 + cell];
      d2 += d * d;
    }
    CHECK(std::abs(m.cells[cell] - std::sqrt(d2)) < 1e-5 * (1.0 + std::sqrt(d2)));
  }
}

TEST_CASE("ensemble spread has the closed form of constant offsets") {
  Offset a(0.0f), b(1.0f), c(2.0f);
  std::vector<train::Predictor*> members{&a, &b, &c};
  data::NormStats norm{{0.0, 0.0}, {2.0, 2.0}, {}};
  std::vector<env::State> states{random_field(2, 4, 1), random_field(2, 4, 2)};
  const auto s = ensemble_scores(members, norm, states, 4);
  // population var of {0,1,2} = 2/3 per channel, / std^2 = 1/6; two channels.
  for (double v : s) CHECK(v == doctest::Approx(std::sqrt(2.0 / 6.0)).epsilon(1e-6));
  CHECK(a.passes() == 1);

  Offset same(0.0f);
  std::vector<train::Predictor*> twins{&a, &same};
  for (double v : ensemble_scores(twins, norm, states, 4)) CHECK(v == 0.0);
  std::vector<train::Predictor*> lone{&a};
  CHECK_THROWS(ensemble_scores(lone, norm, states, 4));
}

TEST_CASE("TTA is zero without noise and linear in sigma for a linear model") {
  train::IdentityPredictor id;
  const auto norm = unit_norm(2);
  const auto s = random_field(2, 8, 3);
  Rng r0(5);
  CHECK(tta_score(id, norm, s, 4, {8, 0.0}, r0) == 0.0);
  Rng r1(5), r2(5);
  const double one = tta_score(id, norm, s, 4, {8, 0.01}, r1);
  const double two = tta_score(id, norm, s, 4, {8, 0.02}, r2);
  CHECK(one > 0.0);
  CHECK(two / one == doctest::Approx(2.0).epsilon(1e-3));
  Rng r3(5);
  CHECK(tta_score(id, norm, s, 4, {8, 0.01}, r3) == one);
  CHECK_THROWS(tta_score(id, norm, s, 4, {1, 0.01}, r3));
}

TEST_CASE("gradient magnitude of a unit step is 1/W and is undefined for the ball") {
  const std::size_t H = 6, W = 10;
  env::State s({1, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) s[y * W + x] = x >= 5 ? 1.0f : 0.0f;
  CHECK(grad_mag_score(s, unit_norm(1)) == doctest::Approx(1.0 / W));
  const env::State flat({1, H, W}, std::vector<float>(H * W, 3.0f));
  CHECK(grad_mag_score(flat, unit_norm(1)) == 0.0);
  CHECK_THROWS_AS(grad_mag_score(env::State({9}), unit_norm(9)), NotApplicable);
}

TEST_CASE("error head fits a constant and a separable target") {
  std::vector<env::State> states;
  std::vector<int> T;
  std::vector<double> constant, split;
  for (int i = 0; i < 40; ++i) {
    states.push_back(random_field(1, 4, 100 + i, 1.0, i % 2 == 0 ? -2.0 : 2.0));
    T.push_back(i % 3 == 0 ? 2 : 8);
    constant.push_back(0.5);
    split.push_back(i % 2 == 0 ? 0.1 : 1.0);
  }
  ErrorHead::Options o;
  o.seed = 3;
  ErrorHead h;
  CHECK(!h.trained());
  CHECK_THROWS_AS(h.score(states[0], 2), std::logic_error);
  h.fit(states, T, constant, unit_norm(1), o);
  CHECK(h.trained());
  CHECK(h.score(states[3], T[3]) == doctest::Approx(std::log1p(0.5)).epsilon(0.02));

  ErrorHead g;
  g.fit(states, T, split, unit_norm(1), o);
  CHECK(g.final_loss() < 1e-3);
  CHECK(g.score(states[0], T[0]) < g.score(states[1], T[1]));
}

TEST_CASE("error head and conformal calibration refuse the wrong split") {
  const auto cfg = small_ball();
  const auto val = data::generate_in_memory(data::split_spec(cfg, data::Split::Val));
  const auto test = data::generate_in_memory(data::split_spec(cfg, data::Split::Test));
  train::IdentityPredictor id;
  const auto norm = unit_norm(9);
  CHECK_THROWS_AS(train_error_head(id, val, {2, 4}, norm, 0, {}), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_conformal(id, test, {2, 4}, norm, 0), std::invalid_argument);
  const auto c = calibrate_conformal(id, val, {2, 4}, norm, 0, 5);
  CHECK(c.k() == 5);
  CHECK(c.warnings().empty());
}

TEST_CASE("conformal difficulty: homoscedastic, clamped k and clusters") {
  std::vector<std::vector<double>> f;
  std::vector<double> same, cluster;
  for (int i = 0; i < 30; ++i) {
    const double base = i < 15 ? 0.0 : 10.0;
    f.push_back({base + 0.01 * i, base - 0.02 * i});
    same.push_back(0.3);
    cluster.push_back(i < 15 ? 1.0 : 5.0);
  }
  ConformalScorer homo(f, same, 10);
  CHECK(homo.score({4.0, 4.0}) == doctest::Approx(0.3));

  ConformalScorer big(f, same, 100);
  CHECK(big.k() == 30);
  CHECK(big.warnings().size() == 1);

  ConformalScorer cl(f, cluster, 10);
  CHECK(cl.score({0.05, -0.05}) == doctest::Approx(1.0));
  CHECK(cl.score({10.1, 9.8}) == doctest::Approx(5.0));
  CHECK_THROWS(cl.score({1.0}));
  CHECK_THROWS(ConformalScorer({}, {}, 3));
}

TEST_CASE("energy and momentum residuals") {
  const double g = -9.81;
  env::State s0({9}, {0.5f, 0.5f, 0.0f, 0.0f, 0.0f, -2.0f, 0.0f, 0.0f, 0.0f});
  CHECK(energy_residual(s0, s0, g) == 0.0);
  CHECK(momentum_residual(s0, s0) == 0.0);
  // A floor bounce with restitution 0.8 turns vz = -2 into +1.6.
  env::State bounced = s0;
  bounced[5] = 1.6f;
  CHECK(momentum_residual(s0, bounced) == doctest::Approx(1.8 * 2.0).epsilon(1e-6));
  CHECK(energy_residual(s0, bounced, g) == doctest::Approx(0.5 * (4.0 - 2.56)).epsilon(1e-6));
  // Raising z by 1 at rest costs |g|.
  env::State up = s0;
  up[2] = 1.0f;
  up[5] = -2.0f;
  CHECK(energy_residual(s0, up, g) == doctest::Approx(9.81).epsilon(1e-6));
  CHECK_THROWS_AS(energy_residual(random_field(1, 3, 1), random_field(1, 3, 1), g), NotApplicable);
  CHECK_THROWS_AS(momentum_residual(random_field(1, 3, 1), random_field(1, 3, 1)), NotApplicable);
}

TEST_CASE("Richardson: uniform state scores zero, fix divides by 2^p - 1") {
  env::EulerParams p;
  p.grid = 16;
  env::State uniform({4, 16, 16});
  for (std::size_t i = 0; i < 256; ++i) {
    uniform[i] = 1.0f;
    uniform[3 * 256 + i] = 2.5f;
  }
  const auto norm = unit_norm(4);
  for (auto v : {RichardsonVariant::Fix, RichardsonVariant::Prod}) {
    const auto r = richardson_score(p, uniform, 4, v, norm);
    for (double c : r.map.cells) CHECK(c == 0.0);
    CHECK(r.cost_seconds >= 0.0);
  }
  CHECK(solver_order(env::EnvId::Euler) == 1);
  CHECK(solver_order(env::EnvId::Oregonator) == 2);
  CHECK(solver_order(env::EnvId::Ball) == 1);

  const auto spec = data::split_spec(small_euler(), data::Split::Test);
  const auto traj = data::generate_trajectory(data::sample_params(spec, 2), 2);
  const auto params = train::trajectory_params(traj);
  const auto a = env::advance(params, traj.frames[0], 4);
  const auto b = env::advance(params, traj.frames[0], 4, env::Resolution::Half);
  const auto fix1 = richardson_score(params, traj.frames[0], 4, RichardsonVariant::Fix, norm);
  const auto raw = normalized_distance(a, b, norm, 4);
  REQUIRE(aggregate(raw) > 0.0);
  for (std::size_t i = 0; i < raw.cells.size(); ++i) CHECK(fix1.map.cells[i] == raw.cells[i]);
  const auto fix2 = richardson_score(params, traj.frames[0], 4, RichardsonVariant::Fix, norm, 2);
  CHECK(aggregate(fix2.map) == doctest::Approx(aggregate(raw) / 3.0));
  CHECK_THROWS(richardson_score(params, traj.frames[0], 4, RichardsonVariant::Fix, norm, 0));
}

TEST_CASE("Richardson prod uses the signed geometric mean of the legs") {
  // Ball legs differ slightly; with all components of one sign the gap equals
  // |a - sqrt(a b)| per component.
  env::BallParams p;
  env::State s({9}, {0.3f, 0.4f, 0.6f, 0.3f, 0.2f, 0.1f, 0.0f, 0.0f, 0.0f});
  const auto a = env::advance(p, s, 2);
  const auto b = env::advance(p, s, 2, env::Resolution::Half);
  const auto r = richardson_score(p, s, 2, RichardsonVariant::Prod, unit_norm(9));
  double d2 = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    const double x = a[i], y = b[i];
    const double g = x * y > 0.0 ? std::copysign(std::sqrt(x * y), x) : 0.5 * (x + y);
    const double d = x - static_cast<float>(g);
    d2 += d * d;
  }
  CHECK(r.map.cells[0] == doctest::Approx(std::sqrt(d2)).epsilon(1e-9));
}

TEST_CASE("trust table: scoring, CSV round trip and method applicability") {
  const auto cfg = small_ball();
  const auto test = data::generate_in_memory(data::split_spec(cfg, data::Split::Test));
  const auto train_split = data::generate_in_memory(data::split_spec(cfg, data::Split::Train));
  const auto norm = data::compute_norm_stats(train_split);
  nn::Network<float> net(tiny_mlp(), 3);
  train::NeuralSurrogate model(std::move(net), norm, cfg.ladder);
  ScoringContext ctx;
  ctx.model = &model;
  ctx.seed = 9;
  const std::vector<std::string> methods{method::kStepDoubling, method::kTta, method::kGradMag, method::kEnergy,
                                         method::kMomentum, method::kRichardsonFix, method::kRichardsonProd};
  const auto rows = score_split(ctx, test, {1, 4, 8}, methods);
  std::size_t sd = 0, gm = 0, rich = 0;
  for (const auto& r : rows) {
    if (r.method == method::kStepDoubling) {
      ++sd;
      CHECK(r.horizon != 1);
    }
    if (r.method == method::kGradMag) ++gm;
    if (r.method == method::kRichardsonFix) ++rich;
    CHECK(std::isfinite(r.score));
    CHECK(r.true_rmse >= 0.0);
  }
  CHECK(sd == 2 * test.size());
  CHECK(gm == 0);
  CHECK(rich == 3 * test.size());

  const auto path = std::filesystem::temp_directory_path() / "hwm_trust_rows.csv";
  write_trust_csv(path, rows);
  const auto back = read_trust_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].traj_id == rows[i].traj_id);
    CHECK(back[i].split == rows[i].split);
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].score == rows[i].score);
    CHECK(back[i].true_rmse == rows[i].true_rmse);
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(score_split(ctx, test, {4}, {method::kEnsemble}), std::invalid_argument);
  CHECK_THROWS_AS(score_split(ctx, test, {4}, {method::kErrorHead}), std::invalid_argument);
  CHECK_THROWS_AS(score_split(ctx, test, {4}, {"nope"}), std::invalid_argument);

  nn::Network<float> net2(tiny_mlp(), 3);
  train::NeuralSurrogate single(std::move(net2), norm, {8}, true);
  ctx.model = &single;
  CHECK_THROWS_AS(score_split(ctx, test, {8}, {method::kStepDoubling}), ProbeRefused);
}
