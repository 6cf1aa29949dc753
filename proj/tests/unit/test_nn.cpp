#include <cmath>
#include <functional>
#include <numbers>

#include "doctest.h"
#include "hwm/nn/embedding.hpp"
#include "hwm/nn/network.hpp"
#include "hwm/nn/ops.hpp"
#include "hwm/nn/optim.hpp"
#include "hwm/util/rng.hpp"

using namespace hwm;
using namespace hwm::nn;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Central-difference check of d(loss)/d(leaf) for the leaves in `leaves`.
/// `build` records the loss on a fresh graph given the current leaf values.
struct FdReport {
  std::size_t checked = 0;
  double worst = 0.0;
};

FdReport fd_check(std::vector<Tensor<double>>& leaves,
                  const std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>& build,
                  std::size_t coords_per_leaf, Rng& rng, double h = 1e-3) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  ParamStore<double> store;
  for (auto& t : leaves) store.add("leaf", t);
  for (std::size_t i = 0; i < leaves.size(); ++i) vars.push_back(g.parameter(store, i));
  Var<double> loss = build(g, vars);
  g.backward(loss);
  const auto grads = g.gradients(store);

  auto eval = [&]() {
    Graph<double> g2(false);
    std::vector<Var<double>> v2;
    for (std::size_t i = 0; i < leaves.size(); ++i) v2.push_back(g2.parameter(store, i));
    return build(g2, v2).value()[0];
  };

  FdReport rep;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const std::size_t n = std::min(coords_per_leaf, store.tensor(i).size());
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t k = coords_per_leaf >= store.tensor(i).size() ? c : rng.below(store.tensor(i).size());
      double& w = store.tensor(i)[k];
      const double saved = w;
      w = saved + h;
      const double lp = eval();
      w = saved - h;
      const double lm = eval();
      w = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = grads.grads[i][k];
      if (std::max(std::abs(numeric), std::abs(analytic)) <= 1e-6) continue;
      const double rel = std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic));
      rep.worst = std::max(rep.worst, rel);
      ++rep.checked;
    }
  }
  return rep;
}

/// Loss used by network gradient checks: MSE against a fixed random target.
template <class T>
double net_loss_check(Network<double>& net, const Tensor<double>& x, const Tensor<double>& target,
                      std::span<const int> horizons, std::size_t coords, Rng& rng) {
  auto loss_of = [&](Graph<double>& g) {
    Var<double> out = net.forward(g, g.input(x), horizons);
    return mse(out, g.input(target));
  };
  Graph<double> g;
  Var<double> loss = loss_of(g);
  g.backward(loss);
  const auto grads = g.gradients(net.params());
  CHECK(grads.disconnected.empty());

  double worst = 0.0;
  std::size_t checked = 0;
  const std::size_t total = net.params().numel();
  std::vector<double> flat = net.params().flatten();
  std::vector<double> gflat;
  for (const auto& t : grads.grads) gflat.insert(gflat.end(), t.data().begin(), t.data().end());
  const double h = 1e-3;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t k = rng.below(total);
    auto eval_at = [&](double v) {
      std::vector<double> f2 = flat;
      f2[k] = v;
      net.params().assign(f2);
      Graph<double> g2(false);
      return loss_of(g2).value()[0];
    };
    const double numeric = (eval_at(flat[k] + h) - eval_at(flat[k] - h)) / (2.0 * h);
    net.params().assign(flat);
    const double analytic = gflat[k];
    if (std::max(std::abs(numeric), std::abs(analytic)) <= 1e-6) continue;
    worst = std::max(worst, std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic)));
    ++checked;
  }
  CHECK(checked > 0);
  return worst;
}

}  // namespace

TEST_CASE("film identity and zero-input cases") {
  Rng rng(1);
  Graph<float> g(false);
  Tensor<float> x({1, 3, 2, 2});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-2, 2));
  Var<float> xv = g.input(x);
  Var<float> out = film(xv, g.input(Tensor<float>({1, 3}, 1.0f)), g.input(Tensor<float>({1, 3}, 0.0f)));
  CHECK(out.value() == x);

  Tensor<float> beta({1, 3}, {0.5f, -1.0f, 2.0f});
  Var<float> out2 = film(g.input(Tensor<float>({1, 3, 2, 2})), g.input(Tensor<float>({1, 3}, {3.f, 4.f, 5.f})),
                         g.input(beta));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) CHECK(out2.value()[c * 4 + i] == beta[c]);
}

TEST_CASE("film rejects mismatched channels with a dimension report") {
  Graph<float> g(false);
  Var<float> x = g.input(Tensor<float>({1, 3, 2, 2}));
  Var<float> gm = g.input(Tensor<float>({1, 2}));
  CHECK_THROWS_WITH_AS(film(x, gm, gm), doctest::Contains("[1x3x2x2]"), ShapeError);
}

TEST_CASE("film gradient w.r.t. gamma is the per-channel sum of x") {
  Rng rng(7);
  std::vector<Tensor<double>> leaves{random_tensor({1, 2, 2, 2}, rng), random_tensor({1, 2}, rng),
                                     random_tensor({1, 2}, rng)};
  const Tensor<double> x = leaves[0];
  Graph<double> g;
  ParamStore<double> store;
  for (auto& t : leaves) store.add("p", t);
  Var<double> out = film(g.parameter(store, 0), g.parameter(store, 1), g.parameter(store, 2));
  g.backward(sum(out));
  const auto grads = g.gradients(store);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += x[c * 4 + i];
    CHECK(grads.grads[1][c] == doctest::Approx(s).epsilon(1e-12));
  }
  const FdReport rep = fd_check(
      leaves, [](Graph<double>&, std::vector<Var<double>>& v) { return sum(film(v[0], v[1], v[2])); }, 8, rng);
  CHECK(rep.checked > 0);
  CHECK(rep.worst < 1e-4);
}

TEST_CASE("horizon embedding") {
  const Tensor<double> e1 = horizon_embed<double>(1);
  for (std::size_t k = 0; k < 32; ++k) {
    CHECK(e1[k] == 1.0);
    CHECK(e1[32 + k] == 0.0);
  }
  const Tensor<double> e2 = horizon_embed<double>(2), e4 = horizon_embed<double>(4);
  double d2 = 0;
  for (std::size_t i = 0; i < 64; ++i) d2 += (e2[i] - e4[i]) * (e2[i] - e4[i]);
  CHECK(std::sqrt(d2) > 0.0);

  // Independent closed form: w_k = 0.05 * 400^(k/31), x = log2(64) = 6.
  const Tensor<double> e64 = horizon_embed<double>(64);
  for (std::size_t k = 0; k < 32; ++k) {
    const double w = 0.05 * std::exp(std::log(400.0) * static_cast<double>(k) / 31.0);
    CHECK(e64[k] == doctest::Approx(std::cos(6.0 * w)).epsilon(1e-12));
    CHECK(e64[32 + k] == doctest::Approx(std::sin(6.0 * w)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(horizon_embed<float>(0), std::invalid_argument);
  CHECK_THROWS_AS(horizon_embed<float>(-3), std::invalid_argument);

  // Distinct for every ladder value.
  const int ladder[] = {1, 2, 4, 8, 16, 32, 64};
  for (int a : ladder)
    for (int b : ladder)
      if (a != b) CHECK_FALSE(horizon_embed<float>(a) == horizon_embed<float>(b));
}

TEST_CASE("hand-computed affine pass through two linear layers") {
  // x = (1, 2); h = [0.5, -1] x + 0.25 = -1.25; delta = [2; -1] h + (0.5, 1) = (-2, 2.25)
  Graph<double> g(false);
  Var<double> x = g.input(Tensor<double>({1, 2}, {1.0, 2.0}));
  Var<double> h = linear(x, g.input(Tensor<double>({1, 2}, {0.5, -1.0})), g.input(Tensor<double>({1}, {0.25})));
  Var<double> d = linear(h, g.input(Tensor<double>({2, 1}, {2.0, -1.0})), g.input(Tensor<double>({2}, {0.5, 1.0})));
  Var<double> out = add(x, d);
  CHECK(out.value()[0] == -1.0);
  CHECK(out.value()[1] == 4.25);
}

TEST_CASE("network forward: residual identity, determinism, shape errors") {
  Architecture mlp;
  mlp.kind = ArchKind::FilmMlp;
  mlp.channels = 9;
  mlp.hidden = 32;
  mlp.blocks = 2;
  Architecture unet;
  unet.kind = ArchKind::UNet;
  unet.channels = 2;
  unet.height = unet.width = 8;
  unet.base_channels = 4;

  Rng rng(3);
  for (const Architecture& arch : {mlp, unet}) {
    Network<float> net(arch, 11);
    Shape shape{2};
    for (auto e : arch.state_shape()) shape.push_back(e);
    Tensor<float> x(shape);
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
    const int hs[] = {4, 16};
    const Tensor<float> a = net.forward(x, hs);
    const Tensor<float> b = net.forward(x, hs);
    CHECK(a == b);
    CHECK(a.shape() == x.shape());
    CHECK_FALSE(a == x);
    net.zero_output_projection();
    CHECK(net.forward(x, hs) == x);

    Network<float> twin(arch, 11);
    twin.zero_output_projection();
    CHECK(twin.params().flatten() == net.params().flatten());

    Tensor<float> bad({2, 3});
    CHECK_THROWS_AS(net.forward(bad, hs), ShapeError);
  }
}

TEST_CASE("non-finite activation is reported with the layer name") {
  Architecture mlp;
  mlp.channels = 3;
  mlp.hidden = 8;
  mlp.blocks = 1;
  Network<float> net(mlp, 1);
  net.params().tensor(net.params().find("block0.fc1.weight")).fill(1e30f);
  Tensor<float> x({1, 3}, 1e10f);
  const int hs[] = {1};
  CHECK_THROWS_WITH_AS(net.forward(x, hs), doctest::Contains("block0"), NonFiniteError);
}

TEST_CASE("gradients: linear losses and analytic quadratic") {
  Rng rng(5);
  {
    Graph<double> g;
    ParamStore<double> store;
    store.add("w", random_tensor({4, 3}, rng));
    Var<double> w = g.parameter(store, 0);
    g.backward(sum(w));
    const auto grads = g.gradients(store);
    for (double v : grads.grads[0].data()) CHECK(v == 1.0);
  }
  {
    // loss = ||W x - y||^2, dL/dW = 2 (W x - y) x^T
    const Tensor<double> wv = random_tensor({3, 3}, rng);
    const Tensor<double> xv = random_tensor({1, 3}, rng);
    const Tensor<double> yv = random_tensor({1, 3}, rng);
    Graph<double> g;
    ParamStore<double> store;
    store.add("W", wv);
    Var<double> pred = linear(g.input(xv), g.parameter(store, 0), g.input(Tensor<double>({3})));
    Var<double> r = sub(pred, g.input(yv));
    g.backward(sum(mul(r, r)));
    const auto grads = g.gradients(store);
    const auto& gw = grads.grads[0];
    for (std::size_t i = 0; i < 3; ++i) {
      double wx = 0;
      for (std::size_t j = 0; j < 3; ++j) wx += wv[i * 3 + j] * xv[j];
      for (std::size_t j = 0; j < 3; ++j) CHECK(gw[i * 3 + j] == doctest::Approx(2 * (wx - yv[i]) * xv[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("disconnected parameters get zero gradient and a diagnostic") {
  Graph<double> g;
  ParamStore<double> store;
  store.add("used", Tensor<double>({2}, 1.0));
  store.add("unused", Tensor<double>({2}, 1.0));
  Var<double> u = g.parameter(store, 0);
  g.parameter(store, 1);
  g.backward(sum(u));
  const auto grads = g.gradients(store);
  REQUIRE(grads.disconnected.size() == 1);
  CHECK(grads.disconnected[0] == "unused");
  CHECK(grads.grads[1][0] == 0.0);
}

TEST_CASE("backward visits each recorded node once") {
  Graph<double> g;
  ParamStore<double> store;
  store.add("w", Tensor<double>({3}, 2.0));
  Var<double> w = g.parameter(store, 0);
  Var<double> a = mul(w, w);
  Var<double> b = add(a, w);
  Var<double> loss = sum(add(a, b));
  g.backward(loss);
  CHECK(g.backward_visits() == 4);  // mul, add, add, sum
  const auto grads = g.gradients(store);
  for (double v : grads.grads[0].data()) CHECK(v == doctest::Approx(2 * (2 * 2.0) + 1));
}

TEST_CASE("finite-difference check for every layer type") {
  Rng rng(2024);
  using Build = std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;
  struct Case {
    const char* name;
    std::vector<Tensor<double>> leaves;
    Build build;
  };
  auto target = random_tensor({2, 3, 4, 4}, rng);
  std::vector<Case> cases;
  cases.push_back({"linear", {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)},
                   [](Graph<double>&, std::vector<Var<double>>& v) { return sum(mul(linear(v[0], v[1], v[2]), linear(v[0], v[1], v[2]))); }});
  cases.push_back({"conv2d3",
                   {random_tensor({2, 2, 5, 4}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
                   [](Graph<double>& g, std::vector<Var<double>>& v) {
                     Var<double> y = conv2d(v[0], v[1], v[2]);
                     return mse(y, g.input(Tensor<double>(y.shape(), 0.3)));
                   }});
  cases.push_back({"conv2d1",
                   {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 1, 1}, rng), random_tensor({2}, rng)},
                   [](Graph<double>& g, std::vector<Var<double>>& v) {
                     Var<double> y = conv2d(v[0], v[1], v[2]);
                     return mse(y, g.input(Tensor<double>(y.shape(), -0.2)));
                   }});
  cases.push_back({"film", {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
                   [target](Graph<double>& g, std::vector<Var<double>>& v) {
                     return mse(film(v[0], v[1], v[2]), g.input(target));
                   }});
  cases.push_back({"silu", {random_tensor({2, 3, 4, 4}, rng, -3, 3)},
                   [target](Graph<double>& g, std::vector<Var<double>>& v) { return mse(silu(v[0]), g.input(target)); }});
  {
    Tensor<double> away = random_tensor({2, 3, 4, 4}, rng);
    for (auto& x : away.data()) x += x >= 0 ? 0.05 : -0.05;
    cases.push_back({"relu", {away},
                     [target](Graph<double>& g, std::vector<Var<double>>& v) { return mse(relu(v[0]), g.input(target)); }});
  }
  cases.push_back({"avg_pool2+upsample", {random_tensor({2, 3, 4, 4}, rng)},
                   [target](Graph<double>& g, std::vector<Var<double>>& v) {
                     return mse(mul(upsample_nearest2(avg_pool2(v[0])), v[0]), g.input(target));
                   }});
  cases.push_back({"concat+slice+reshape",
                   {random_tensor({2, 3}, rng), random_tensor({2, 5}, rng)},
                   [](Graph<double>&, std::vector<Var<double>>& v) {
                     Var<double> c = concat_channels(v[0], v[1]);
                     Var<double> s = slice_cols(c, 2, 4);
                     Var<double> r = reshape(s, {8});
                     return mean(mul(r, add_scalar(scale(r, 2.0), 0.5)));
                   }});
  for (auto& c : cases) {
    CAPTURE(c.name);
    const FdReport rep = fd_check(c.leaves, c.build, 100, rng);
    CHECK(rep.checked > 0);
    CHECK(rep.worst < 1e-4);
  }
}

TEST_CASE("finite-difference check of full networks") {
  Rng rng(99);
  SUBCASE("FiLM-MLP, 100 coordinates") {
    Architecture a;
    a.channels = 9;
    a.hidden = 16;
    a.blocks = 2;
    a.embed_hidden = 8;
    Network<double> net(a, 4);
    Tensor<double> x = random_tensor({3, 9}, rng), y = random_tensor({3, 9}, rng);
    const int hs[] = {1, 8, 32};
    CHECK(net_loss_check<double>(net, x, y, hs, 100, rng) < 1e-4);
  }
  SUBCASE("small U-Net on 8x8x2, 50 coordinates") {
    Architecture a;
    a.kind = ArchKind::UNet;
    a.channels = 2;
    a.height = a.width = 8;
    a.base_channels = 4;
    a.embed_hidden = 8;
    Network<float> f32(a, 8);
    Network<double> net = f32.cast<double>();
    Tensor<double> x = random_tensor({2, 2, 8, 8}, rng), y = random_tensor({2, 2, 8, 8}, rng);
    const int hs[] = {2, 16};
    CHECK(net_loss_check<double>(net, x, y, hs, 50, rng) < 1e-4);
  }
}

TEST_CASE("no NaN for weights in [-1, 1] and finite inputs") {
  Rng rng(17);
  Architecture a;
  a.kind = ArchKind::UNet;
  a.channels = 4;
  a.height = a.width = 8;
  a.base_channels = 4;
  Network<float> net(a, 2);
  std::vector<float> flat(net.params().numel());
  for (auto& v : flat) v = static_cast<float>(rng.uniform(-1, 1));
  net.params().assign(flat);
  Tensor<float> x({2, 4, 8, 8});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-3, 3));
  const int hs[] = {1, 64};
  Graph<float> g;
  Var<float> out = net.forward(g, g.input(x), hs);
  Var<float> loss = mse(out, g.input(x));
  g.backward(loss);
  CHECK(out.value().all_finite());
  const auto grads = g.gradients(net.params());
  for (const auto& t : grads.grads) CHECK(t.all_finite());
}

TEST_CASE("AdamW closed-form identities") {
  ParamStore<float> params;
  params.add("w", Tensor<float>({4}, {1.0f, -2.0f, 0.5f, 3.0f}));
  SUBCASE("zero gradient: decoupled decay only") {
    AdamW opt(params, {.lr = 2e-4, .weight_decay = 1e-4});
    const std::vector<float> before = params.flatten();
    REQUIRE(opt.step(params, {Tensor<float>({4})}));
    const float factor = 1.0f - static_cast<float>(2e-4 * 1e-4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(params.tensor(0)[i] == before[i] * factor);
  }
  SUBCASE("first step with unit gradient moves each weight by ~lr") {
    AdamW opt(params, {.lr = 1e-3, .weight_decay = 0.0});
    const std::vector<float> before = params.flatten();
    REQUIRE(opt.step(params, {Tensor<float>({4}, 1.0f)}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(before[i] - params.tensor(0)[i] == doctest::Approx(1e-3).epsilon(1e-4));
  }
  SUBCASE("global norm 10 is clipped to 1 before the moments") {
    AdamW opt(params, {.lr = 1e-3, .weight_decay = 0.0});
    REQUIRE(opt.step(params, {Tensor<float>({4}, 5.0f)}));  // norm = sqrt(4 * 25) = 10
    CHECK(opt.last_grad_norm() == doctest::Approx(10.0));
    CHECK(opt.last_clip_factor() == doctest::Approx(0.1));
    for (float m : opt.first_moments()[0].data()) CHECK(m == doctest::Approx(0.1f * 0.5f));
  }
  SUBCASE("non-finite gradient: step skipped, counter unchanged") {
    AdamW opt(params, {});
    const std::vector<float> before = params.flatten();
    Tensor<float> g({4}, 1.0f);
    g[2] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(opt.step(params, {g}));
    CHECK(opt.steps() == 0);
    CHECK(params.flatten() == before);
    CHECK(opt.events().size() == 1);
  }
}

TEST_CASE("learning-rate schedule") {
  const LrSchedule pde{.base_lr = 2e-4, .warmup_epochs = 3, .total_epochs = 60};
  CHECK(lr_at(3, pde) == 2e-4);
  CHECK(lr_at(59, pde) < 1e-9 * 2e-4);
  CHECK(lr_at(0, pde) < lr_at(1, pde));
  // decay span is epochs 3..59 (56 epochs); midpoint = 31
  CHECK(std::abs(lr_at(31, pde) - 1e-4) < 1e-12);
  CHECK_THROWS_AS(lr_at(60, pde), std::out_of_range);
  CHECK_THROWS_AS(lr_at(-1, pde), std::out_of_range);
  const LrSchedule ball{.base_lr = 3e-4, .warmup_epochs = 0, .total_epochs = 80};
  CHECK(lr_at(0, ball) == 3e-4);
}

TEST_CASE("identical seed and config give bitwise-identical weights after N steps") {
  auto run = [] {
    Architecture a;
    a.channels = 9;
    a.hidden = 16;
    a.blocks = 2;
    Network<float> net(a, 42);
    AdamW opt(net.params(), {.lr = 1e-3});
    Rng rng(9);
    for (int step = 0; step < 5; ++step) {
      Tensor<float> x({4, 9}), y({4, 9});
      for (auto& v : x.data()) v = static_cast<float>(rng.normal());
      for (auto& v : y.data()) v = static_cast<float>(rng.normal());
      const int hs[] = {1, 2, 4, 8};
      Graph<float> g;
      Var<float> loss = mse(net.forward(g, g.input(x), hs), g.input(y));
      g.backward(loss);
      opt.step(net.params(), g.gradients(net.params()).grads);
    }
    return net.params().flatten();
  };
  CHECK(run() == run());
}
