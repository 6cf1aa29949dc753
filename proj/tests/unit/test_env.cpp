#include <boost/numeric/odeint.hpp>
#include <cmath>

#include "doctest.h"
#include "hwm/env/ball.hpp"
#include "hwm/env/env.hpp"
#include "hwm/env/euler.hpp"
#include "hwm/env/oregonator.hpp"

using namespace hwm;
using namespace hwm::env;

namespace {

Cons random_physical(Rng& rng, double gamma) {
  return conserved(rng.uniform(0.2, 2.0), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 2.0), gamma);
}

double channel_sum(const Field& f, std::size_t c) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.plane(); ++i) s += f.channel(c)[i];
  return s;
}

}  // namespace

TEST_CASE("HLL flux of equal states is the physical flux, bitwise") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Cons q = random_physical(rng, 1.4);
    for (Axis axis : {Axis::X, Axis::Y}) {
      const Cons f = hll_flux(q, q, axis, 1.4);
      const Cons e = physical_flux(q, axis, 1.4);
      for (int k = 0; k < 4; ++k) CHECK(f[k] == e[k]);
    }
  }
}

TEST_CASE("HLL flux takes the upwind branch for supersonic flow") {
  const Cons qL = conserved(1.0, 5.0, 0.0, 1.0, 1.4);
  const Cons qR = conserved(0.5, 4.0, 0.0, 0.8, 1.4);
  const Cons f = hll_flux(qL, qR, Axis::X, 1.4);
  const Cons e = physical_flux(qL, Axis::X, 1.4);
  for (int k = 0; k < 4; ++k) CHECK(f[k] == e[k]);
  const Cons g = hll_flux(conserved(1, -5, 0, 1, 1.4), conserved(0.5, -4, 0, 0.8, 1.4), Axis::X, 1.4);
  const Cons eR = physical_flux(conserved(0.5, -4, 0, 0.8, 1.4), Axis::X, 1.4);
  for (int k = 0; k < 4; ++k) CHECK(g[k] == eR[k]);
}

TEST_CASE("HLL flux on the Sod pair matches a standalone evaluation") {
  const double gm = 1.4;
  // Primitive Sod states, written out independently of the library helpers.
  const double rL = 1.0, pL = 1.0, rR = 0.125, pR = 0.1;
  const double UL[4] = {rL, 0.0, 0.0, pL / (gm - 1)};
  const double UR[4] = {rR, 0.0, 0.0, pR / (gm - 1)};
  const double FL[4] = {0.0, pL, 0.0, 0.0};
  const double FR[4] = {0.0, pR, 0.0, 0.0};
  const double cL = std::sqrt(gm * pL / rL), cR = std::sqrt(gm * pR / rR);
  const double sL = std::min(-cL, -cR), sR = std::max(cL, cR);
  const Cons f = hll_flux(conserved(rL, 0, 0, pL, gm), conserved(rR, 0, 0, pR, gm), Axis::X, gm);
  for (int k = 0; k < 4; ++k) {
    const double ref = (sR * FL[k] - sL * FR[k] + sL * sR * (UR[k] - UL[k])) / (sR - sL);
    CHECK(f[k] == doctest::Approx(ref).epsilon(1e-14).scale(1.0));
  }
}

TEST_CASE("HLL flux rejects non-physical input") {
  const Cons good = conserved(1, 0, 0, 1, 1.4);
  Cons bad = good;
  bad[3] = -1.0;
  CHECK_THROWS_AS(hll_flux(good, bad, Axis::X, 1.4), SolverError);
  bad = good;
  bad[0] = 0.0;
  CHECK_THROWS_AS(hll_flux(bad, good, Axis::Y, 1.4), SolverError);
}

TEST_CASE("Euler: uniform field is a fixed point for both boundary modes") {
  for (Boundary bc : {Boundary::Transmissive, Boundary::Periodic}) {
    EulerParams p;
    p.grid = 16;
    p.bc = bc;
    State s({4, 16, 16});
    const Cons c = conserved(1.3, 0.4, -0.2, 0.9, p.gamma);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < 256; ++i) s[k * 256 + i] = static_cast<float>(c[k]);
    const Trajectory t = rollout(p, s, 12);
    for (const auto& f : t.frames) CHECK(f == s);
  }
}

TEST_CASE("Euler periodic: mass, momentum and energy conserved over 100 steps") {
  EulerParams p;
  p.bc = Boundary::Periodic;
  Field q(4, 32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const double a = 2 * M_PI * (x + 0.5) / 32, b = 2 * M_PI * (y + 0.5) / 32;
      const Cons c = conserved(1.0 + 0.5 * std::sin(a) * std::cos(b), 0.6 + 0.3 * std::cos(b), 0.4 + 0.2 * std::sin(a),
                               1.0 + 0.4 * std::cos(a + b), p.gamma);
      for (std::size_t k = 0; k < 4; ++k) q(k, y, x) = c[k];
    }
  double before[4], worst = 0.0;
  for (std::size_t k = 0; k < 4; ++k) before[k] = channel_sum(q, k);
  for (int step = 0; step < 100; ++step) euler_step(q, p, 1.0);
  for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(channel_sum(q, k) - before[k]) / std::abs(before[k]));
  CHECK(worst < 1e-12);
  check_physical(q, p.gamma, "after the conservation run");
}

TEST_CASE("Euler: frame advances exactly to the boundary") {
  EulerParams p;
  p.grid = 32;
  Field q = quadrant_field(32, 3, 0.5, 0.5, p.gamma);
  const double dt_cfl = euler_cfl_dt(q, p);
  const int steps = euler_frame(q, p);
  CHECK(steps == static_cast<int>(std::ceil(p.dt_frame / dt_cfl - 1e-12)));
}

TEST_CASE("Sedov initial condition: energy above background equals E0") {
  EulerParams p;
  Rng rng(0);
  const State s = make_initial(p, {.kind = "sedov", .e0 = 1.0, .rho_bg = 1.0}, rng);
  const std::size_t n = 64 * 64;
  double excess = 0.0;
  for (std::size_t i = 0; i < n; ++i) excess += (static_cast<double>(s[3 * n + i]) - kSedovBackgroundEnergy) / n;
  CHECK(std::abs(excess - 1.0) < 1e-10);
  for (std::size_t i = 0; i < n; ++i) CHECK(s[i] == 1.0f);
}

TEST_CASE("Sedov blast: density peak moves away from the centre") {
  EulerParams p;
  p.grid = 32;
  Rng rng(0);
  const State s = make_initial(p, {.kind = "sedov", .e0 = 1.0, .rho_bg = 1.0}, rng);
  const Trajectory t = rollout(p, s, 16);
  auto peak_radius = [&](const State& f) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 32 * 32; ++i)
      if (f[i] > f[best]) best = i;
    const double x = (best % 32) + 0.5 - 16.0, y = (best / 32) + 0.5 - 16.0;
    return std::hypot(x, y);
  };
  CHECK(peak_radius(t.frames[15]) > peak_radius(t.frames[2]));
}

TEST_CASE("Euler positivity on every shipped initial condition over the desk frame count") {
  EulerParams p;  // desk grid 64
  Rng rng(3);
  std::vector<InitialCondition> ics;
  for (int c : {3, 4, 6, 12}) {
    ics.push_back({.kind = "quadrant", .config = c});
    ics.push_back({.kind = "quadrant", .config = c, .xc = 0.45, .yc = 0.55});
  }
  ics.push_back({.kind = "sedov", .e0 = 5.0, .rho_bg = 0.4});
  ics.push_back({.kind = "sedov", .e0 = 0.1, .rho_bg = 2.0});
  for (const auto& ic : ics) {
    CAPTURE(ic.kind);
    CAPTURE(ic.config);
    CHECK_NOTHROW(rollout(p, make_initial(p, ic, rng), 80));
  }
}

TEST_CASE("Euler: non-physical input aborts naming the cell") {
  EulerParams p;
  p.grid = 8;
  Rng rng(0);
  State s = make_initial(p, {.kind = "quadrant", .config = 4}, rng);
  s[3 * 64 + 2 * 8 + 5] = -1.0f;
  CHECK_THROWS_WITH_AS(advance(p, s, 1), doctest::Contains("(y=2, x=5)"), SolverError);
}

TEST_CASE("Oregonator: origin is a fixed point") {
  OregonatorParams p;
  p.grid = 16;
  const State zero({2, 16, 16});
  const Trajectory t = rollout(p, zero, 5);
  for (const auto& f : t.frames) CHECK(f == zero);
}

TEST_CASE("Oregonator: homogeneous non-trivial root is unchanged") {
  for (double f : {0.5, 1.0, 2.0}) {
    OregonatorParams p;
    p.f = f;
    p.grid = 8;
    // Independent bisection on R(u, u) / u = 1 - u - f (u - q) / (u + q).
    double lo = p.q, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (1.0 - mid - f * (mid - p.q) / (mid + p.q) > 0 ? lo : hi) = mid;
    }
    const double root = 0.5 * (lo + hi);
    Field s(2, 8, 8, root);
    oregonator_frame(s, p, p.dt);
    for (double v : s.data) CHECK(std::abs(v - root) < 1e-8);
  }
}

TEST_CASE("Oregonator, D = 0 single cell, matches an adaptive 64-bit ODE integration") {
  using namespace boost::numeric::odeint;
  using Vec = std::array<double, 2>;
  for (double f : {0.7, 1.4, 2.0}) {
    OregonatorParams p;
    p.D = 0.0;
    p.grid = 1;
    p.f = f;
    p.eps = 0.04;
    Field cell(2, 1, 1);
    cell.data = {0.6, 0.15};
    Vec ref{0.6, 0.15};
    auto rhs = [&](const Vec& x, Vec& dx, double) {
      const auto r = tyson_rate(x[0], x[1], p);
      dx = r;
    };
    auto stepper = make_controlled(1e-13, 1e-13, runge_kutta_dopri5<Vec>());
    double worst = 0.0;
    for (int frame = 0; frame < 200; ++frame) {
      oregonator_frame(cell, p, p.dt);
      integrate_adaptive(stepper, rhs, ref, frame * p.dt, (frame + 1) * p.dt, 1e-5);
      worst = std::max({worst, std::abs(cell.data[0] - ref[0]), std::abs(cell.data[1] - ref[1])});
    }
    CAPTURE(f);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("Oregonator: float frames track the ODE oracle frame by frame") {
  using namespace boost::numeric::odeint;
  using Vec = std::array<double, 2>;
  OregonatorParams p;
  p.D = 0.0;
  p.grid = 1;
  State s({2, 1, 1}, std::vector<float>{0.4f, 0.3f});
  const Trajectory t = rollout(p, s, 120);
  auto rhs = [&](const Vec& x, Vec& dx, double) { dx = tyson_rate(x[0], x[1], p); };
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < t.length(); ++i) {
    Vec x{t.frames[i][0], t.frames[i][1]};
    integrate_adaptive(make_controlled(1e-13, 1e-13, runge_kutta_dopri5<Vec>()), rhs, x, 0.0, p.dt, 1e-5);
    worst = std::max({worst, std::abs(x[0] - t.frames[i + 1][0]), std::abs(x[1] - t.frames[i + 1][1])});
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("Oregonator: Newton residual below 1e-10 on every accepted substep") {
  Rng rng(11);
  OregonatorParams p;
  for (int i = 0; i < 2000; ++i) {
    p.eps = rng.uniform(0.01, 0.15);
    p.f = rng.uniform(0.3, 2.5);
    const auto r = implicit_euler_cell(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(1e-4, 0.05), p);
    CHECK(r.residual < 1e-10);
    CHECK(r.iterations <= 50);
  }
}

TEST_CASE("Oregonator diffusion substep count") {
  OregonatorParams p;
  p.dx = 0.5;
  Field s(2, 4, 4, 0.3);
  CHECK(diffuse(s, 0.05, p) == 1);
  p.dx = 0.1;  // limit 0.0025 -> 20 substeps
  CHECK(diffuse(s, 0.05, p) == 20);
  p.D = 0.0;
  CHECK(diffuse(s, 0.05, p) == 0);
}

TEST_CASE("Oregonator diffusion conserves the channel mean") {
  OregonatorParams p;
  Field s(2, 16, 16);
  Rng rng(4);
  for (auto& v : s.data) v = rng.uniform();
  const double before = channel_sum(s, 0);
  diffuse(s, 0.3, p);
  CHECK(channel_sum(s, 0) == doctest::Approx(before).epsilon(1e-13));
}

TEST_CASE("Oregonator initial conditions") {
  OregonatorParams p;
  p.grid = 32;
  Rng rng(5);
  for (const char* kind : {"spiral", "target", "random"}) {
    for (double f : {0.35, 1.5}) {
      p.f = f;
      const State s = make_initial(p, {.kind = kind}, rng);
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < 32 * 32; ++i) mean += s[i] / 1024.0;
      for (std::size_t i = 0; i < 32 * 32; ++i) var += (s[i] - mean) * (s[i] - mean) / 1024.0;
      CAPTURE(kind);
      CHECK(var > 0.0);
      for (float v : s.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
  CHECK_THROWS_AS(make_initial(p, {.kind = "vortex"}, rng), std::invalid_argument);
}

TEST_CASE("Ball: head-on floor hit reflects with restitution") {
  BallParams p;
  p.gravity = 0.0;
  p.restitution = 0.8;
  BallState s{0.3, 0.6, 0.001, 0.25, -0.5, -2.0, 1, 2, 3};
  ball_frame(s, p, p.substeps);
  CHECK(s[5] == 0.8 * 2.0);
  CHECK(s[3] == 0.25);
  CHECK(s[4] == -0.5);
}

TEST_CASE("Ball: impact speed follows the ballistic arc under gravity") {
  BallParams p;
  p.restitution = 0.9;
  const double h = p.dt / p.substeps;
  BallState s{0.5, 0.5, 1e-4, 0.0, 0.0, -1.5, 0, 0, 0};
  const double expect = 0.9 * std::sqrt(1.5 * 1.5 + 2.0 * std::abs(p.gravity) * 1e-4);
  BallEvents ev;
  ball_substep(s, p, h, &ev);
  CHECK(ev.impacts == 1);
  CHECK(s[2] == 0.0);
  CHECK(s[5] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("Ball: angular velocity is untouched") {
  Rng rng(2);
  BallParams p;
  for (int i = 0; i < 50; ++i) {
    const State s = make_initial(p, {.kind = "default"}, rng);
    const State n = advance(p, s, 30);
    for (std::size_t a = 6; a < 9; ++a) CHECK(n[a] == s[a]);
  }
}

TEST_CASE("Ball: drop from rest matches the ballistic formula within the semi-implicit bound") {
  BallParams p;
  const double h = p.dt / p.substeps;
  BallState s{0.5, 0.5, 0.9, 0, 0, 0, 0, 0, 0};
  for (int frame = 1; frame <= 10; ++frame) {
    ball_frame(s, p, p.substeps);
    const double t = frame * p.dt;
    const double exact = 0.9 + 0.5 * p.gravity * t * t;
    CHECK(std::abs(s[2] - exact) <= std::abs(p.gravity) * h * t / 2 + 1e-9);
  }
}

TEST_CASE("Ball: energy never increases; collision frames lose energy") {
  Rng rng(8);
  BallParams p;
  int collision_frames = 0;
  for (int traj = 0; traj < 60; ++traj) {
    p.restitution = rng.uniform(0.3, 0.99);
    p.gravity = rng.uniform(-15.0, -5.0);
    const Trajectory t = rollout(p, make_initial(p, {.kind = "default"}, rng), 101);
    for (std::size_t i = 0; i + 1 < t.length(); ++i) {
      BallState a, b;
      for (std::size_t k = 0; k < 9; ++k) {
        a[k] = t.frames[i][k];
        b[k] = t.frames[i + 1][k];
      }
      BallState replay = a;
      BallEvents ev;
      ball_frame(replay, p, p.substeps, &ev);
      const double e0 = ball_energy(a, p.gravity), e1 = ball_energy(b, p.gravity);
      CHECK(e1 <= e0 + 1e-9);
      if (ev.max_impact_speed > 1e-3) {
        ++collision_frames;
        CHECK(e1 < e0);
      }
    }
  }
  CHECK(collision_frames > 100);
}

TEST_CASE("Ball initial conditions") {
  Rng rng(6);
  BallParams p;
  for (int i = 0; i < 500; ++i) {
    const State s = make_initial(p, {.kind = "default"}, rng);
    const double speed = std::sqrt(double(s[3]) * s[3] + double(s[4]) * s[4] + double(s[5]) * s[5]);
    CHECK(speed >= 1.0 - 1e-6);
    CHECK(speed <= 3.0 + 1e-6);
    for (int a = 0; a < 3; ++a) {
      CHECK(s[a] > 0.0f);
      CHECK(s[a] < 1.0f);
      CHECK(std::abs(s[6 + a]) <= 5.0f);
    }
  }
}

TEST_CASE("Solver semigroup: rollout(2T) equals rollout(T) restarted, bitwise") {
  Rng rng(21);
  OregonatorParams o;
  o.grid = 16;
  EulerParams e;
  e.grid = 32;
  BallParams b;
  const std::vector<std::pair<EnvParams, InitialCondition>> cases{
      {o, {.kind = "spiral"}}, {e, {.kind = "quadrant", .config = 6}}, {e, {.kind = "sedov"}}, {b, {.kind = "default"}}};
  const int T = 12;
  for (const auto& [params, ic] : cases) {
    const State s = make_initial(params, ic, rng);
    const Trajectory full = rollout(params, s, 2 * T);
    const Trajectory first = rollout(params, s, T);
    const Trajectory second = rollout(params, first.frames.back(), T + 1);
    CHECK(second.frames.back() == full.frames.back());
    CHECK(advance(params, s, 2 * T - 1) == full.frames.back());
  }
}

TEST_CASE("Refined solver leg differs from the standard leg but stays close") {
  Rng rng(1);
  EulerParams e;  // at the desk grid the CFL step is shorter than a frame
  const State s = make_initial(e, {.kind = "quadrant", .config = 3}, rng);
  const State a = advance(e, s, 4), b = advance(e, s, 4, Resolution::Half);
  CHECK_FALSE(a == b);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
  CHECK(worst < 0.5);
}

TEST_CASE("Parameter lists round-trip") {
  OregonatorParams o;
  o.eps = 0.031;
  o.f = 1.7;
  const EnvParams back = params_from_list(EnvId::Oregonator, to_param_list(o), o.grid);
  CHECK(std::get<OregonatorParams>(back).eps == 0.031);
  CHECK(std::get<OregonatorParams>(back).f == 1.7);
  BallParams b;
  b.restitution = 0.42;
  CHECK(std::get<BallParams>(params_from_list(EnvId::Ball, to_param_list(b), 1)).restitution == 0.42);
  CHECK(env_from_string("euler") == EnvId::Euler);
  CHECK_THROWS_AS(env_from_string("water"), std::invalid_argument);
}
