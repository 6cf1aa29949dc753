#include "hwm/env/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hwm/env/ball.hpp"
#include "hwm/env/euler.hpp"
#include "hwm/env/field.hpp"
#include "hwm/env/oregonator.hpp"

namespace hwm::env {

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::Oregonator:
      return "oregonator";
    case EnvId::Euler:
      return "euler";
    case EnvId::Ball:
      return "ball";
  }
  return "unknown";
}

EnvId env_from_string(const std::string& name) {
  if (name == "oregonator") return EnvId::Oregonator;
  if (name == "euler") return EnvId::Euler;
  if (name == "ball") return EnvId::Ball;
  throw std::invalid_argument("unknown environment '" + name + "' (expected oregonator, euler or ball)");
}

Field Field::from_state(const State& s) {
  if (s.rank() != 3) throw nn::ShapeError("field state must be C x H x W, got " + nn::shape_str(s.shape()));
  Field f(s.dim(0), s.dim(1), s.dim(2));
  std::copy(s.data().begin(), s.data().end(), f.data.begin());
  return f;
}

State Field::to_state() const {
  State s({channels, height, width});
  std::transform(data.begin(), data.end(), s.ptr(), [](double v) { return static_cast<float>(v); });
  return s;
}

EnvId env_of(const EnvParams& p) { return static_cast<EnvId>(p.index()); }

nn::Shape state_shape(const EnvParams& p) {
  switch (env_of(p)) {
    case EnvId::Oregonator: {
      const auto g = std::get<OregonatorParams>(p).grid;
      return {2, g, g};
    }
    case EnvId::Euler: {
      const auto g = std::get<EulerParams>(p).grid;
      return {4, g, g};
    }
    case EnvId::Ball:
      return {9};
  }
  return {};
}

double frame_dt(const EnvParams& p) {
  return std::visit(
      [](const auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, EulerParams>) {
          return q.dt_frame;
        } else {
          return q.dt;
        }
      },
      p);
}

void validate(const EnvParams& p) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  if (const auto* o = std::get_if<OregonatorParams>(&p)) {
    need(o->eps > 0 && o->q > 0, "oregonator needs eps > 0 and q > 0");
    need(o->D >= 0, "oregonator needs D >= 0");
    need(o->dx > 0 && o->dt > 0 && o->grid >= 1, "oregonator needs dx > 0, dt > 0, grid >= 1");
  } else if (const auto* e = std::get_if<EulerParams>(&p)) {
    need(e->gamma > 1, "euler needs gamma > 1");
    need(e->cfl > 0 && e->cfl < 1, "euler needs 0 < cfl < 1");
    need(e->dt_frame > 0 && e->grid >= 2, "euler needs dt > 0 and grid >= 2");
  } else {
    const auto& b = std::get<BallParams>(p);
    need(b.substeps >= 1, "ball needs substeps >= 1");
    need(b.restitution > 0 && b.restitution <= 1, "ball needs restitution in (0, 1]");
    need(b.dt > 0, "ball needs dt > 0");
  }
}

ParamList to_param_list(const EnvParams& p) {
  if (const auto* o = std::get_if<OregonatorParams>(&p)) {
    return {{"eps", o->eps}, {"q", o->q}, {"f", o->f}, {"D", o->D}, {"dx", o->dx}, {"dt", o->dt}};
  }
  if (const auto* e = std::get_if<EulerParams>(&p)) {
    return {{"gamma", e->gamma},
            {"cfl", e->cfl},
            {"dt", e->dt_frame},
            {"bc", e->bc == Boundary::Periodic ? 1.0 : 0.0}};
  }
  const auto& b = std::get<BallParams>(p);
  return {{"gravity", b.gravity}, {"restitution", b.restitution}, {"substeps", b.substeps}, {"dt", b.dt}};
}

double param_value(const ParamList& list, const std::string& name) {
  for (const auto& [k, v] : list)
    if (k == name) return v;
  throw std::invalid_argument("parameter '" + name + "' missing");
}

EnvParams params_from_list(EnvId id, const ParamList& list, std::size_t grid) {
  auto get = [&](const char* name, double fallback) {
    for (const auto& [k, v] : list)
      if (k == name) return v;
    return fallback;
  };
  switch (id) {
    case EnvId::Oregonator: {
      OregonatorParams o;
      o.eps = get("eps", o.eps);
      o.q = get("q", o.q);
      o.f = get("f", o.f);
      o.D = get("D", o.D);
      o.dx = get("dx", o.dx);
      o.dt = get("dt", o.dt);
      o.grid = grid;
      return o;
    }
    case EnvId::Euler: {
      EulerParams e;
      e.gamma = get("gamma", e.gamma);
      e.cfl = get("cfl", e.cfl);
      e.dt_frame = get("dt", e.dt_frame);
      e.bc = get("bc", 0.0) != 0.0 ? Boundary::Periodic : Boundary::Transmissive;
      e.grid = grid;
      return e;
    }
    case EnvId::Ball: {
      BallParams b;
      b.gravity = get("gravity", b.gravity);
      b.restitution = get("restitution", b.restitution);
      b.substeps = static_cast<int>(get("substeps", b.substeps));
      b.dt = get("dt", b.dt);
      return b;
    }
  }
  throw std::invalid_argument("unknown environment id");
}

namespace {

void check_shape(const EnvParams& p, const State& s) {
  const nn::Shape want = state_shape(p);
  if (s.shape() != want) {
    throw nn::ShapeError(to_string(env_of(p)) + " state must be " + nn::shape_str(want) + ", got " +
                         nn::shape_str(s.shape()));
  }
}

BallState to_ball(const State& s) {
  BallState b;
  for (std::size_t i = 0; i < 9; ++i) b[i] = s[i];
  return b;
}

State from_ball(const BallState& b) {
  State s({9});
  for (std::size_t i = 0; i < 9; ++i) s[i] = static_cast<float>(b[i]);
  return s;
}

State advance_one(const EnvParams& p, const State& s, Resolution res) {
  switch (env_of(p)) {
    case EnvId::Oregonator: {
      const auto& o = std::get<OregonatorParams>(p);
      Field f = Field::from_state(s);
      if (res == Resolution::Half) {
        oregonator_frame(f, o, 0.5 * o.dt);
        oregonator_frame(f, o, 0.5 * o.dt);
      } else {
        oregonator_frame(f, o, o.dt);
      }
      return f.to_state();
    }
    case EnvId::Euler: {
      const auto& e = std::get<EulerParams>(p);
      Field f = Field::from_state(s);
      check_physical(f, e.gamma, "in the input state");
      euler_frame(f, e, res == Resolution::Half ? 2 : 1);
      return f.to_state();
    }
    case EnvId::Ball: {
      const auto& b = std::get<BallParams>(p);
      BallState st = to_ball(s);
      for (int a = 0; a < 3; ++a) {
        if (!(st[a] >= 0.0 && st[a] <= 1.0)) throw SolverError("ball: position outside the unit cube");
      }
      ball_frame(st, b, res == Resolution::Half ? 2 * b.substeps : b.substeps);
      return from_ball(st);
    }
  }
  throw std::invalid_argument("unknown environment id");
}

}  // namespace

State advance(const EnvParams& p, const State& s, int frames, Resolution res) {
  check_shape(p, s);
  if (frames < 0) throw std::invalid_argument("cannot advance a negative number of frames");
  State cur = s;
  for (int i = 0; i < frames; ++i) cur = advance_one(p, cur, res);
  return cur;
}

Trajectory rollout(const EnvParams& p, const State& ic, int frames) {
  if (frames < 2) throw std::invalid_argument("rollout needs at least 2 frames");
  check_shape(p, ic);
  Trajectory t;
  t.env = env_of(p);
  t.dt = frame_dt(p);
  t.params = to_param_list(p);
  t.frames.reserve(static_cast<std::size_t>(frames));
  t.frames.push_back(ic);
  for (int i = 1; i < frames; ++i) t.frames.push_back(advance_one(p, t.frames.back(), Resolution::Standard));
  return t;
}

namespace {

double wrap_delta(double d, double n) {
  d = std::fmod(d, n);
  if (d > 0.5 * n) d -= n;
  if (d < -0.5 * n) d += n;
  return d;
}

/// Separable periodic Gaussian blur, sigma in cells.
void blur(double* a, std::size_t H, std::size_t W, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& w : k) w /= norm;
  std::vector<double> tmp(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const auto xx = static_cast<std::size_t>((static_cast<long>(x) + i + 64 * static_cast<long>(W)) % static_cast<long>(W));
        acc += k[static_cast<std::size_t>(i + radius)] * a[y * W + xx];
      }
      tmp[y * W + x] = acc;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const auto yy = static_cast<std::size_t>((static_cast<long>(y) + i + 64 * static_cast<long>(H)) % static_cast<long>(H));
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[yy * W + x];
      }
      a[y * W + x] = acc;
    }
}

State oregonator_initial(const OregonatorParams& p, const std::string& kind, Rng& rng) {
  const std::size_t n = p.grid;
  const auto n_d = static_cast<double>(n);
  Field f(2, n, n);
  const auto rest = oregonator_fixed_point(p);
  if (kind == "spiral") {
    const double cx = rng.uniform(0.25, 0.75) * n_d, cy = rng.uniform(0.25, 0.75) * n_d;
    const double chirality = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double offset = rng.uniform();
    const auto cycle = oregonator_limit_cycle(p, 256);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = wrap_delta(static_cast<double>(x) + 0.5 - cx, n_d);
        const double dy = wrap_delta(static_cast<double>(y) + 0.5 - cy, n_d);
        double phase = chirality * std::atan2(dy, dx) / (2.0 * std::numbers::pi) + offset;
        phase -= std::floor(phase);
        if (!cycle.empty()) {
          const auto& st = cycle[std::min(cycle.size() - 1, static_cast<std::size_t>(phase * static_cast<double>(cycle.size())))];
          f(0, y, x) = st[0];
          f(1, y, x) = st[1];
        } else {
          // Excitable kinetics: an excited sector with a refractory tail
          // behind it, which curls into a spiral.
          f(0, y, x) = phase < 0.25 ? 0.8 : rest[0];
          f(1, y, x) = phase < 0.25 ? rest[1] : rest[1] + 0.4 * (1.0 - phase);
        }
      }
  } else if (kind == "target") {
    const double cx = rng.uniform(0.0, n_d), cy = rng.uniform(0.0, n_d);
    const double radius = rng.uniform(2.0, 5.0);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = wrap_delta(static_cast<double>(x) + 0.5 - cx, n_d);
        const double dy = wrap_delta(static_cast<double>(y) + 0.5 - cy, n_d);
        f(0, y, x) = std::hypot(dx, dy) < radius ? 0.8 : rest[0];
        f(1, y, x) = rest[1];
      }
  } else if (kind == "random") {
    for (std::size_t c = 0; c < 2; ++c) {
      double* a = f.channel(c);
      for (std::size_t i = 0; i < f.plane(); ++i) a[i] = rng.uniform() * (c == 0 ? 1.0 : 0.5);
      blur(a, n, n, 3.0);
    }
  } else {
    throw std::invalid_argument("unknown oregonator initial condition '" + kind + "' (spiral, target, random)");
  }
  for (auto& v : f.data) v = std::clamp(v, 0.0, 1.0);
  return f.to_state();
}

}  // namespace

State make_initial(const EnvParams& p, const InitialCondition& ic, Rng& rng) {
  validate(p);
  switch (env_of(p)) {
    case EnvId::Oregonator:
      return oregonator_initial(std::get<OregonatorParams>(p), ic.kind, rng);
    case EnvId::Euler: {
      const auto& e = std::get<EulerParams>(p);
      Field f;
      if (ic.kind == "sedov") {
        if (!(ic.e0 > 0 && ic.rho_bg > 0)) throw std::invalid_argument("sedov needs e0 > 0 and rho_bg > 0");
        f = sedov_field(e.grid, ic.e0, ic.rho_bg);
      } else if (ic.kind == "quadrant") {
        f = quadrant_field(e.grid, ic.config, ic.xc, ic.yc, e.gamma);
      } else {
        throw std::invalid_argument("unknown euler initial condition '" + ic.kind + "' (sedov, quadrant)");
      }
      State s = f.to_state();
      check_physical(Field::from_state(s), e.gamma, "in the initial condition");
      return s;
    }
    case EnvId::Ball: {
      if (ic.kind != "default") throw std::invalid_argument("unknown ball initial condition '" + ic.kind + "' (default)");
      BallState b{};
      for (int a = 0; a < 3; ++a) b[a] = rng.uniform(0.1, 0.9);
      double dir[3], norm = 0.0;
      do {
        norm = 0.0;
        for (double& d : dir) {
          d = rng.normal();
          norm += d * d;
        }
      } while (norm < 1e-12);
      norm = std::sqrt(norm);
      const double speed = rng.uniform(1.0, 3.0);
      for (int a = 0; a < 3; ++a) b[3 + a] = speed * dir[a] / norm;
      for (int a = 0; a < 3; ++a) b[6 + a] = rng.uniform(-5.0, 5.0);
      return from_ball(b);
    }
  }
  throw std::invalid_argument("unknown environment id");
}

}  // namespace hwm::env
