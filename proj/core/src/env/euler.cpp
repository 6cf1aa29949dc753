#include "hwm/env/euler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hwm::env {

double pressure(const Cons& q, double gamma) {
  const double ke = 0.5 * (q[1] * q[1] + q[2] * q[2]) / q[0];
  return (gamma - 1.0) * (q[3] - ke);
}

Cons conserved(double rho, double u, double v, double p, double gamma) {
  return {rho, rho * u, rho * v, p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v)};
}

Cons physical_flux(const Cons& q, Axis axis, double gamma) {
  const double p = pressure(q, gamma);
  const double un = (axis == Axis::X ? q[1] : q[2]) / q[0];
  Cons f{q[0] * un, q[1] * un, q[2] * un, (q[3] + p) * un};
  f[axis == Axis::X ? 1 : 2] += p;
  return f;
}

namespace {

std::string describe(const Cons& q, double p) {
  std::ostringstream os;
  os << "rho=" << q[0] << " p=" << p;
  return os.str();
}

}  // namespace

Cons hll_flux(const Cons& qL, const Cons& qR, Axis axis, double gamma) {
  const double pL = pressure(qL, gamma), pR = pressure(qR, gamma);
  if (!(qL[0] > 0.0 && pL > 0.0)) throw SolverError("hll_flux: non-physical left state " + describe(qL, pL));
  if (!(qR[0] > 0.0 && pR > 0.0)) throw SolverError("hll_flux: non-physical right state " + describe(qR, pR));
  const int n = axis == Axis::X ? 1 : 2;
  const double uL = qL[n] / qL[0], uR = qR[n] / qR[0];
  const double cL = std::sqrt(gamma * pL / qL[0]), cR = std::sqrt(gamma * pR / qR[0]);
  const double sL = std::min(uL - cL, uR - cR);
  const double sR = std::max(uL + cL, uR + cR);
  const Cons fL = physical_flux(qL, axis, gamma);
  if (sL >= 0.0) return fL;
  const Cons fR = physical_flux(qR, axis, gamma);
  if (sR <= 0.0) return fR;
  // Written as F_L + s_L (U* - U_L); reduces to F(q) exactly when qL == qR.
  Cons f;
  for (int k = 0; k < 4; ++k) {
    f[k] = fL[k] + sL * (sR * (qR[k] - qL[k]) - (fR[k] - fL[k])) / (sR - sL);
  }
  return f;
}

void check_physical(const Field& q, double gamma, const char* context) {
  const std::size_t n = q.plane();
  for (std::size_t i = 0; i < n; ++i) {
    const Cons c{q.data[i], q.data[n + i], q.data[2 * n + i], q.data[3 * n + i]};
    const double p = c[0] > 0.0 ? pressure(c, gamma) : 0.0;
    if (!(c[0] > 0.0 && p > 0.0 && std::isfinite(p))) {
      std::ostringstream os;
      os << "euler: non-physical cell (y=" << i / q.width << ", x=" << i % q.width << ") " << context << ": "
         << describe(c, p);
      throw SolverError(os.str());
    }
  }
}

double euler_cfl_dt(const Field& q, const EulerParams& p) {
  const double dx = 1.0 / static_cast<double>(q.width), dy = 1.0 / static_cast<double>(q.height);
  const std::size_t n = q.plane();
  double dt = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    const Cons c{q.data[i], q.data[n + i], q.data[2 * n + i], q.data[3 * n + i]};
    const double cs = std::sqrt(p.gamma * pressure(c, p.gamma) / c[0]);
    const double u = std::abs(c[1] / c[0]), v = std::abs(c[2] / c[0]);
    dt = std::min(dt, std::min(dx / (u + cs), dy / (v + cs)));
  }
  return p.cfl * dt;
}

double euler_step(Field& q, const EulerParams& p, double dt_limit) {
  const std::size_t H = q.height, W = q.width, n = q.plane();
  const double dt = std::min(euler_cfl_dt(q, p), dt_limit);
  const double lx = dt * static_cast<double>(W), ly = dt * static_cast<double>(H);
  const bool periodic = p.bc == Boundary::Periodic;

  auto cell = [&](std::size_t i) { return Cons{q.data[i], q.data[n + i], q.data[2 * n + i], q.data[3 * n + i]}; };
  // Neighbour index with ghost handling: clamp (zero-gradient) or wrap.
  auto nb = [periodic](std::ptrdiff_t k, std::size_t len) {
    const auto L = static_cast<std::ptrdiff_t>(len);
    if (k < 0) return static_cast<std::size_t>(periodic ? k + L : 0);
    if (k >= L) return static_cast<std::size_t>(periodic ? k - L : L - 1);
    return static_cast<std::size_t>(k);
  };

  Field next = q;
  std::vector<Cons> fx(W + 1), fy((H + 1) * W);
  for (std::size_t y = 0; y <= H; ++y) {
    const std::size_t yl = nb(static_cast<std::ptrdiff_t>(y) - 1, H), yr = nb(static_cast<std::ptrdiff_t>(y), H);
    for (std::size_t x = 0; x < W; ++x) fy[y * W + x] = hll_flux(cell(yl * W + x), cell(yr * W + x), Axis::Y, p.gamma);
  }
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x <= W; ++x) {
      const std::size_t xl = nb(static_cast<std::ptrdiff_t>(x) - 1, W), xr = nb(static_cast<std::ptrdiff_t>(x), W);
      fx[x] = hll_flux(cell(y * W + xl), cell(y * W + xr), Axis::X, p.gamma);
    }
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      for (std::size_t k = 0; k < 4; ++k) {
        next.data[k * n + i] -= lx * (fx[x + 1][k] - fx[x][k]) + ly * (fy[(y + 1) * W + x][k] - fy[y * W + x][k]);
      }
    }
  }
  q = std::move(next);
  return dt;
}

int euler_frame(Field& q, const EulerParams& p, int split) {
  if (split < 1) throw std::invalid_argument("euler frame split must be >= 1");
  double t = 0.0;
  int steps = 0;
  auto check = [&](double dt) {
    std::ostringstream ctx;
    ctx << "after internal step " << steps << " (t=" << t << ", dt=" << dt << ")";
    check_physical(q, p.gamma, ctx.str().c_str());
  };
  while (t < p.dt_frame) {
    const double remaining = p.dt_frame - t;
    if (split == 1) {
      const double dt = euler_step(q, p, remaining);
      ++steps;
      t = dt == remaining ? p.dt_frame : t + dt;
      check(dt);
      continue;
    }
    // The standard step h, taken as `split` equal parts.
    const double h = std::min(euler_cfl_dt(q, p), remaining);
    double done = 0.0;
    while (done < h) {
      const double left = h - done;
      const double dt = euler_step(q, p, std::min(h / split, left));
      ++steps;
      done = dt == left ? h : done + dt;
      check(dt);
    }
    t = h == remaining ? p.dt_frame : t + h;
  }
  return steps;
}

Field sedov_field(std::size_t grid, double e0, double rho_bg) {
  if (grid < 2 || grid % 2 != 0) throw std::invalid_argument("sedov initial condition needs an even grid");
  Field q(4, grid, grid);
  const std::size_t n = q.plane();
  const double e_bg = kSedovBackgroundEnergy;
  for (std::size_t i = 0; i < n; ++i) {
    q.data[i] = rho_bg;
    q.data[3 * n + i] = e_bg;
  }
  const double cell_area = 1.0 / static_cast<double>(n);
  const double deposit = e0 / (4.0 * cell_area);
  const std::size_t c = grid / 2;
  for (std::size_t y = c - 1; y <= c; ++y)
    for (std::size_t x = c - 1; x <= c; ++x) q(3, y, x) = e_bg + deposit;
  return q;
}

std::array<Primitive, 4> quadrant_config(int config) {
  switch (config) {
    case 3:
      return {{{1.5, 0.0, 0.0, 1.5}, {0.5323, 1.206, 0.0, 0.3}, {0.138, 1.206, 1.206, 0.029}, {0.5323, 0.0, 1.206, 0.3}}};
    case 4:
      return {{{1.1, 0.0, 0.0, 1.1}, {0.5065, 0.8939, 0.0, 0.35}, {1.1, 0.8939, 0.8939, 1.1}, {0.5065, 0.0, 0.8939, 0.35}}};
    case 6:
      return {{{1.0, 0.75, -0.5, 1.0}, {2.0, 0.75, 0.5, 1.0}, {1.0, -0.75, 0.5, 1.0}, {3.0, -0.75, -0.5, 1.0}}};
    case 12:
      return {{{0.5313, 0.0, 0.0, 0.4}, {1.0, 0.7276, 0.0, 1.0}, {0.8, 0.0, 0.0, 1.0}, {1.0, 0.0, 0.7276, 1.0}}};
    default:
      throw std::invalid_argument("unknown quadrant configuration " + std::to_string(config) +
                                  " (expected 3, 4, 6 or 12)");
  }
}

Field quadrant_field(std::size_t grid, int config, double xc, double yc, double gamma) {
  const auto quads = quadrant_config(config);
  Field q(4, grid, grid);
  const double h = 1.0 / static_cast<double>(grid);
  for (std::size_t y = 0; y < grid; ++y) {
    const double cy = (static_cast<double>(y) + 0.5) * h;
    for (std::size_t x = 0; x < grid; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) * h;
      const int k = cy > yc ? (cx > xc ? 0 : 1) : (cx > xc ? 3 : 2);
      const Primitive& w = quads[static_cast<std::size_t>(k)];
      const Cons c = conserved(w.rho, w.u, w.v, w.p, gamma);
      for (std::size_t ch = 0; ch < 4; ++ch) q(ch, y, x) = c[ch];
    }
  }
  return q;
}

}  // namespace hwm::env
