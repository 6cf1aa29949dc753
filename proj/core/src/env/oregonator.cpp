#include "hwm/env/oregonator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hwm::env {

std::array<double, 2> tyson_rate(double u, double v, const OregonatorParams& p) {
  return {(u - u * u - p.f * v * (u - p.q) / (u + p.q)) / p.eps, u - v};
}

ImplicitEulerResult implicit_euler_cell(double u0, double v0, double h, const OregonatorParams& p) {
  // With v = (v0 + h u) / (1 + h) the system reduces to g(u) = 0.
  const double a = h / p.eps, b = 1.0 / (1.0 + h);
  auto g = [&](double u, double& dg) {
    const double v = (v0 + h * u) * b;
    const double s = u + p.q;
    const double frac = (u - p.q) / s;
    dg = 1.0 - a * (1.0 - 2.0 * u - p.f * (h * b * frac + v * 2.0 * p.q / (s * s)));
    return u - u0 - a * (u - u * u - p.f * v * frac);
  };
  // g(0) <= 0 and g(max(1, u0) + 1) > 0 for non-negative (u0, v0).
  double lo = 0.0, hi = std::max(1.0, u0) + 1.0;
  double u = std::clamp(u0, lo, hi), dg = 0.0;
  double r = g(u, dg);
  int it = 0;
  for (; it < 50 && std::abs(r) >= 1e-13; ++it) {
    (r < 0.0 ? lo : hi) = u;
    double next = dg > 0.0 ? u - r / dg : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == u) break;
    u = next;
    r = g(u, dg);
  }
  if (!(std::abs(r) < 1e-10)) {
    std::ostringstream os;
    os << "oregonator: Newton did not converge (residual " << r << " after " << it << " iterations, u0=" << u0
       << ", v0=" << v0 << ", h=" << h << ")";
    throw SolverError(os.str());
  }
  return {u, (v0 + h * u) * b, it, std::abs(r)};
}

namespace {

constexpr int kTableSize = 8;
constexpr double kExtrapolationTol = 1e-10;

std::array<double, 2> react_interval(double u, double v, double h, const OregonatorParams& p, int depth) {
  double tu[kTableSize][kTableSize], tv[kTableSize][kTableSize];
  for (int j = 0; j < kTableSize; ++j) {
    const int n = j + 1;
    double cu = u, cv = v;
    for (int s = 0; s < n; ++s) {
      const ImplicitEulerResult r = implicit_euler_cell(cu, cv, h / n, p);
      cu = r.u;
      cv = r.v;
    }
    tu[j][0] = cu;
    tv[j][0] = cv;
    for (int k = 1; k <= j; ++k) {
      const double ratio = static_cast<double>(n) / static_cast<double>(n - k);
      tu[j][k] = tu[j][k - 1] + (tu[j][k - 1] - tu[j - 1][k - 1]) / (ratio - 1.0);
      tv[j][k] = tv[j][k - 1] + (tv[j][k - 1] - tv[j - 1][k - 1]) / (ratio - 1.0);
    }
    if (j > 0) {
      const double err = std::max(std::abs(tu[j][j] - tu[j - 1][j - 1]), std::abs(tv[j][j] - tv[j - 1][j - 1]));
      if (err < kExtrapolationTol) return {std::max(tu[j][j], 0.0), std::max(tv[j][j], 0.0)};
    }
  }
  if (depth >= 40) throw SolverError("oregonator: reaction step did not settle after repeated interval halving");
  const auto mid = react_interval(u, v, 0.5 * h, p, depth + 1);
  return react_interval(mid[0], mid[1], 0.5 * h, p, depth + 1);
}

}  // namespace

std::array<double, 2> react_cell(double u, double v, double h, const OregonatorParams& p) {
  if (h <= 0.0) return {u, v};
  return react_interval(std::max(u, 0.0), std::max(v, 0.0), h, p, 0);
}

int diffuse(Field& s, double dt, const OregonatorParams& p) {
  if (p.D == 0.0) return 0;
  const double limit = 0.25 * p.dx * p.dx / p.D;
  const int n = static_cast<int>(std::ceil(dt / limit));
  const double r = p.D * (dt / n) / (p.dx * p.dx);
  const std::size_t H = s.height, W = s.width;
  std::vector<double> tmp(s.plane());
  for (std::size_t c = 0; c < s.channels; ++c) {
    double* a = s.channel(c);
    for (int step = 0; step < n; ++step) {
      for (std::size_t y = 0; y < H; ++y) {
        const std::size_t yn = (y + 1) % H, ys = (y + H - 1) % H;
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t xe = (x + 1) % W, xw = (x + W - 1) % W;
          const double centre = a[y * W + x];
          tmp[y * W + x] =
              centre + r * (a[y * W + xe] + a[y * W + xw] + a[yn * W + x] + a[ys * W + x] - 4.0 * centre);
        }
      }
      std::copy(tmp.begin(), tmp.end(), a);
    }
  }
  return n;
}

namespace {

void react_field(Field& s, double h, const OregonatorParams& p) {
  double* u = s.channel(0);
  double* v = s.channel(1);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    try {
      const auto r = react_cell(u[i], v[i], h, p);
      u[i] = r[0];
      v[i] = r[1];
    } catch (const SolverError& e) {
      std::ostringstream os;
      os << e.what() << " at cell (y=" << i / s.width << ", x=" << i % s.width << ")";
      throw SolverError(os.str());
    }
  }
}

}  // namespace

void oregonator_frame(Field& s, const OregonatorParams& p, double dt) {
  react_field(s, 0.5 * dt, p);
  diffuse(s, dt, p);
  react_field(s, 0.5 * dt, p);
}

std::array<double, 2> oregonator_fixed_point(const OregonatorParams& p) {
  // On v = u the non-trivial root solves 1 - u - f (u - q) / (u + q) = 0.
  auto h = [&](double u) { return 1.0 - u - p.f * (u - p.q) / (u + p.q); };
  double lo = p.q, hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-16; ++i) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) > 0.0 ? lo : hi) = mid;
  }
  const double u = 0.5 * (lo + hi);
  return {u, u};
}

std::vector<std::array<double, 2>> oregonator_limit_cycle(const OregonatorParams& p, std::size_t samples) {
  const double h = 0.01;
  const int burn = 2000, window = 6000;
  double u = 0.5, v = 0.2;
  for (int i = 0; i < burn; ++i) {
    const auto r = react_cell(u, v, h, p);
    u = r[0];
    v = r[1];
  }
  std::vector<std::array<double, 2>> path(static_cast<std::size_t>(window));
  double umin = INFINITY, umax = -INFINITY;
  for (auto& st : path) {
    const auto r = react_cell(u, v, h, p);
    u = r[0];
    v = r[1];
    st = {u, v};
    umin = std::min(umin, u);
    umax = std::max(umax, u);
  }
  if (umax - umin < 0.1) return {};
  const double level = 0.5 * (umin + umax);
  std::vector<std::size_t> ups;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (path[i - 1][0] < level && path[i][0] >= level) ups.push_back(i);
  if (ups.size() < 3) return {};
  const double period = h * static_cast<double>(ups[2] - ups[1]);
  std::vector<std::array<double, 2>> cycle(samples);
  u = path[ups[1]][0];
  v = path[ups[1]][1];
  for (std::size_t k = 0; k < samples; ++k) {
    cycle[k] = {u, v};
    const auto r = react_cell(u, v, period / static_cast<double>(samples), p);
    u = r[0];
    v = r[1];
  }
  return cycle;
}

}  // namespace hwm::env
