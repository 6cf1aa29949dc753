#include "hwm/env/ball.hpp"

#include <algorithm>
#include <cmath>

namespace hwm::env {

double ball_energy(const BallState& s, double gravity) {
  return 0.5 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]) + std::abs(gravity) * s[2];
}

void ball_substep(BallState& s, const BallParams& p, double h, BallEvents* events) {
  const BallState start = s;
  s[5] += p.gravity * h;
  for (int a = 0; a < 3; ++a) s[a] += s[3 + a] * h;

  for (int a = 0; a < 3; ++a) {
    const double x = s[a];
    if (x >= 0.0 && x <= 1.0) continue;
    const double wall = x < 0.0 ? 0.0 : 1.0;
    const double g = a == 2 ? p.gravity : 0.0;
    const double x0 = start[a], v0 = start[3 + a];
    // Speed at the wall along the exact arc: v^2 = v0^2 + 2 g (wall - x0).
    const double speed2 = v0 * v0 + 2.0 * g * (wall - x0);
    if (speed2 < 0.0) {
      // The exact arc turns before the wall (apex just under the ceiling);
      // stop at the apex so the correction never adds energy.
      s[a] = x0 - v0 * v0 / (2.0 * g);
      s[3 + a] = 0.0;
      continue;
    }
    const double speed = std::sqrt(speed2);
    s[a] = wall;
    s[3 + a] = (wall == 0.0 ? 1.0 : -1.0) * p.restitution * speed;
    if (events) {
      ++events->impacts;
      events->max_impact_speed = std::max(events->max_impact_speed, speed);
    }
  }
}

void ball_frame(BallState& s, const BallParams& p, int substeps, BallEvents* events) {
  const double h = p.dt / substeps;
  for (int k = 0; k < substeps; ++k) ball_substep(s, p, h, events);
}

}  // namespace hwm::env
