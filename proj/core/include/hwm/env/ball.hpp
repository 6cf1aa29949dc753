#pragma once

#include <array>

#include "hwm/env/env.hpp"

namespace hwm::env {

/// (x, y, z, vx, vy, vz, wx, wy, wz); gravity acts on z.
using BallState = std::array<double, 9>;

struct BallEvents {
  int impacts = 0;
  /// Largest incoming normal speed over the frame's wall impacts.
  double max_impact_speed = 0.0;
};

/// Kinetic plus potential energy per unit mass, |g| z measured from the floor.
double ball_energy(const BallState& s, double gravity);

/// One substep of size h: v += g h, x += v h, then walls resolved in axis
/// order x, y, z. A crossing clamps the coordinate to the wall and sets the
/// outgoing normal speed to restitution times the speed the ballistic arc
/// from the substep's start would have at the wall.
void ball_substep(BallState& s, const BallParams& p, double h, BallEvents* events = nullptr);

/// One frame of `substeps` substeps.
void ball_frame(BallState& s, const BallParams& p, int substeps, BallEvents* events = nullptr);

}  // namespace hwm::env
