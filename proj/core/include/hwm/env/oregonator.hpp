#pragma once

#include <array>
#include <vector>

#include "hwm/env/env.hpp"
#include "hwm/env/field.hpp"

namespace hwm::env {

/// Tyson kinetics: eps du/dt = u - u^2 - f v (u - q) / (u + q), dv/dt = u - v.
std::array<double, 2> tyson_rate(double u, double v, const OregonatorParams& p);

struct ImplicitEulerResult {
  double u, v;
  int iterations;
  double residual;
};

/// One implicit Euler step of size h for a single cell. v is eliminated
/// exactly, leaving a scalar equation in u solved by bracketed Newton. Throws
/// SolverError if the residual is not below 1e-10 after 50 iterations.
ImplicitEulerResult implicit_euler_cell(double u0, double v0, double h, const OregonatorParams& p);

/// Reaction over an interval of length h for one cell: implicit Euler at
/// 1, 2, 3, ... substeps combined by polynomial extrapolation in the step
/// size until successive diagonal entries agree to 1e-10; the interval is
/// halved if the table does not settle.
std::array<double, 2> react_cell(double u, double v, double h, const OregonatorParams& p);

/// Periodic FTCS diffusion of both channels over dt, with
/// ceil(dt / (0.25 dx^2 / D)) substeps. No-op for D == 0.
int diffuse(Field& s, double dt, const OregonatorParams& p);

/// One Strang-split frame: R(dt/2), Diff(dt), R(dt/2).
void oregonator_frame(Field& s, const OregonatorParams& p, double dt);

/// Non-trivial homogeneous fixed point (u*, v* = u*) by bisection on (q, 1).
std::array<double, 2> oregonator_fixed_point(const OregonatorParams& p);

/// One period of the homogeneous limit cycle sampled at `samples` phases, or
/// empty if the kinetics do not oscillate for these parameters.
std::vector<std::array<double, 2>> oregonator_limit_cycle(const OregonatorParams& p, std::size_t samples);

}  // namespace hwm::env
