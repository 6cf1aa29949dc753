#pragma once

#include <array>

#include "hwm/env/env.hpp"
#include "hwm/env/field.hpp"

namespace hwm::env {

/// Conserved variables (rho, rho u, rho v, E).
using Cons = std::array<double, 4>;

enum class Axis { X, Y };

double pressure(const Cons& q, double gamma);
Cons conserved(double rho, double u, double v, double p, double gamma);

/// Physical flux F(q) along the axis.
Cons physical_flux(const Cons& q, Axis axis, double gamma);

/// HLL flux with Davis wave-speed estimates. Throws SolverError on a
/// non-physical input state.
Cons hll_flux(const Cons& qL, const Cons& qR, Axis axis, double gamma);

/// Largest stable step: cfl * min(dx / (|u| + c), dy / (|v| + c)).
double euler_cfl_dt(const Field& q, const EulerParams& p);

/// One unsplit first-order Godunov step of size min(cfl dt, dt_limit) on the
/// unit square. Returns the step taken; aborts with diagnostics if a cell
/// loses positive density or pressure.
double euler_step(Field& q, const EulerParams& p, double dt_limit);

/// Advance exactly one frame interval (the last step is clipped). With
/// split > 1 every standard internal step is taken as `split` equal parts.
/// Returns the number of internal steps.
int euler_frame(Field& q, const EulerParams& p, int split = 1);

/// Throws SolverError naming the first cell with rho <= 0 or p <= 0.
void check_physical(const Field& q, double gamma, const char* context);

/// Background energy density used by the point-blast initial condition.
inline constexpr double kSedovBackgroundEnergy = 0x1.0p-12;

/// Uniform rho_bg at rest; e0 deposited uniformly over the central 2 x 2 cells
/// on top of the background energy, so that sum((E - E_bg) dA) = e0.
Field sedov_field(std::size_t grid, double e0, double rho_bg);

/// Primitive state of one quadrant: (rho, u, v, p).
struct Primitive {
  double rho, u, v, p;
};

/// Quadrants in the usual order (upper right, upper left, lower left, lower
/// right) for Schulz-Rinne configurations 3, 4, 6 and 12.
std::array<Primitive, 4> quadrant_config(int config);

/// Four-quadrant Riemann problem with the interface crossing at (xc, yc).
Field quadrant_field(std::size_t grid, int config, double xc, double yc, double gamma);

}  // namespace hwm::env
