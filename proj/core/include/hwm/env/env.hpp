#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hwm/nn/tensor.hpp"
#include "hwm/util/rng.hpp"

namespace hwm::env {

/// Physical state: C x H x W field for the PDEs, a 9-vector for the ball.
using State = nn::Tensor<float>;

enum class EnvId : std::uint8_t { Oregonator = 0, Euler = 1, Ball = 2 };

std::string to_string(EnvId id);
EnvId env_from_string(const std::string& name);

/// Raised when a solver produces or is handed a non-physical state.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OregonatorParams {
  double eps = 0.05;
  double q = 0.002;
  double f = 2.0;
  double D = 1.0;
  double dt = 0.05;
  double dx = 0.5;
  std::size_t grid = 64;
};

enum class Boundary { Transmissive, Periodic };

struct EulerParams {
  double gamma = 1.4;
  double cfl = 0.4;
  double dt_frame = 2e-3;
  Boundary bc = Boundary::Transmissive;
  std::size_t grid = 64;
};

struct BallParams {
  double gravity = -9.81;
  double restitution = 0.8;
  int substeps = 50;
  double dt = 0.01;
};

using EnvParams = std::variant<OregonatorParams, EulerParams, BallParams>;

EnvId env_of(const EnvParams& p);
nn::Shape state_shape(const EnvParams& p);
double frame_dt(const EnvParams& p);
void validate(const EnvParams& p);

/// Named scalar parameters, in the order they are written to trajectory files.
using ParamList = std::vector<std::pair<std::string, double>>;

ParamList to_param_list(const EnvParams& p);
/// Rebuilds solver params from a list; unknown names are ignored so that
/// initial-condition entries can share the list.
EnvParams params_from_list(EnvId id, const ParamList& list, std::size_t grid);
double param_value(const ParamList& list, const std::string& name);

/// Leg used by the solver: Half halves the internal step (each Euler step in
/// two, ball substeps x 2, Oregonator frame split in two).
enum class Resolution { Standard, Half };

/// Advance `frames` frames. Each frame starts from the float32 state of the
/// previous one, so advance(s, a + b) == advance(advance(s, a), b) bitwise.
State advance(const EnvParams& p, const State& s, int frames, Resolution res = Resolution::Standard);

struct Trajectory {
  EnvId env = EnvId::Ball;
  double dt = 0.0;
  ParamList params;
  std::vector<State> frames;

  std::size_t length() const noexcept { return frames.size(); }
};

/// frames[0] = ic, frames[i + 1] = advance(frames[i], 1).
Trajectory rollout(const EnvParams& p, const State& ic, int frames);

/// How an initial state is built. Kinds: oregonator {spiral, target, random},
/// euler {sedov, quadrant}, ball {default}.
struct InitialCondition {
  std::string kind;
  double e0 = 1.0;
  double rho_bg = 1.0;
  int config = 3;
  double xc = 0.5;
  double yc = 0.5;
};

State make_initial(const EnvParams& p, const InitialCondition& ic, Rng& rng);

}  // namespace hwm::env
